"""Command-line front end: JSON in, JSON (or CSV sweep tables) out.

Exit codes: 0 success, 1 domain failure (infeasible conversion, violated
invariant), 2 usage error (bad flags, malformed or off-schema JSON).

File formats. A state file carries a Hamiltonian and a density matrix:

    {
      "hamiltonian": {
        "basis": {"names": ["w"], "values": [1.0]},
        "levels": [{"coeffs": ["0"]}, {"coeffs": ["1"], "degeneracy": 1}]
      },
      "matrix": [[[0.5, 0.0], [0.5, 0.0]], [[0.5, 0.0], [0.5, 0.0]]]
    }

Level coefficients are exact rationals ("3/2" strings, integers); matrix
entries are [re, im] pairs, row-major, one row list per basis index. A walk
file is {"probs": {"-1": 0.25, "1": 0.75}, "xi": 1}; a distribution file is
{"probs": [...], "hamiltonian": {...}}.

Reports are JSON objects {"report": ..., "metadata": ...}; everything under
"report" is deterministic for a fixed config and seed (keys sorted, floats
via repr), while "metadata" carries the timestamp and version and is
excluded from byte-identity.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import io
import json
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from .catcoherence import apply_with_resource, hadamard_rows, build_shift_unitary, \
    make_resource, reuse_sequence
from .channels import ThermalOperationSpec, apply_thermal, pinching, \
    random_energy_conserving_unitary
from .classical import ClassicalState, apply_classical_map, gibbs_stochastic_feasible, \
    gibbs_stochastic_nearest, thermomajorization_witness, thermomajorizes
from .config import ThermoOpsError
from .modes import coherent_modes, condition_holds, independent_basis
from .protocol import ProtocolConfig, build_catalyst, run_catalytic_step, \
    run_marginal_conversion
from .qstate import DensityOperator, EnergyVector, FrequencyBasis, HamiltonianSpec, \
    free_energy, gibbs_state
from .randomwalk import WalkSpec, hitting_bound, simulate_hitting, solve_gamma

__all__ = ["main", "parse_and_dispatch", "emit_report", "load_state", "dump_state"]


class SchemaError(ValueError):
    """Input JSON parsed but does not fit the expected shape."""


# -- schema validation (jsonschema, unknown fields rejected) -----------------

_BASIS_SCHEMA = {
    "type": "object",
    "properties": {
        "names": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
    },
    "required": ["names", "values"],
    "additionalProperties": False,
}

_LEVEL_SCHEMA = {
    "type": "object",
    "properties": {
        "coeffs": {"type": "array",
                   "items": {"type": ["string", "integer"]}, "minItems": 1},
        "degeneracy": {"type": "integer", "minimum": 1},
    },
    "required": ["coeffs"],
    "additionalProperties": False,
}

_HAMILTONIAN_SCHEMA = {
    "type": "object",
    "properties": {
        "basis": _BASIS_SCHEMA,
        "levels": {"type": "array", "items": _LEVEL_SCHEMA, "minItems": 1},
    },
    "required": ["basis", "levels"],
    "additionalProperties": False,
}

_ENTRY_SCHEMA = {
    "type": "array",
    "items": {"type": "number"},
    "minItems": 2,
    "maxItems": 2,
}

_STATE_SCHEMA = {
    "type": "object",
    "properties": {
        "hamiltonian": _HAMILTONIAN_SCHEMA,
        "matrix": {"type": "array",
                   "items": {"type": "array", "items": _ENTRY_SCHEMA}},
    },
    "required": ["hamiltonian", "matrix"],
    "additionalProperties": False,
}

_WALK_SCHEMA = {
    "type": "object",
    "properties": {
        "probs": {"type": "object",
                  "patternProperties": {r"^-?\d+$": {"type": "number"}},
                  "additionalProperties": False, "minProperties": 1},
        "xi": {"type": "integer", "minimum": 1},
    },
    "required": ["probs", "xi"],
    "additionalProperties": False,
}

_DIST_SCHEMA = {
    "type": "object",
    "properties": {
        "probs": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "hamiltonian": _HAMILTONIAN_SCHEMA,
    },
    "required": ["probs", "hamiltonian"],
    "additionalProperties": False,
}


def _validate(obj, schema, where: str):
    import jsonschema

    try:
        jsonschema.validate(obj, schema)
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path) or "(root)"
        raise SchemaError(f"{where}: at {path}: {e.message}") from None


# -- (de)serialization -------------------------------------------------------


def parse_hamiltonian(obj: dict, where: str = "hamiltonian") -> HamiltonianSpec:
    _validate(obj, _HAMILTONIAN_SCHEMA, where)
    basis = FrequencyBasis(tuple(float(v) for v in obj["basis"]["values"]),
                           tuple(obj["basis"]["names"]))
    levels = []
    for lev in obj["levels"]:
        coeffs = tuple(Fraction(str(c)) for c in lev["coeffs"])
        levels.append((EnergyVector(coeffs, basis), int(lev.get("degeneracy", 1))))
    return HamiltonianSpec(tuple(levels))


def dump_hamiltonian(h: HamiltonianSpec) -> dict:
    return {
        "basis": {"names": list(h.basis.names), "values": list(h.basis.values)},
        "levels": [{"coeffs": [str(c) for c in ev.coeffs], "degeneracy": deg}
                   for ev, deg in h.levels],
    }


def load_state(path: str, label: str = "S") -> DensityOperator:
    obj = _read_json(path)
    _validate(obj, _STATE_SCHEMA, path)
    h = parse_hamiltonian(obj["hamiltonian"], f"{path}: hamiltonian")
    rows = obj["matrix"]
    d = h.dim
    if len(rows) != d or any(len(r) != d for r in rows):
        raise SchemaError(f"{path}: matrix must be {d}x{d} to match the hamiltonian")
    mat = np.array([[complex(e[0], e[1]) for e in row] for row in rows])
    return DensityOperator(mat, [(label, h)])


def dump_state(state: DensityOperator) -> dict:
    if len(state.system) != 1:
        raise ValueError("only single-subsystem states are serialized")
    return {
        "hamiltonian": dump_hamiltonian(state.system[0][1]),
        "matrix": [[[float(e.real), float(e.imag)] for e in row]
                   for row in state.matrix],
    }


def load_walk(path: str) -> WalkSpec:
    obj = _read_json(path)
    _validate(obj, _WALK_SCHEMA, path)
    return WalkSpec({int(k): float(v) for k, v in obj["probs"].items()}, int(obj["xi"]))


def load_distribution(path: str) -> ClassicalState:
    obj = _read_json(path)
    _validate(obj, _DIST_SCHEMA, path)
    h = parse_hamiltonian(obj["hamiltonian"], f"{path}: hamiltonian")
    probs = np.array(obj["probs"], dtype=float)
    if len(probs) != h.dim:
        raise SchemaError(f"{path}: probs length {len(probs)} does not match dim {h.dim}")
    return ClassicalState(probs, tuple(h.energies()))


def _read_json(path: str):
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise SchemaError(f"{path}: {e.strerror or e}") from None
    except json.JSONDecodeError as e:
        raise SchemaError(
            f"{path}: malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}"
        ) from None


# -- report emission ---------------------------------------------------------


def emit_report(report: dict, fmt: str = "json", path: str | None = None) -> None:
    """Wrap a report with metadata and write it to path or stdout.

    JSON is canonical (sorted keys); CSV is only for flat tables, i.e. a
    report carrying a "rows" list of flat dicts.
    """
    if fmt == "json":
        envelope = {
            "report": report,
            "metadata": {
                "tool": "thermoops",
                "version": __version__,
                "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            },
        }
        text = json.dumps(envelope, sort_keys=True, indent=2) + "\n"
    elif fmt == "csv":
        rows = report.get("rows")
        if not isinstance(rows, list) or not rows or not all(isinstance(r, dict) for r in rows):
            raise SchemaError("csv format applies only to flat sweep tables")
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
        text = buf.getvalue()
    else:
        raise SchemaError(f"unknown format {fmt!r}")
    if path:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _mode_names(modes) -> list[str]:
    return [str(ev) for ev in sorted(modes, key=lambda ev: (ev.value(), str(ev)))]


# -- subcommand handlers ------------------------------------------------------


def _cmd_modes(args) -> int:
    state = load_state(args.state)
    modes = coherent_modes(state, mag_threshold=args.threshold)
    emit_report({"modes": _mode_names(modes)}, args.format, args.output)
    return 0


def _cmd_channel(args) -> int:
    state = load_state(args.state)
    if args.action == "pinch":
        out = pinching(state)
        report = {"action": "pinch", "state": dump_state(out),
                  "modes_in": _mode_names(coherent_modes(state)),
                  "modes_out": _mode_names(coherent_modes(out))}
        emit_report(report, args.format, args.output)
        return 0
    # random: a seeded Haar-per-shell thermal operation on state (x) env
    h = state.system[0][1]
    env = parse_hamiltonian(_read_json(args.env), args.env) if args.env else h
    rng = np.random.default_rng(args.seed)
    totals = [a + b for a in h.energies() for b in env.energies()]
    u = random_energy_conserving_unitary(totals, rng)
    spec = ThermalOperationSpec(system=h, env=env, beta=args.beta, unitary=u)
    out = apply_thermal(spec, state)
    report = {
        "action": "random",
        "seed": args.seed,
        "beta": args.beta,
        "free_energy_in": free_energy(state, args.beta),
        "free_energy_out": free_energy(out, args.beta),
        "modes_in": _mode_names(coherent_modes(state)),
        "modes_out": _mode_names(coherent_modes(out)),
        "state": dump_state(out),
    }
    emit_report(report, args.format, args.output)
    return 0


def _cmd_classical(args) -> int:
    p = load_distribution(args.source)
    q = load_distribution(args.target)
    if p.energies != q.energies:
        raise SchemaError("source and target must share one hamiltonian")
    majorizes = thermomajorizes(p, q, args.beta)
    if args.action == "feasible":
        t = gibbs_stochastic_feasible(p, q, args.beta)
        report = {
            "action": "feasible",
            "beta": args.beta,
            "thermomajorizes": majorizes,
            "feasible": t is not None,
        }
        if t is None:
            report["witness"] = thermomajorization_witness(p, q, args.beta)
            emit_report(report, args.format, args.output)
            return 1
        report["map"] = [[float(x) for x in row] for row in t]
        emit_report(report, args.format, args.output)
        return 0
    t, err = gibbs_stochastic_nearest(p, q, args.beta)
    reached = apply_classical_map(t, p)
    report = {
        "action": "nearest",
        "beta": args.beta,
        "thermomajorizes": majorizes,
        "error_l1": float(err),
        "map": [[float(x) for x in row] for row in t],
        "reached": [float(x) for x in reached.probs],
    }
    emit_report(report, args.format, args.output)
    return 0


def _cmd_catcoh(args) -> int:
    # Hadamard on a resonant qubit, one fresh ground-state probe per step
    basis = FrequencyBasis.single(1.0, "w")
    h = HamiltonianSpec.qubit(basis)
    ladder = HamiltonianSpec.ladder(basis, args.truncation or (args.M + args.L + args.steps + 8))
    ibasis = independent_basis([EnergyVector.unit(basis)])
    rows = hadamard_rows(h, ibasis)
    u = build_shift_unitary(rows, h, (ladder,))
    resource = make_resource(args.L, args.M, EnergyVector.unit(basis),
                             ladder.dim, label="Q0")
    ground = np.zeros((2, 2), dtype=complex)
    ground[0, 0] = 1.0
    probes = [DensityOperator(ground.copy(), [("S", h)]) for _ in range(args.steps)]
    steps, _ = reuse_sequence(u, probes, resource)
    rows_out = [{"step": s["step"], "error": s["error_to_target"],
                 "edge_mass": s["edge_mass"],
                 "resource_mean_energy": s["resource_mean_energy"]} for s in steps]
    report = {
        "gate": "hadamard",
        "L": args.L, "M": args.M, "steps": args.steps,
        "truncation": ladder.dim,
        "expected_first_error": 1.0 / (2.0 * args.L),
        "rows": rows_out,
    }
    emit_report(report, args.format, args.output)
    return 0


def _cmd_walk(args) -> int:
    if args.spec:
        spec = load_walk(args.spec)
    else:
        spec = WalkSpec({1: 0.75, -1: 0.25}, xi=1)
    if args.action == "bound":
        gamma = solve_gamma(spec)
        info = hitting_bound(spec, gamma)
        emit_report({"gamma": gamma, "bound": info["bound"],
                     "gamma_pow_xi": info["gamma_pow_xi"],
                     "drift": info["drift"], "xi": spec.xi},
                    args.format, args.output)
        return 0
    est = simulate_hitting(spec, trajectories=args.trajectories, seed=args.seed,
                           horizon=args.horizon)
    info = hitting_bound(spec)
    report = {
        "estimate": est.estimate,
        "stderr": est.stderr,
        "bound": info["bound"],
        "gamma": info["gamma"],
        "trajectories": est.trajectories,
        "horizon": est.horizon,
        "escaped_mass": est.escaped_mass,
        "backend": est.backend,
        "seed": args.seed,
        "within_bound": est.estimate <= info["bound"] + 3 * est.stderr,
    }
    emit_report(report, args.format, args.output)
    return int(not report["within_bound"])


def _cmd_protocol(args) -> int:
    rho = load_state(args.source)
    rho_p = load_state(args.target)
    cfg = ProtocolConfig(
        rho=rho, rho_prime=rho_p, beta=args.beta, mu=args.mu, nu=args.nu,
        L=args.L, M=args.M, seed=args.seed,
        classical_error_budget=args.classical_budget,
        target_perturbation=args.perturb_target,
        allow_free_energy_violation=args.allow_f_violation,
    )
    xi, report = run_marginal_conversion(cfg)
    body = {"seed": args.seed, "conversion": report.to_dict()}
    if args.action == "catalyst":
        catalyst = build_catalyst(cfg, report, pad=args.pad)
        sys_out, _, info = run_catalytic_step(cfg, catalyst)
        body["catalyst"] = {"n": catalyst.n, "pad": catalyst.pad, **info}
    emit_report(body, args.format, args.output)
    return 0


# -- dispatcher ---------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermoops",
        description="Thermal-operation state conversion at desk scale.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--format", choices=["json", "csv"], default="json")
        p.add_argument("--output", "-o", default=None, help="write report here instead of stdout")

    p = sub.add_parser("modes", help="coherent modes of a state")
    p.add_argument("--state", required=True)
    p.add_argument("--threshold", type=float, default=1e-12)
    common(p)
    p.set_defaults(handler=_cmd_modes)

    p = sub.add_parser("channel", help="apply pinching or a seeded random thermal operation")
    p.add_argument("action", choices=["pinch", "random"])
    p.add_argument("--state", required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--env", default=None, help="environment hamiltonian JSON (default: system's)")
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(handler=_cmd_channel)

    p = sub.add_parser("classical", help="Gibbs-stochastic conversion between distributions")
    p.add_argument("action", choices=["feasible", "nearest"])
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--beta", type=float, default=1.0)
    common(p)
    p.set_defaults(handler=_cmd_classical)

    p = sub.add_parser("catcoh", help="Hadamard-via-resource demo with reuse")
    p.add_argument("--L", type=int, default=32)
    p.add_argument("--M", type=int, default=40)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--truncation", type=int, default=None)
    common(p)
    p.set_defaults(handler=_cmd_catcoh)

    p = sub.add_parser("walk", help="hitting bound or Monte Carlo estimate")
    p.add_argument("action", choices=["bound", "sim"])
    p.add_argument("--spec", default=None, help="walk JSON (default: p+ = 3/4 nearest neighbor)")
    p.add_argument("--trajectories", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=None)
    common(p)
    p.set_defaults(handler=_cmd_walk)

    p = sub.add_parser("protocol", help="end-to-end conversion, optionally wrapped in a catalyst")
    p.add_argument("action", choices=["run", "catalyst"])
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--mu", type=int, default=1)
    p.add_argument("--nu", type=int, default=1)
    p.add_argument("--L", type=int, default=64)
    p.add_argument("--M", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pad", type=int, default=None)
    p.add_argument("--classical-budget", type=float, default=0.25)
    p.add_argument("--perturb-target", type=float, default=None)
    p.add_argument("--allow-f-violation", action="store_true")
    common(p)
    p.set_defaults(handler=_cmd_protocol)
    return parser


def parse_and_dispatch(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.handler(args)
    except SchemaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ThermoOpsError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
