import json
import math

import numpy as np
import pytest

from thermoops.cli import (
    dump_hamiltonian,
    dump_state,
    load_state,
    parse_and_dispatch,
)
from thermoops.qstate import DensityOperator, gibbs_state
from util import QUBIT, rand_state


def write_state(path, state):
    path.write_text(json.dumps(dump_state(state)))
    return str(path)


def qubit_json(tmp_path, name, matrix):
    state = DensityOperator(np.asarray(matrix, dtype=complex), [("S", QUBIT)])
    return write_state(tmp_path / name, state)


def run_cli(capsys, *args):
    code = parse_and_dispatch(list(args))
    out = capsys.readouterr().out
    return code, out


def report_of(out):
    doc = json.loads(out)
    assert set(doc) == {"report", "metadata"}
    assert doc["metadata"]["tool"] == "thermoops"
    return doc["report"]


def test_state_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    for _ in range(5):
        state = rand_state(rng, 2, QUBIT)
        path = write_state(tmp_path / "s.json", state)
        back = load_state(path, label=state.labels()[0])
        assert np.abs(back.matrix - state.matrix).max() < 1e-15
        assert back.subsystem(back.labels()[0]).energies() == QUBIT.energies()


def test_modes_incoherent_state(tmp_path, capsys):
    path = qubit_json(tmp_path, "diag.json", np.diag([0.3, 0.7]))
    code, out = run_cli(capsys, "modes", "--state", path)
    assert code == 0
    assert report_of(out)["modes"] == ["0"]


def test_modes_coherent_state(tmp_path, capsys):
    path = qubit_json(tmp_path, "plus.json", np.full((2, 2), 0.5))
    code, out = run_cli(capsys, "modes", "--state", path)
    assert code == 0
    assert report_of(out)["modes"] == ["-w", "0", "w"]


def test_reports_are_deterministic(tmp_path, capsys):
    path = qubit_json(tmp_path, "plus.json", np.full((2, 2), 0.5))
    outs = []
    for _ in range(2):
        code, out = run_cli(capsys, "channel", "random", "--state", path,
                            "--seed", "3")
        assert code == 0
        outs.append(json.dumps(json.loads(out)["report"], sort_keys=True))
    assert outs[0] == outs[1]


def test_channel_pinch_kills_coherence(tmp_path, capsys):
    path = qubit_json(tmp_path, "plus.json", np.full((2, 2), 0.5))
    code, out = run_cli(capsys, "channel", "pinch", "--state", path)
    assert code == 0
    rep = report_of(out)
    m = np.array([[complex(e[0], e[1]) for e in row] for row in rep["state"]["matrix"]])
    assert abs(m[0, 1]) < 1e-15
    assert abs(m[0, 0] - 0.5) < 1e-15


def test_walk_bound_default_spec(capsys):
    code, out = run_cli(capsys, "walk", "bound")
    assert code == 0
    rep = report_of(out)
    assert abs(rep["gamma"] - math.sqrt(1.0 / 3.0)) < 1e-10
    assert abs(rep["bound"] - 1.0 / (4.0 - math.sqrt(3.0))) < 1e-10


def test_walk_sim_within_bound(tmp_path, capsys):
    spec = {"probs": {"1": 0.75, "-1": 0.25}, "xi": 1}
    path = tmp_path / "walk.json"
    path.write_text(json.dumps(spec))
    code, out = run_cli(capsys, "walk", "sim", "--spec", str(path),
                        "--trajectories", "20000", "--seed", "2")
    assert code == 0
    rep = report_of(out)
    assert rep["within_bound"]
    assert abs(rep["estimate"] - 1.0 / 3.0) <= 4 * rep["stderr"]


def write_distribution(path, probs):
    doc = {"probs": probs, "hamiltonian": dump_hamiltonian(QUBIT)}
    path.write_text(json.dumps(doc))
    return str(path)


def test_classical_feasible_pair(tmp_path, capsys):
    src = write_distribution(tmp_path / "p.json", [0.9, 0.1])
    tgt = write_distribution(tmp_path / "q.json", [0.8, 0.2])
    code, out = run_cli(capsys, "classical", "feasible",
                        "--source", src, "--target", tgt)
    assert code == 0
    rep = report_of(out)
    assert rep["feasible"] and rep["thermomajorizes"]
    t = np.array(rep["map"])
    assert np.abs(t.sum(axis=0) - 1.0).max() < 1e-9


def test_classical_infeasible_exits_one(tmp_path, capsys):
    src = write_distribution(tmp_path / "p.json", [0.8, 0.2])
    tgt = write_distribution(tmp_path / "q.json", [0.9, 0.1])
    code, out = run_cli(capsys, "classical", "feasible",
                        "--source", src, "--target", tgt)
    assert code == 1
    rep = report_of(out)
    assert not rep["feasible"]
    assert rep["witness"] is not None


def test_catcoh_error_follows_resource_size(capsys):
    code, out = run_cli(capsys, "catcoh", "--L", "8", "--M", "6", "--steps", "2")
    assert code == 0
    rep = report_of(out)
    assert abs(rep["expected_first_error"] - 1.0 / 16.0) < 1e-15
    assert abs(rep["rows"][0]["error"] - 1.0 / 16.0) < 1e-12


def test_protocol_run_positive_pair(tmp_path, capsys):
    amp = math.sqrt(0.05)
    src = qubit_json(tmp_path, "rho.json",
                     np.outer([amp, math.sqrt(0.95)], [amp, math.sqrt(0.95)]))
    tau = gibbs_state(QUBIT, 1.0).matrix
    tgt = qubit_json(tmp_path, "rho_p.json", 0.6 * np.full((2, 2), 0.5) + 0.4 * tau)
    code, out = run_cli(capsys, "protocol", "run", "--source", src,
                        "--target", tgt, "--L", "32", "--M", "8")
    assert code == 0
    conv = report_of(out)["conversion"]
    assert conv["path"] == "level-assigned"
    assert conv["mean_marginal_distance"] <= 0.1


def test_protocol_refusal_exits_one(tmp_path, capsys):
    amp = math.sqrt(0.05)
    tau = gibbs_state(QUBIT, 1.0).matrix
    src = qubit_json(tmp_path, "rho_p.json", 0.6 * np.full((2, 2), 0.5) + 0.4 * tau)
    tgt = qubit_json(tmp_path, "rho.json",
                     np.outer([amp, math.sqrt(0.95)], [amp, math.sqrt(0.95)]))
    code, out = run_cli(capsys, "protocol", "run", "--source", src,
                        "--target", tgt, "--L", "16", "--M", "4",
                        "--allow-f-violation")
    assert code == 1


def test_malformed_json_exits_two(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"matrix": [[')
    code, _ = run_cli(capsys, "modes", "--state", str(path))
    assert code == 2


def test_unknown_field_exits_two(tmp_path, capsys):
    path = tmp_path / "bad.json"
    doc = dump_state(DensityOperator(np.diag([0.5, 0.5]), [("S", QUBIT)]))
    doc["extra"] = 1
    path.write_text(json.dumps(doc))
    code, _ = run_cli(capsys, "modes", "--state", str(path))
    assert code == 2


def test_bad_subcommand_exits_two(capsys):
    assert parse_and_dispatch(["frobnicate"]) == 2


def test_output_file_and_csv(tmp_path, capsys):
    out_path = tmp_path / "steps.csv"
    code, _ = run_cli(capsys, "catcoh", "--L", "8", "--M", "6", "--steps", "3",
                      "--format", "csv", "--output", str(out_path))
    assert code == 0
    lines = out_path.read_text().strip().splitlines()
    assert len(lines) == 4  # header + one row per step
    assert lines[0] == "step,error,edge_mass,resource_mean_energy"


def test_csv_rejected_for_nested_report(tmp_path, capsys):
    path = qubit_json(tmp_path, "diag.json", np.diag([0.3, 0.7]))
    code, _ = run_cli(capsys, "modes", "--state", path, "--format", "csv")
    assert code == 2
