"""Classical (energy-diagonal) state conversion under Gibbs-stochastic maps.

Two independent routes decide single-shot convertibility and are kept
deliberately separate so they can cross-check each other:

  * thermomajorizes: compare Lorenz curves relative to the Gibbs weights
    (beta-ordering, piecewise-linear curve, all breakpoints);
  * gibbs_stochastic_feasible: explicit LP for a column-stochastic T >= 0
    with T g = g and T p = q.

Also builds the lifted classical target of a coherent state: the diagonal
state whose eigenvalue ladder a shift-compensated rotation turns into the
coherent target exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.sparse

from .config import LatticeWindowError, NumericRangeError
from .modes import IntegerBasis
from .qstate import DensityOperator, EnergyVector

__all__ = [
    "ClassicalState",
    "ClassicalTargetPlan",
    "thermomajorizes",
    "gibbs_stochastic_feasible",
    "gibbs_stochastic_nearest",
    "apply_classical_map",
    "build_classical_target",
]

LP_RESIDUAL_TOL = 1e-8
LP_NONNEG_TOL = 1e-10
_MAX_EXPONENT = 700.0


@dataclass
class ClassicalState:
    """Probability vector over energy levels (EnergyVector per entry)."""

    probs: np.ndarray
    energies: tuple[EnergyVector, ...]

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.ndim != 1 or len(self.probs) != len(self.energies):
            raise ValueError("probs and energies lengths differ")
        if self.probs.min() < -1e-12:
            raise ValueError(f"negative probability {self.probs.min():.3e}")
        if abs(self.probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {self.probs.sum()}, not 1")

    @classmethod
    def from_diagonal(cls, state: DensityOperator) -> "ClassicalState":
        off = state.matrix - np.diag(np.diag(state.matrix))
        if np.abs(off).max() > 1e-9:
            raise ValueError("state has off-diagonal elements; not classical")
        return cls(np.real(np.diag(state.matrix)), tuple(state.energy_vectors()))

    def gibbs_weights(self, beta: float) -> np.ndarray:
        vals = np.array([ev.value() for ev in self.energies])
        shifted = vals - vals.min()
        if (beta * shifted).max() > _MAX_EXPONENT:
            raise NumericRangeError("beta * energy span exceeds exp range")
        w = np.exp(-beta * shifted)
        return w / w.sum()

    def free_energy_gap(self, beta: float) -> float:
        """D(p || g) in nats = beta * (F(p) - F(tau)); +inf off Gibbs support is impossible here."""
        g = self.gibbs_weights(beta)
        nz = self.probs > 0
        return float(np.sum(self.probs[nz] * np.log(self.probs[nz] / g[nz])))


def _lorenz_curve(p: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Breakpoints of the Lorenz curve of p relative to g (beta-ordering).

    Levels sorted by p_i/g_i descending; returns cumulative (x, y) with
    x = partial sums of g, y = partial sums of p, starting at (0, 0).
    """
    ratio = np.where(g > 0, p / np.where(g > 0, g, 1.0), np.inf)
    order = np.argsort(-ratio, kind="stable")
    x = np.concatenate([[0.0], np.cumsum(g[order])])
    y = np.concatenate([[0.0], np.cumsum(p[order])])
    return x, y


def thermomajorizes(p: ClassicalState, q: ClassicalState, beta: float,
                    slack: float = 1e-10) -> bool:
    """Whether p's Lorenz curve relative to Gibbs lies on/above q's everywhere.

    Both states must share the same energy list. The curves are concave
    piecewise-linear, so it suffices to compare at the union of breakpoints.
    """
    if p.energies != q.energies:
        raise ValueError("states must share one energy list (map levels first)")
    g = p.gibbs_weights(beta)
    xp, yp = _lorenz_curve(p.probs, g)
    xq, yq = _lorenz_curve(q.probs, g)
    xs = np.union1d(xp, xq)
    p_at = np.interp(xs, xp, yp)
    q_at = np.interp(xs, xq, yq)
    return bool(np.all(p_at >= q_at - slack))


def thermomajorization_witness(p: ClassicalState, q: ClassicalState, beta: float
                               ) -> dict | None:
    """The most violated curve point, or None when p thermomajorizes q."""
    g = p.gibbs_weights(beta)
    xp, yp = _lorenz_curve(p.probs, g)
    xq, yq = _lorenz_curve(q.probs, g)
    xs = np.union1d(xp, xq)
    gap = np.interp(xs, xp, yp) - np.interp(xs, xq, yq)
    k = int(np.argmin(gap))
    if gap[k] >= -1e-10:
        return None
    return {"x": float(xs[k]), "p_curve": float(np.interp(xs[k], xp, yp)),
            "q_curve": float(np.interp(xs[k], xq, yq)), "violation": float(-gap[k])}


def _stochastic_constraints(g: np.ndarray, p: np.ndarray, q: np.ndarray):
    """Equality system for vec(T): columns sum to 1, T g = g, T p = q."""
    d = len(g)
    n = d * d
    rows = []
    rhs = []
    # column sums: sum_i T[i, j] = 1
    col = scipy.sparse.kron(scipy.sparse.eye(d), np.ones((1, d)))
    # T g = g and T p = q: sum_j w_j T[i, j]; vec order T[i, j] = x[j * d + i]
    gw = scipy.sparse.kron(g[None, :], scipy.sparse.eye(d))
    pw = scipy.sparse.kron(p[None, :], scipy.sparse.eye(d))
    a_eq = scipy.sparse.vstack([col, gw, pw], format="csc")
    b_eq = np.concatenate([np.ones(d), g, q])
    return a_eq, b_eq, n


def _extract_t(x: np.ndarray, d: int) -> np.ndarray:
    # vec order: x[j * d + i] = T[i, j]
    return x[: d * d].reshape(d, d, order="F")


def _residuals(t: np.ndarray, g: np.ndarray, p: np.ndarray, q: np.ndarray) -> dict:
    return {
        "column_sums": float(np.abs(t.sum(axis=0) - 1.0).max()),
        "gibbs_fixed_point": float(np.abs(t @ g - g).max()),
        "maps_p_to_q": float(np.abs(t @ p - q).max()),
        "min_entry": float(t.min()),
    }


def gibbs_stochastic_feasible(p: ClassicalState, q: ClassicalState, beta: float
                              ) -> np.ndarray | None:
    """Find column-stochastic T >= 0 with T g = g, T p = q, or None.

    Feasibility LP (HiGHS). A returned T satisfies all equalities within 1e-8
    and entries >= -1e-10; anything worse is treated as infeasible.
    """
    if p.energies != q.energies:
        raise ValueError("states must share one energy list (map levels first)")
    g = p.gibbs_weights(beta)
    a_eq, b_eq, n = _stochastic_constraints(g, p.probs, q.probs)
    res = scipy.optimize.linprog(
        c=np.zeros(n), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        return None
    t = _extract_t(res.x, len(g))
    r = _residuals(t, g, p.probs, q.probs)
    if max(r["column_sums"], r["gibbs_fixed_point"], r["maps_p_to_q"]) > LP_RESIDUAL_TOL:
        return None
    if r["min_entry"] < -LP_NONNEG_TOL:
        return None
    return np.clip(t, 0.0, None)


def gibbs_stochastic_nearest(p: ClassicalState, q: ClassicalState, beta: float
                             ) -> tuple[np.ndarray, float]:
    """Gibbs-stochastic T minimizing || T p - q ||_1; returns (T, achieved L1).

    Exact conversion to a lifted coherent-target ladder is impossible in a
    single shot whenever p has full support and q does not (T g = g forces
    every column to feed the full Gibbs support), so the conversion step runs
    this LP and reports the achieved error honestly.
    """
    if p.energies != q.energies:
        raise ValueError("states must share one energy list (map levels first)")
    g = p.gibbs_weights(beta)
    d = len(g)
    n = d * d
    # variables: vec(T) then s (elementwise slack >= |T p - q|)
    col = scipy.sparse.kron(scipy.sparse.eye(d), np.ones((1, d)))
    gw = scipy.sparse.kron(g[None, :], scipy.sparse.eye(d))
    a_eq = scipy.sparse.hstack(
        [scipy.sparse.vstack([col, gw]), scipy.sparse.csc_matrix((2 * d, d))], format="csc")
    b_eq = np.concatenate([np.ones(d), g])
    pw = scipy.sparse.kron(p.probs[None, :], scipy.sparse.eye(d))
    eye = scipy.sparse.eye(d)
    a_ub = scipy.sparse.vstack(
        [scipy.sparse.hstack([pw, -eye]), scipy.sparse.hstack([-pw, -eye])], format="csc")
    b_ub = np.concatenate([q.probs, -q.probs])
    c = np.concatenate([np.zeros(n), np.ones(d)])
    res = scipy.optimize.linprog(c=c, A_eq=a_eq, b_eq=b_eq, A_ub=a_ub, b_ub=b_ub,
                                 bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"nearest-map LP failed: {res.message}")
    t = np.clip(_extract_t(res.x, d), 0.0, None)
    err = float(np.abs(t @ p.probs - q.probs).sum())
    return t, err


def apply_classical_map(t: np.ndarray, p: ClassicalState) -> ClassicalState:
    """q = T p on the same energy list."""
    t = np.asarray(t, dtype=float)
    if t.shape != (len(p.probs), len(p.probs)):
        raise ValueError(f"map shape {t.shape} does not fit state of length {len(p.probs)}")
    return ClassicalState(t @ p.probs, p.energies)


# ---------------------------------------------------------------------------
# lifted classical target of a coherent state


@dataclass
class PlanRow:
    """One eigenvector of the mu-copy target and its chosen classical level.

    support: indices into the mu-copy product basis with |f| > tol;
    amplitudes f; per-support-index integer shifts m (one row per ladder
    basis element); chosen classical energy; achieved per-ladder drift
    sum_c' m[:, c'] |f_c'|^2, in (0, 1] by construction.
    """

    eigenvalue: float
    support: tuple[int, ...]
    amplitudes: np.ndarray
    shifts: np.ndarray  # (n_ladders, n_support) int
    energy: EnergyVector
    drift: np.ndarray   # (n_ladders,)


@dataclass
class ClassicalTargetPlan:
    """Eigen-ladder rotation plan: diagonal state + shift table per eigenvector."""

    rows: list[PlanRow]
    ladder_basis: IntegerBasis
    source_energies: tuple[EnergyVector, ...]  # mu-copy product basis energies
    mu: int

    def classical_state(self) -> ClassicalState:
        probs = np.array([r.eigenvalue for r in self.rows])
        return ClassicalState(probs, tuple(r.energy for r in self.rows))

    def spectrum(self) -> np.ndarray:
        return np.array(sorted((r.eigenvalue for r in self.rows), reverse=True))

    def max_abs_shift(self) -> int:
        if not self.rows or self.ladder_basis.elements == ():
            return 0
        return max((int(np.abs(r.shifts).max()) if r.shifts.size else 0) for r in self.rows)


def _enumerate_lattice(n: int, radius: int):
    """Integer tuples of dimension n by increasing l1 norm, lexicographic within a norm."""
    for r in range(radius + 1):
        batch = []
        for combo in itertools.product(range(-r, r + 1), repeat=n):
            if sum(abs(c) for c in combo) == r:
                batch.append(combo)
        batch.sort()
        yield from batch


def build_classical_target(rho_prime: DensityOperator, mu: int, ladder_basis: IntegerBasis,
                           radius: int = 8, support_tol: float = 1e-12
                           ) -> ClassicalTargetPlan:
    """Choose classical levels for the eigenvectors of rho'^(x)mu.

    For each eigenvector psi_j = sum_c' f_{jc'} |E_c'> (formed as products of
    single-copy eigenvectors, so degenerate product eigenvalues inherit a
    tensor-structured eigenbasis), pick the lattice point
    E_c[j] = E_ref + sum_l a_l * Delta_l whose window condition

        0 < sum_c' m_{jc'l} |f_{jc'}|^2 <= 1   for every ladder l,

    holds, where m_{jc'} decomposes E_c[j] - E_c' over the ladder basis.
    Enumerates integer tuples by increasing l1 norm (radius default 8,
    lexicographic tie-break); the window is a half-open unit interval per
    ladder so the first hit is the only hit.

    An incoherent target (every eigenvector supported on a single energy)
    short-circuits to m = 0 with E_c[j] the eigenvector's own energy.
    """
    if mu < 1:
        raise ValueError("mu must be >= 1")
    evals, evecs = np.linalg.eigh(rho_prime.matrix)
    energies_single = rho_prime.energy_vectors()
    d = rho_prime.dim
    n_lad = len(ladder_basis)

    # mu-fold products of single-copy eigenpairs
    energies_mu: list[EnergyVector] = []
    for combo in itertools.product(range(d), repeat=mu):
        total = energies_single[combo[0]]
        for c in combo[1:]:
            total = total + energies_single[c]
        energies_mu.append(total)

    rows: list[PlanRow] = []
    for combo in itertools.product(range(d), repeat=mu):
        lam = float(np.prod([evals[a] for a in combo]))
        if lam <= support_tol:
            continue
        vec = evecs[:, combo[0]]
        for a in combo[1:]:
            vec = np.kron(vec, evecs[:, a])
        support = tuple(int(i) for i in np.nonzero(np.abs(vec) > support_tol)[0])
        amps = vec[list(support)]
        sup_energies = [energies_mu[i] for i in support]
        weights = np.abs(amps) ** 2

        single_energy = all(ev == sup_energies[0] for ev in sup_energies)
        if single_energy:
            # incoherent eigenvector: no lift, no shifts
            rows.append(PlanRow(lam, support, amps, np.zeros((n_lad, len(support)), dtype=int),
                                sup_energies[0], np.zeros(n_lad)))
            continue
        if n_lad == 0:
            raise LatticeWindowError(
                "coherent eigenvector but empty ladder basis (source state has no modes)",
                violated_side="lower")

        ref = sup_energies[0]
        coords = np.zeros((n_lad, len(support)), dtype=np.int64)
        for k, ev in enumerate(sup_energies):
            dec = ladder_basis.decompose(ev - ref)
            if dec is None:
                raise LatticeWindowError(
                    f"eigenvector support energies are not congruent modulo the ladder basis "
                    f"(offset {ev - ref} not in the integer span)", violated_side="lower")
            coords[:, k] = dec
        mean_coord = coords @ weights

        chosen = None
        for a in _enumerate_lattice(n_lad, radius):
            drift = np.asarray(a, dtype=float) - mean_coord
            if np.all(drift > 1e-12) and np.all(drift <= 1.0 + 1e-12):
                chosen = np.asarray(a, dtype=np.int64)
                break
        if chosen is None:
            # the unique admissible tuple floor(mean)+1 lay outside the radius
            side = "upper" if np.any(mean_coord + 1 > radius) else "lower"
            raise LatticeWindowError(
                f"no lattice point within l1 radius {radius} satisfies the window "
                f"(mean support coordinate {mean_coord})", violated_side=side)
        energy = ref
        for l, elem in enumerate(ladder_basis.elements):
            energy = energy + int(chosen[l]) * elem
        shifts = chosen[:, None] - coords
        drift = shifts.astype(float) @ weights
        rows.append(PlanRow(lam, support, amps, shifts.astype(int), energy, drift))

    total = sum(r.eigenvalue for r in rows)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"retained eigenvalues sum to {total}; lower support_tol")
    return ClassicalTargetPlan(rows, ladder_basis, tuple(energies_mu), mu)
