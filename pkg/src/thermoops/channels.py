"""Thermal operations: Gibbs-coupled unitary dilations and their certificates.

A thermal operation is Lambda(rho) = Tr_E[ V (rho (x) tau_E) V^dag ] with V an
energy-conserving unitary (or isometry) on system + environment and tau_E the
environment Gibbs state at the shared inverse temperature. The checks here are
numeric certificates: intertwining residual, Gibbs fixed point, and time
covariance against the free evolutions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .config import TOLERANCES, EnergyConservationError, ResourceLimitError, max_dim
from .qstate import (
    DensityOperator,
    EnergyVector,
    HamiltonianSpec,
    gibbs_state,
    trace_distance,
)

__all__ = [
    "ThermalOperationSpec",
    "apply_thermal",
    "pinching",
    "check_energy_conserving",
    "check_gibbs_preserving",
    "check_covariant",
    "random_energy_conserving_unitary",
    "energy_shells",
]


def energy_shells(energies: Sequence[EnergyVector]) -> dict[EnergyVector, list[int]]:
    """Group basis indices by exact total EnergyVector."""
    shells: dict[EnergyVector, list[int]] = {}
    for i, ev in enumerate(energies):
        shells.setdefault(ev, []).append(i)
    return shells


def check_energy_conserving(v: np.ndarray, h_in: np.ndarray | Sequence[float],
                            h_out: np.ndarray | Sequence[float] | None = None) -> float:
    """Intertwining residual max |V H_in - H_out V| (entrywise).

    H arguments may be diagonal matrices or plain energy arrays; h_out
    defaults to h_in.
    """
    v = np.asarray(v, dtype=complex)
    def as_diag(h):
        h = np.asarray(h)
        return np.diag(h.astype(complex)) if h.ndim == 1 else h.astype(complex)
    hi = as_diag(h_in)
    ho = hi if h_out is None else as_diag(h_out)
    return float(np.abs(v @ hi - ho @ v).max())


@dataclass
class ThermalOperationSpec:
    """A system+environment energy-conserving unitary at inverse temperature beta.

    ``system_out`` defaults to ``system``; when it differs, the total in/out
    dimensions must match (the coupling unitary is square in this artifact).
    Construction validates the intertwining residual against tol 1e-9.
    """

    system: HamiltonianSpec
    env: HamiltonianSpec
    beta: float
    unitary: np.ndarray
    system_out: HamiltonianSpec | None = None

    def __post_init__(self):
        self.unitary = np.asarray(self.unitary, dtype=complex)
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        h_out = self.system_out or self.system
        d_in = self.system.dim * self.env.dim
        d_out = h_out.dim * self.env.dim
        if d_in != d_out:
            raise ValueError(f"in/out total dimensions differ: {d_in} vs {d_out}")
        if d_in > max_dim():
            raise ResourceLimitError(f"coupling dimension {d_in} exceeds cap {max_dim()}")
        if self.unitary.shape != (d_in, d_in):
            raise ValueError(f"unitary shape {self.unitary.shape}, expected {(d_in, d_in)}")
        uni = np.abs(self.unitary.conj().T @ self.unitary - np.eye(d_in)).max()
        if uni > 1e-9:
            raise ValueError(f"coupling matrix is not unitary: residual {uni:.3e}")
        resid = check_energy_conserving(self.unitary, self.total_energies_in(),
                                        self.total_energies_out())
        if resid > TOLERANCES.energy_cons:
            raise EnergyConservationError(
                f"coupling violates energy conservation: residual {resid:.3e}")

    def total_energies_in(self) -> np.ndarray:
        return np.add.outer(self.system.values(), self.env.values()).ravel()

    def total_energies_out(self) -> np.ndarray:
        h_out = self.system_out or self.system
        return np.add.outer(h_out.values(), self.env.values()).ravel()

    def env_gibbs(self) -> DensityOperator:
        return gibbs_state(self.env, self.beta, label="_E")


def apply_thermal(spec: ThermalOperationSpec, state: DensityOperator) -> DensityOperator:
    """Tr_E[ V (rho (x) tau_E) V^dag ] on the operation's output system."""
    if state.dim != spec.system.dim:
        raise ValueError(f"state dim {state.dim} does not match the operation's system dim {spec.system.dim}")
    if not np.allclose(state.energy_values(), spec.system.values(), atol=1e-12):
        raise ValueError("state energies do not match the operation's input system levels")
    tau = spec.env_gibbs()
    joint = np.kron(state.matrix, tau.matrix)
    evolved = spec.unitary @ joint @ spec.unitary.conj().T
    h_out = spec.system_out or spec.system
    d_s, d_e = h_out.dim, spec.env.dim
    reduced = np.trace(evolved.reshape(d_s, d_e, d_s, d_e), axis1=1, axis2=3)
    return DensityOperator(reduced, [(state.labels()[0], h_out)], validate=False)


def pinching(state: DensityOperator) -> DensityOperator:
    """Dephase into total-energy eigenspaces: P(rho) = sum_E Pi_E rho Pi_E.

    Energy blocks are identified by exact EnergyVector equality, so degenerate
    blocks keep their internal coherence. Pinching is itself a thermal
    operation (uniform time-average of the free evolution), hence appears
    here rather than in a state utility module.
    """
    shells = energy_shells(state.energy_vectors())
    out = np.zeros_like(state.matrix)
    for idx in shells.values():
        ix = np.ix_(idx, idx)
        out[ix] = state.matrix[ix]
    return state.with_matrix(out, validate=False)


def check_gibbs_preserving(channel: Callable[[DensityOperator], DensityOperator],
                           h: HamiltonianSpec, beta: float) -> float:
    """Trace distance || Lambda(tau_G) - tau_G ||_1 / 2."""
    tau = gibbs_state(h, beta)
    return trace_distance(channel(tau), tau)


def _default_probes(h: HamiltonianSpec, rng: np.random.Generator) -> list[np.ndarray]:
    """Fixed probe set: uniform superposition, a seeded random state, maximally mixed."""
    d = h.dim
    probes = []
    psi = np.ones(d, dtype=complex) / np.sqrt(d)
    probes.append(np.outer(psi, psi.conj()))
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    m = g @ g.conj().T
    probes.append(m / m.trace())
    probes.append(np.eye(d, dtype=complex) / d)
    return probes


def check_covariant(channel: Callable[[DensityOperator], DensityOperator],
                    h_in: HamiltonianSpec, h_out: HamiltonianSpec | None = None,
                    t_samples: int = 16, seed: int = 0,
                    probes: Sequence[DensityOperator] | None = None) -> float:
    """Max trace-distance violation of time covariance over probes and times.

    Covariance: Lambda(e^{-iHt} rho e^{iHt}) = e^{-iH't} Lambda(rho) e^{iH't}.
    Times are sampled in [0, 2*pi / gap_min] with gap_min the smallest nonzero
    energy gap of h_in (one full phase turn of the slowest coherence).
    """
    h_out = h_out or h_in
    rng = np.random.default_rng(seed)
    e_in = h_in.values()
    e_out = h_out.values()
    gaps = np.abs(np.subtract.outer(e_in, e_in))
    nonzero = gaps[gaps > 1e-12]
    t_max = 2 * np.pi / nonzero.min() if nonzero.size else 1.0
    ts = rng.uniform(0.0, t_max, size=t_samples)
    if probes is not None:
        probe_mats = [p.matrix for p in probes]
    else:
        probe_mats = _default_probes(h_in, rng)
    worst = 0.0
    for mat in probe_mats:
        rho = DensityOperator(mat, [("S", h_in)], validate=False)
        out = channel(rho)
        for t in ts:
            u_in = np.exp(-1j * e_in * t)
            u_out = np.exp(-1j * e_out * t)
            rotated_in = DensityOperator(
                u_in[:, None] * mat * u_in.conj()[None, :], [("S", h_in)], validate=False)
            lhs = channel(rotated_in).matrix
            rhs = u_out[:, None] * out.matrix * u_out.conj()[None, :]
            worst = max(worst, trace_distance(lhs, rhs))
    return worst


def random_energy_conserving_unitary(energies: Sequence[EnergyVector],
                                     rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary block per exact total-energy eigenspace.

    Blocks are drawn by QR of a complex Ginibre matrix with the standard phase
    normalization (diagonal of R made positive), giving Haar measure within
    each shell; cross-shell elements stay exactly zero, so the intertwining
    residual is exactly 0.
    """
    d = len(energies)
    u = np.zeros((d, d), dtype=complex)
    for idx in energy_shells(energies).values():
        k = len(idx)
        g = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
        q, r = np.linalg.qr(g)
        q = q * (np.diag(r) / np.abs(np.diag(r)))[None, :]
        u[np.ix_(idx, idx)] = q
    return u
