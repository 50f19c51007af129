"""Resource-ladder random walks: drift, hitting bounds, and Monte Carlo.

The shift-compensated rotation moves each ladder by an integer jump per use;
on classical inputs the ladder level performs an integer random walk with

    P(c) = sum over plan rows and support indices with shift c of p_j |f_{jc'}|^2.

A positive-drift walk started a distance xi above an absorbing floor hits it
with probability at most 1 / (gamma^(-xi-1) - gamma^(-1) + 1) < gamma^xi,
where gamma in (0, 1) is the root of

    f(gamma) = sum_{i=1..l} (gamma + ... + gamma^i) p_i
             - sum_{i=1..l} (gamma^-1 + ... + gamma^-i) p_{-i},

which is strictly increasing with f(1) = drift > 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import BACKEND_NAME, walk_backend
from .classical import ClassicalState, ClassicalTargetPlan

__all__ = [
    "WalkSpec",
    "walk_from_unitary",
    "solve_gamma",
    "hitting_bound",
    "simulate_hitting",
    "HittingEstimate",
]

GAMMA_TOL = 1e-12


@dataclass
class WalkSpec:
    """Integer-jump distribution plus the starting distance xi above the floor."""

    probs: dict[int, float]
    xi: int

    def __post_init__(self):
        self.probs = {int(k): float(v) for k, v in self.probs.items() if v != 0.0}
        if not self.probs:
            raise ValueError("walk needs at least one jump with positive probability")
        if any(v < 0 for v in self.probs.values()):
            raise ValueError("jump probabilities must be nonnegative")
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"jump probabilities sum to {total}, not 1")
        if self.xi < 1:
            raise ValueError("xi must be >= 1")

    @property
    def max_jump(self) -> int:
        return max(abs(k) for k in self.probs)

    def drift(self) -> float:
        return float(sum(k * v for k, v in self.probs.items()))

    def ordered(self) -> tuple[np.ndarray, np.ndarray]:
        """(jumps ascending, probabilities) as arrays."""
        jumps = np.array(sorted(self.probs), dtype=np.int64)
        p = np.array([self.probs[int(j)] for j in jumps], dtype=float)
        return jumps, p


def walk_from_unitary(plan: ClassicalTargetPlan, p_classical: ClassicalState | np.ndarray,
                      ladder: int, xi: int) -> WalkSpec:
    """Jump distribution of one ladder under the plan rotation on a classical input.

    ``p_classical`` assigns probability to each plan row (diagonal input in
    the plan basis; the plan's own classical state reproduces the target's
    eigenvalues).
    """
    probs_in = p_classical.probs if isinstance(p_classical, ClassicalState) else np.asarray(p_classical)
    if len(probs_in) != len(plan.rows):
        raise ValueError(f"classical input length {len(probs_in)} != plan rows {len(plan.rows)}")
    if not 0 <= ladder < len(plan.ladder_basis):
        raise IndexError(f"ladder index {ladder} out of range")
    dist: dict[int, float] = {}
    for p_j, row in zip(probs_in, plan.rows):
        if p_j == 0.0:
            continue
        weights = np.abs(row.amplitudes) ** 2
        for shift, w in zip(row.shifts[ladder], weights):
            dist[int(shift)] = dist.get(int(shift), 0.0) + float(p_j * w)
    return WalkSpec(dist, xi)


def _f(spec: WalkSpec, gamma: float) -> float:
    acc = 0.0
    for jump, p in spec.probs.items():
        if jump > 0:
            acc += p * sum(gamma ** j for j in range(1, jump + 1))
        elif jump < 0:
            acc -= p * sum(gamma ** (-j) for j in range(1, -jump + 1))
    return acc


def solve_gamma(spec: WalkSpec) -> float:
    """Root of f in (0, 1) by bisection to width and |f| below 1e-12.

    Requires strictly positive drift. With no downward jumps f > 0 on all of
    (0, 1); the root degenerates to gamma -> 0+ and 0.0 is returned (the walk
    can never reach the floor).
    """
    drift = spec.drift()
    if drift <= 0:
        raise ValueError(f"drift must be positive for the hitting bound, got {drift}")
    if all(j >= 0 for j in spec.probs):
        return 0.0
    lo, hi = 0.0, 1.0
    # f(0+) = -inf, f(1) = drift > 0; find a negative finite anchor
    lo = 1e-3
    while _f(spec, lo) > 0:
        lo *= 1e-2
        if lo < 1e-300:
            return 0.0
    f_lo = _f(spec, lo)
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        f_mid = _f(spec, mid)
        if f_mid <= 0:
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo <= GAMMA_TOL and abs(f_mid) <= GAMMA_TOL:
            break
    gamma = 0.5 * (lo + hi)
    if not (hi - lo <= GAMMA_TOL and abs(_f(spec, gamma)) <= 10 * GAMMA_TOL):
        raise RuntimeError(f"bisection failed to converge: width {hi - lo:.3e}, "
                           f"f {_f(spec, gamma):.3e}")
    return gamma


def hitting_bound(spec: WalkSpec, gamma: float | None = None) -> dict:
    """Martingale hitting bound and the looser gamma^xi comparison.

    bound = 1 / (gamma^(-xi-1) - gamma^(-1) + 1), clamped to [0, 1].
    """
    g = solve_gamma(spec) if gamma is None else gamma
    xi = spec.xi
    if g <= 0.0:
        return {"gamma": 0.0, "bound": 0.0, "gamma_pow_xi": 0.0, "drift": spec.drift()}
    denom = g ** (-(xi + 1)) - 1.0 / g + 1.0
    bound = 1.0 / denom if math.isfinite(denom) and denom > 0 else 0.0
    bound = min(max(bound, 0.0), 1.0)
    return {"gamma": g, "bound": bound, "gamma_pow_xi": g ** xi, "drift": spec.drift()}


@dataclass
class HittingEstimate:
    estimate: float
    stderr: float
    hits: int
    trajectories: int
    horizon: int
    escaped_mass: float          # fraction still unabsorbed at the horizon
    survivor_tail_bound: float   # mean residual hit bound over survivors
    backend: str = field(default=BACKEND_NAME)


def simulate_hitting(spec: WalkSpec, trajectories: int = 100_000, seed: int = 0,
                     horizon: int | None = None) -> HittingEstimate:
    """Monte Carlo estimate of the floor-hitting probability.

    Default horizon is max(ceil(10 * xi / drift), 512), above the contract
    floor of 10 * xi / drift, so the unobserved tail sits far below the
    binomial stderr at 1e5 trajectories. The residual tail is additionally
    reported: survivors at distance x carry residual probability at most the
    martingale bound at xi + x, and their average is survivor_tail_bound.
    """
    drift = spec.drift()
    if drift <= 0:
        raise ValueError("simulate_hitting needs positive drift")
    if horizon is None:
        horizon = max(math.ceil(10 * spec.xi / drift), 512)
    elif horizon < 10 * spec.xi / drift:
        raise ValueError(f"horizon {horizon} below the floor 10*xi/drift = {10 * spec.xi / drift:.1f}")
    if trajectories < 1:
        raise ValueError("need at least one trajectory")
    jumps, p = spec.ordered()
    cum = np.cumsum(p)
    hit_out = np.zeros(trajectories, dtype=np.uint8)
    pos_out = np.zeros(trajectories, dtype=np.int64)
    hits = walk_backend.simulate(cum, jumps, trajectories, int(horizon), int(spec.xi),
                                 np.uint64(seed), hit_out, pos_out)
    est = hits / trajectories
    stderr = math.sqrt(max(est * (1.0 - est), 1e-300) / trajectories)
    survivors = pos_out[hit_out == 0]
    tail = 0.0
    if survivors.size:
        g = solve_gamma(spec)
        if g > 0.0:
            # residual bound at distance xi + x, aggregated over survivors
            dist, counts = np.unique(survivors + spec.xi, return_counts=True)
            with np.errstate(over="ignore"):
                denom = np.power(g, -(dist + 1.0)) - 1.0 / g + 1.0
            bounds = np.where(np.isfinite(denom) & (denom > 0), 1.0 / denom, 0.0)
            tail = float(np.sum(bounds * counts) / trajectories)
    return HittingEstimate(
        estimate=est, stderr=stderr, hits=int(hits), trajectories=trajectories,
        horizon=int(horizon), escaped_mass=float(survivors.size / trajectories),
        survivor_tail_bound=tail)
