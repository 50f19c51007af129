"""Pure-numpy fallback for the walk kernel; bit-identical to walk_cy.

Same SplitMix64 scheme: trajectory i's stream starts at
mix64(seed + (i+1) * STREAM) and advances by GOLD per draw, with the mix64
finalizer producing the output word. The vectorized loop keeps advancing
stopped trajectories' private streams (cheaper than masking), which cannot
change results because every trajectory owns its stream and stopped rows are
frozen.
"""

import numpy as np

GOLD = np.uint64(0x9E3779B97F4A7C15)
STREAM = np.uint64(0xD1B54A32D192ED03)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53
_SH30, _SH27, _SH31, _SH11 = np.uint64(30), np.uint64(27), np.uint64(31), np.uint64(11)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> _SH30)
    z = z * _M1
    z = z ^ (z >> _SH27)
    z = z * _M2
    z = z ^ (z >> _SH31)
    return z


def simulate(cum, jumps, n_traj, horizon, xi, seed, hit_out, pos_out):
    """Same contract as walk_cy.simulate; fills hit_out/pos_out, returns hit count."""
    cum = np.asarray(cum, dtype=float)
    jumps = np.asarray(jumps, dtype=np.int64)
    n_jumps = len(cum)
    idx = np.arange(1, n_traj + 1, dtype=np.uint64)
    state = _mix64(np.uint64(seed) + idx * STREAM)
    pos = np.zeros(n_traj, dtype=np.int64)
    active = np.ones(n_traj, dtype=bool)
    hit = np.zeros(n_traj, dtype=bool)
    for _ in range(horizon):
        if not active.any():
            break
        state = state + GOLD
        u = (_mix64(state) >> _SH11).astype(np.float64) * _INV53
        k = np.minimum(np.searchsorted(cum, u, side="right"), n_jumps - 1)
        pos[active] += jumps[k[active]]
        newly = active & (pos <= -xi)
        hit |= newly
        active &= ~newly
    hit_out[:] = hit.astype(np.uint8)
    pos_out[:] = pos
    return int(hit.sum())
