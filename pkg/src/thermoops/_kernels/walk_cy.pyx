# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Monte Carlo kernel for integer-jump walks with an absorbing floor.

Must stay bit-identical to the numpy fallback in walk_py.py: same SplitMix64
per-trajectory streams, same cumulative-probability bucket lookup, same
stopping rule. Early exit per trajectory is safe because each trajectory owns
its own counter-based stream.
"""

from libc.stdint cimport int64_t, uint8_t, uint64_t

cdef uint64_t GOLD = 0x9E3779B97F4A7C15
cdef uint64_t STREAM = 0xD1B54A32D192ED03
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9
cdef uint64_t MIX2 = 0x94D049BB133111EB
cdef double INV53 = 1.0 / 9007199254740992.0  # 2^-53


cdef inline uint64_t mix64(uint64_t z) nogil:
    z ^= z >> 30
    z *= MIX1
    z ^= z >> 27
    z *= MIX2
    z ^= z >> 31
    return z


def simulate(double[::1] cum, int64_t[::1] jumps, int64_t n_traj, int64_t horizon,
             int64_t xi, uint64_t seed, uint8_t[::1] hit_out, int64_t[::1] pos_out):
    """Fill hit flags and final positions for n_traj trajectories; returns hit count."""
    cdef int64_t n_jumps = cum.shape[0]
    cdef int64_t i, step, k, pos
    cdef int64_t hits = 0
    cdef uint64_t state, z
    cdef double u
    for i in range(n_traj):
        state = mix64(seed + (<uint64_t> (i + 1)) * STREAM)
        pos = 0
        hit_out[i] = 0
        for step in range(horizon):
            state = state + GOLD
            z = mix64(state)
            u = <double> (z >> 11) * INV53
            k = 0
            while k < n_jumps - 1 and cum[k] <= u:
                k += 1
            pos += jumps[k]
            if pos <= -xi:
                hit_out[i] = 1
                hits += 1
                break
        pos_out[i] = pos
    return hits
