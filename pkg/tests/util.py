"""Builders and independent oracles shared across test modules."""

import numpy as np

from thermoops.qstate import (
    DensityOperator,
    EnergyVector,
    FrequencyBasis,
    HamiltonianSpec,
)

BASIS1 = FrequencyBasis.single(1.0, "w")
QUBIT = HamiltonianSpec.qubit(BASIS1)


def rand_state(rng: np.random.Generator, dim: int, h: HamiltonianSpec | None = None,
               label: str = "S") -> DensityOperator:
    """Random full-rank density matrix from a Ginibre square."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    m = g @ g.conj().T
    m /= np.trace(m).real
    if h is None:
        h = HamiltonianSpec.ladder(BASIS1, dim)
    return DensityOperator(m, [(label, h)])


def rand_pure(rng: np.random.Generator, dim: int, h: HamiltonianSpec | None = None,
              label: str = "S") -> DensityOperator:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    v /= np.linalg.norm(v)
    if h is None:
        h = HamiltonianSpec.ladder(BASIS1, dim)
    return DensityOperator(np.outer(v, v.conj()), [(label, h)])


def rand_hamiltonian(rng: np.random.Generator, dim: int, max_coeff: int = 6
                     ) -> HamiltonianSpec:
    """Integer-coefficient levels on the single-frequency basis, sorted."""
    coeffs = sorted(int(c) for c in rng.integers(0, max_coeff + 1, size=dim))
    return HamiltonianSpec.from_energies(
        [EnergyVector.unit(BASIS1, 0, c) for c in coeffs])


def naive_partial_trace(mat: np.ndarray, dims: list[int], keep: list[int]) -> np.ndarray:
    """Index-loop partial trace, deliberately slow and obvious."""
    n = len(dims)
    drop = [i for i in range(n) if i not in keep]
    kdims = [dims[i] for i in keep]
    out = np.zeros((int(np.prod(kdims)), int(np.prod(kdims))), dtype=complex)

    def unflatten(flat):
        idx = []
        for d in reversed(dims):
            flat, r = divmod(flat, d)
            idx.append(r)
        return list(reversed(idx))

    def flatten_kept(idx):
        out_i = 0
        for i in keep:
            out_i = out_i * dims[i] + idx[i]
        return out_i

    total = int(np.prod(dims))
    for a in range(total):
        ia = unflatten(a)
        for b in range(total):
            ib = unflatten(b)
            if all(ia[i] == ib[i] for i in drop):
                out[flatten_kept(ia), flatten_kept(ib)] += mat[a, b]
    return out
