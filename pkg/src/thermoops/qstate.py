"""States, Hamiltonians with exact-rational energy bookkeeping, and entropic functionals.

Energies are tracked as exact rational combinations of a declared set of base
frequencies (assumed rationally independent), so that equality of energy sums,
differences, and integer-span membership are decidable exactly while all
matrix-level work stays in float numpy.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .config import TOLERANCES, NumericRangeError, ResourceLimitError, max_dim

__all__ = [
    "FrequencyBasis",
    "EnergyVector",
    "HamiltonianSpec",
    "DensityOperator",
    "gibbs_state",
    "tensor",
    "partial_trace",
    "entropy",
    "relative_entropy",
    "free_energy",
    "trace_distance",
]

# Exponents beyond this in exp(-beta*E) under/overflow float64 meaningfully.
_MAX_EXPONENT = 700.0


def _to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise ValueError(f"energy coefficients must be exact (int/Fraction/'p/q' string), got {type(x).__name__}")


@dataclass(frozen=True)
class FrequencyBasis:
    """Base frequencies, declared rationally independent by construction.

    All EnergyVectors in one computation must share the same basis; mixing
    bases is rejected rather than coerced.
    """

    values: tuple[float, ...]
    names: tuple[str, ...]

    def __post_init__(self):
        if len(self.values) != len(self.names):
            raise ValueError("values and names must have equal length")
        if len(self.values) == 0:
            raise ValueError("FrequencyBasis needs at least one frequency")
        if any(v <= 0 for v in self.values):
            raise ValueError("base frequencies must be positive")
        if len(set(self.names)) != len(self.names):
            raise ValueError("frequency names must be distinct")

    @classmethod
    def single(cls, value: float = 1.0, name: str = "w") -> "FrequencyBasis":
        return cls((float(value),), (name,))

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class EnergyVector:
    """Exact energy: sum_k coeffs[k] * basis.values[k] with rational coeffs.

    Hashable and exactly comparable, so energy shells and mode sets are
    well-defined sets; .value() gives the float for matrix-level work.
    """

    coeffs: tuple[Fraction, ...]
    basis: FrequencyBasis

    def __post_init__(self):
        if len(self.coeffs) != len(self.basis):
            raise ValueError("coefficient count must match basis size")
        object.__setattr__(self, "coeffs", tuple(_to_fraction(c) for c in self.coeffs))

    @classmethod
    def zero(cls, basis: FrequencyBasis) -> "EnergyVector":
        return cls((Fraction(0),) * len(basis), basis)

    @classmethod
    def unit(cls, basis: FrequencyBasis, k: int = 0, scale=1) -> "EnergyVector":
        coeffs = [Fraction(0)] * len(basis)
        coeffs[k] = _to_fraction(scale)
        return cls(tuple(coeffs), basis)

    def _check_basis(self, other: "EnergyVector"):
        if self.basis != other.basis:
            raise ValueError("EnergyVectors from different frequency bases cannot be combined")

    def __add__(self, other: "EnergyVector") -> "EnergyVector":
        self._check_basis(other)
        return EnergyVector(tuple(a + b for a, b in zip(self.coeffs, other.coeffs)), self.basis)

    def __sub__(self, other: "EnergyVector") -> "EnergyVector":
        self._check_basis(other)
        return EnergyVector(tuple(a - b for a, b in zip(self.coeffs, other.coeffs)), self.basis)

    def __neg__(self) -> "EnergyVector":
        return EnergyVector(tuple(-a for a in self.coeffs), self.basis)

    def __mul__(self, scalar) -> "EnergyVector":
        s = _to_fraction(scalar)
        return EnergyVector(tuple(a * s for a in self.coeffs), self.basis)

    __rmul__ = __mul__

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def value(self) -> float:
        return float(sum(float(c) * v for c, v in zip(self.coeffs, self.basis.values)))

    def __str__(self) -> str:
        terms = []
        for c, name in zip(self.coeffs, self.basis.names):
            if c == 0:
                continue
            if c == 1:
                terms.append(name)
            elif c == -1:
                terms.append(f"-{name}")
            else:
                terms.append(f"{c}*{name}")
        return " + ".join(terms).replace("+ -", "- ") if terms else "0"


@dataclass(frozen=True)
class HamiltonianSpec:
    """Diagonal Hamiltonian: levels as (EnergyVector, degeneracy), nondecreasing.

    Ground energy is kept >= 0 (shift spectra before constructing); factory
    helpers for qubits and finite ladder truncations apply the shift.
    """

    levels: tuple[tuple[EnergyVector, int], ...]

    def __post_init__(self):
        if not self.levels:
            raise ValueError("HamiltonianSpec needs at least one level")
        basis = self.levels[0][0].basis
        for ev, deg in self.levels:
            if ev.basis != basis:
                raise ValueError("all levels must share one frequency basis")
            if deg < 1:
                raise ValueError("degeneracy must be >= 1")
        vals = [ev.value() for ev, _ in self.levels]
        if any(b < a - 1e-15 for a, b in zip(vals, vals[1:])):
            raise ValueError("levels must be in nondecreasing numeric order")
        if vals[0] < -1e-15:
            raise ValueError(f"ground energy must be >= 0 after global shift, got {vals[0]}")

    @classmethod
    def from_energies(cls, energies: Sequence[EnergyVector]) -> "HamiltonianSpec":
        return cls(tuple((ev, 1) for ev in energies))

    @classmethod
    def qubit(cls, basis: FrequencyBasis, gap=1, k: int = 0) -> "HamiltonianSpec":
        """Two levels 0 and gap*basis[k]."""
        return cls.from_energies([EnergyVector.zero(basis), EnergyVector.unit(basis, k, gap)])

    @classmethod
    def ladder(cls, basis: FrequencyBasis, n_levels: int, k: int = 0, step=1) -> "HamiltonianSpec":
        """Half-infinite ladder truncation: j * step * basis[k], j = 0..n_levels-1."""
        if n_levels < 1:
            raise ValueError("ladder needs at least one level")
        unit = EnergyVector.unit(basis, k, step)
        return cls.from_energies([unit * j for j in range(n_levels)])

    @property
    def basis(self) -> FrequencyBasis:
        return self.levels[0][0].basis

    @property
    def dim(self) -> int:
        return sum(deg for _, deg in self.levels)

    def energies(self) -> list[EnergyVector]:
        """One EnergyVector per matrix index, degeneracy expanded."""
        out = []
        for ev, deg in self.levels:
            out.extend([ev] * deg)
        return out

    def values(self) -> np.ndarray:
        return np.array([ev.value() for ev in self.energies()], dtype=float)

    def matrix(self) -> np.ndarray:
        return np.diag(self.values()).astype(complex)

    def ground(self) -> EnergyVector:
        return self.levels[0][0]


class DensityOperator:
    """A density matrix together with the Hamiltonians of its subsystems.

    ``system`` is a tuple of (label, HamiltonianSpec); the matrix lives on the
    kron-ordered product space. Validation: hermitian to 1e-10, unit trace to
    1e-10, eigenvalues >= -1e-9.
    """

    def __init__(self, matrix: np.ndarray, system: Sequence[tuple[str, HamiltonianSpec]],
                 validate: bool = True):
        self.matrix = np.asarray(matrix, dtype=complex)
        self.system = tuple((str(label), h) for label, h in system)
        if not self.system:
            raise ValueError("DensityOperator needs at least one subsystem")
        labels = [label for label, _ in self.system]
        if len(set(labels)) != len(labels):
            raise ValueError(f"subsystem labels must be distinct, got {labels}")
        basis = self.system[0][1].basis
        if any(h.basis != basis for _, h in self.system):
            raise ValueError("subsystems must share one frequency basis")
        dim = 1
        for _, h in self.system:
            dim *= h.dim
        if self.matrix.shape != (dim, dim):
            raise ValueError(f"matrix shape {self.matrix.shape} does not match system dim {dim}")
        if validate:
            self._validate()

    def _validate(self):
        tol = TOLERANCES
        herm = np.abs(self.matrix - self.matrix.conj().T).max()
        if herm > tol.herm:
            raise ValueError(f"matrix is not hermitian: max |M - M^dag| = {herm:.3e}")
        tr = self.matrix.trace()
        if abs(tr - 1.0) > tol.trace:
            raise ValueError(f"trace must be 1, got {tr}")
        evals = np.linalg.eigvalsh(self.matrix)
        if evals.min() < -tol.psd:
            raise ValueError(f"matrix is not PSD: min eigenvalue {evals.min():.3e}")

    # -- structure ---------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def basis(self) -> FrequencyBasis:
        return self.system[0][1].basis

    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.system)

    def subsystem(self, label: str) -> HamiltonianSpec:
        for lab, h in self.system:
            if lab == label:
                return h
        raise KeyError(f"no subsystem labeled {label!r}")

    def dims(self) -> tuple[int, ...]:
        return tuple(h.dim for _, h in self.system)

    def energy_vectors(self) -> list[EnergyVector]:
        """Total EnergyVector per composite basis index (kron order)."""
        per_sub = [h.energies() for _, h in self.system]
        out = []
        for combo in itertools.product(*per_sub):
            total = combo[0]
            for ev in combo[1:]:
                total = total + ev
            out.append(total)
        return out

    def energy_values(self) -> np.ndarray:
        per_sub = [h.values() for _, h in self.system]
        total = per_sub[0]
        for vals in per_sub[1:]:
            total = np.add.outer(total, vals).ravel()
        return total

    def mean_energy(self) -> float:
        return float(np.real(np.vdot(self.energy_values(), np.real(np.diag(self.matrix)))))

    def with_matrix(self, matrix: np.ndarray, validate: bool = True) -> "DensityOperator":
        return DensityOperator(matrix, self.system, validate=validate)


# ---------------------------------------------------------------------------
# constructors and composition


def gibbs_state(h: HamiltonianSpec, beta: float, label: str = "S") -> DensityOperator:
    """tau = exp(-beta H) / Z, spectra shifted so the ground level is 0.

    The shift only rescales Z; populations are unchanged. Exponents past
    ~700 after shifting raise rather than silently underflow to an all-zero
    weight vector.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    vals = h.values()
    shifted = vals - vals.min()
    if (beta * shifted).max() > _MAX_EXPONENT:
        raise NumericRangeError(
            f"beta * energy span {beta * shifted.max():.3e} exceeds exp range")
    weights = np.exp(-beta * shifted)
    weights /= weights.sum()
    return DensityOperator(np.diag(weights).astype(complex), [(label, h)])


def tensor(*states: DensityOperator) -> DensityOperator:
    """Kronecker product; labels must stay distinct; dimension capped."""
    if not states:
        raise ValueError("tensor needs at least one state")
    total = 1
    for s in states:
        total *= s.dim
    if total > max_dim():
        raise ResourceLimitError(f"tensor dimension {total} exceeds cap {max_dim()}")
    matrix = states[0].matrix
    system = list(states[0].system)
    for s in states[1:]:
        matrix = np.kron(matrix, s.matrix)
        system.extend(s.system)
    return DensityOperator(matrix, system)


def _ptrace_matrix(matrix: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Partial trace over the complement of ``keep`` (indices into dims)."""
    n = len(dims)
    keep = list(keep)
    tensor_form = matrix.reshape(*dims, *dims)
    # trace out dropped factors one at a time, highest axis first
    for ax in sorted(set(range(n)) - set(keep), reverse=True):
        cur = tensor_form.ndim // 2
        tensor_form = np.trace(tensor_form, axis1=ax, axis2=ax + cur)
        for i, k in enumerate(keep):
            if k > ax:
                keep[i] -= 1
    d = int(np.prod([tensor_form.shape[i] for i in range(tensor_form.ndim // 2)]))
    return tensor_form.reshape(d, d)


def partial_trace(state: DensityOperator, keep: Sequence[str]) -> DensityOperator:
    """Reduce to the named subsystems, kept in their original order."""
    labels = state.labels()
    keep = list(keep)
    for lab in keep:
        if lab not in labels:
            raise KeyError(f"no subsystem labeled {lab!r}")
    if len(set(keep)) != len(keep):
        raise ValueError("keep labels must be distinct")
    keep_idx = [i for i, lab in enumerate(labels) if lab in keep]
    if not keep_idx:
        raise ValueError("must keep at least one subsystem")
    reduced = _ptrace_matrix(state.matrix, state.dims(), keep_idx)
    system = [state.system[i] for i in keep_idx]
    return DensityOperator(reduced, system, validate=False)


# ---------------------------------------------------------------------------
# entropic functionals


def _clipped_spectrum(matrix: np.ndarray) -> np.ndarray:
    evals = np.linalg.eigvalsh(matrix)
    if evals.min() < -TOLERANCES.psd:
        raise ValueError(f"not a state: min eigenvalue {evals.min():.3e}")
    return np.clip(evals, 0.0, None)


def entropy(state: DensityOperator | np.ndarray) -> float:
    """Von Neumann entropy S(rho) = -tr(rho ln rho), natural log."""
    matrix = state.matrix if isinstance(state, DensityOperator) else np.asarray(state)
    evals = _clipped_spectrum(matrix)
    nz = evals[evals > 0]
    return float(-np.sum(nz * np.log(nz)))


def relative_entropy(rho: DensityOperator | np.ndarray, sigma: DensityOperator | np.ndarray,
                     support_tol: float = 1e-12) -> float:
    """Umegaki relative entropy D(rho||sigma) = tr rho (ln rho - ln sigma).

    Returns math.inf when rho's support leaks outside sigma's support by more
    than support_tol (the infinite-divergence sentinel).
    """
    a = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho)
    b = sigma.matrix if isinstance(sigma, DensityOperator) else np.asarray(sigma)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    evals_a, vecs_a = np.linalg.eigh(a)
    evals_b, vecs_b = np.linalg.eigh(b)
    evals_a = np.clip(evals_a, 0.0, None)
    evals_b = np.clip(evals_b, 0.0, None)
    cutoff = max(support_tol, evals_b.max() * 1e-15) if evals_b.max() > 0 else support_tol
    null = evals_b <= cutoff
    if null.any():
        null_vecs = vecs_b[:, null]
        leak = float(np.real(np.einsum("ij,jk,ki->", null_vecs.conj().T, a, null_vecs)))
        if leak > support_tol:
            return math.inf
    nz_a = evals_a > 0
    tr_rho_ln_rho = float(np.sum(evals_a[nz_a] * np.log(evals_a[nz_a])))
    # tr rho ln sigma over sigma's support
    keep = ~null
    overlaps = np.real(np.einsum("ji,jk,ki->i", vecs_b[:, keep].conj(), a, vecs_b[:, keep]))
    tr_rho_ln_sigma = float(np.sum(overlaps * np.log(evals_b[keep])))
    return max(tr_rho_ln_rho - tr_rho_ln_sigma, 0.0)


def free_energy(state: DensityOperator, beta: float, h: HamiltonianSpec | None = None) -> float:
    """Nonequilibrium free energy F(rho) = tr(rho H) - S(rho)/beta.

    Satisfies F(rho) - F(tau_G) = D(rho||tau_G)/beta with tau_G the Gibbs
    state of the same H, and F(tau_G) = -ln(Z)/beta.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if h is not None:
        energies = h.values()
        if len(energies) != state.dim:
            raise ValueError("explicit Hamiltonian dimension mismatch")
    else:
        energies = state.energy_values()
    e = float(np.real(np.sum(energies * np.real(np.diag(state.matrix)))))
    return e - entropy(state) / beta


def trace_distance(a: DensityOperator | np.ndarray, b: DensityOperator | np.ndarray) -> float:
    """(1/2) || a - b ||_1."""
    ma = a.matrix if isinstance(a, DensityOperator) else np.asarray(a)
    mb = b.matrix if isinstance(b, DensityOperator) else np.asarray(b)
    if ma.shape != mb.shape:
        raise ValueError(f"shape mismatch {ma.shape} vs {mb.shape}")
    evals = np.linalg.eigvalsh(ma - mb)
    return float(0.5 * np.abs(evals).sum())
