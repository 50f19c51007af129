"""Coherent modes of states and integer-linear structure of energy differences.

The coherent modes of rho are the energy differences E_i - E_j carried by its
nonzero matrix elements; the resonant set is their closure under integer
combinations. Everything here is exact rational arithmetic on EnergyVector
coordinates, so span membership is a yes/no answer, not a tolerance call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .qstate import DensityOperator, EnergyVector, FrequencyBasis

__all__ = [
    "IntegerBasis",
    "coherent_modes",
    "independent_basis",
    "in_resonant_span",
    "condition_holds",
]

DEFAULT_MAG_THRESHOLD = 1e-10


def coherent_modes(state: DensityOperator, mag_threshold: float = DEFAULT_MAG_THRESHOLD
                   ) -> set[EnergyVector]:
    """Mode set {E_i - E_j : |rho_ij| > mag_threshold} as exact EnergyVectors.

    Always contains 0 for a valid state (some diagonal entry exceeds any
    threshold < 1/dim). The threshold is an explicit knob because a matrix
    element sitting exactly at it flips membership; callers doing
    monotonicity checks should read the input set at a smaller threshold
    than the output set.
    """
    if mag_threshold <= 0:
        raise ValueError("mag_threshold must be positive")
    energies = state.energy_vectors()
    rows, cols = np.nonzero(np.abs(state.matrix) > mag_threshold)
    return {energies[i] - energies[j] for i, j in zip(rows, cols)}


def _rational_columns(elements: Sequence[EnergyVector]) -> list[tuple[Fraction, ...]]:
    return [ev.coeffs for ev in elements]


def _solve_exact(columns: list[tuple[Fraction, ...]], target: tuple[Fraction, ...]
                 ) -> list[Fraction] | None:
    """Solve sum_j a_j * columns[j] = target over the rationals; None if unsolvable.

    Plain fraction Gaussian elimination; the matrices here are tiny (a handful
    of frequencies by a handful of basis elements).
    """
    n_rows = len(target)
    n_cols = len(columns)
    if n_cols == 0:
        return [] if all(t == 0 for t in target) else None
    aug = [[columns[j][i] for j in range(n_cols)] + [target[i]] for i in range(n_rows)]
    pivot_cols: list[int] = []
    r = 0
    for c in range(n_cols):
        pivot = next((i for i in range(r, n_rows) if aug[i][c] != 0), None)
        if pivot is None:
            continue
        aug[r], aug[pivot] = aug[pivot], aug[r]
        inv = Fraction(1) / aug[r][c]
        aug[r] = [x * inv for x in aug[r]]
        for i in range(n_rows):
            if i != r and aug[i][c] != 0:
                f = aug[i][c]
                aug[i] = [x - f * y for x, y in zip(aug[i], aug[r])]
        pivot_cols.append(c)
        r += 1
        if r == n_rows:
            break
    # rows below rank must have zero rhs
    for i in range(r, n_rows):
        if aug[i][n_cols] != 0:
            return None
    # free columns (a dependent column set) get coefficient 0; the exact
    # verification below rejects any wrong answer that produces
    solution = [Fraction(0)] * n_cols
    for row, c in enumerate(pivot_cols):
        solution[c] = aug[row][n_cols]
    # verify (cheap, exact)
    for i in range(n_rows):
        acc = sum((columns[j][i] * solution[j] for j in range(n_cols)), Fraction(0))
        if acc != target[i]:
            return None
    return solution


@dataclass(frozen=True)
class IntegerBasis:
    """Integer-linearly independent EnergyVectors spanning a resonant set."""

    elements: tuple[EnergyVector, ...]

    def __len__(self) -> int:
        return len(self.elements)

    def decompose(self, x: EnergyVector) -> list[int] | None:
        """Integer coefficients a with x = sum a_l * elements[l], else None."""
        if not self.elements:
            return [] if x.is_zero() else None
        sol = _solve_exact(_rational_columns(self.elements), x.coeffs)
        if sol is None:
            return None
        if any(a.denominator != 1 for a in sol):
            return None
        return [int(a) for a in sol]

    def contains(self, x: EnergyVector) -> bool:
        return self.decompose(x) is not None


def _rational_dependency(columns: list[tuple[Fraction, ...]]) -> list[Fraction] | None:
    """A nonzero rational nullvector of the column set, or None if independent."""
    n_cols = len(columns)
    n_rows = len(columns[0]) if columns else 0
    mat = [[columns[j][i] for j in range(n_cols)] for i in range(n_rows)]
    pivots: dict[int, int] = {}  # col -> row
    r = 0
    for c in range(n_cols):
        pivot = next((i for i in range(r, n_rows) if mat[i][c] != 0), None)
        if pivot is None:
            # free column: dependency with coefficient 1 here
            coeffs = [Fraction(0)] * n_cols
            coeffs[c] = Fraction(1)
            for col, row in pivots.items():
                coeffs[col] = -mat[row][c]
            return coeffs
        mat[r], mat[pivot] = mat[pivot], mat[r]
        inv = Fraction(1) / mat[r][c]
        mat[r] = [x * inv for x in mat[r]]
        for i in range(n_rows):
            if i != r and mat[i][c] != 0:
                f = mat[i][c]
                mat[i] = [x - f * y for x, y in zip(mat[i], mat[r])]
        pivots[c] = r
        r += 1
    return None


def independent_basis(modes: Iterable[EnergyVector]) -> IntegerBasis:
    """Reduce a mode set to an integer-linearly independent basis of its span.

    Insert-or-reduce construction: each new element either extends the basis
    or yields a rational relation 0 = sum a_i x_i (integer after clearing
    denominators, gcd 1). While no coefficient is +-1, pick a_i of smallest
    magnitude and some a_j it does not divide, write a_j = p a_i + q with
    0 < |q| < |a_i|, and apply the unimodular replacement
    x_i -> x_i + p x_j, a_j -> q. Once some a_l = +-1, x_l lies in the
    integer span of the others and is dropped. The integer span is preserved
    at every step.
    """
    basis: list[EnergyVector] = []
    freq_basis: FrequencyBasis | None = None
    for y in modes:
        freq_basis = freq_basis or y.basis
        if y.basis != freq_basis:
            raise ValueError("modes from different frequency bases")
        if y.is_zero():
            continue
        if IntegerBasis(tuple(basis)).contains(y):
            continue
        candidate = basis + [y]
        dep = _rational_dependency(_rational_columns(candidate))
        if dep is None:
            basis = candidate
            continue
        # clear denominators, normalize gcd to 1
        denom_lcm = 1
        for a in dep:
            denom_lcm = denom_lcm * a.denominator // math.gcd(denom_lcm, a.denominator)
        ints = [int(a * denom_lcm) for a in dep]
        g = 0
        for a in ints:
            g = math.gcd(g, abs(a))
        ints = [a // g for a in ints]
        vecs = list(candidate)
        # drop exact zero coefficients up front; they play no role
        live = [k for k, a in enumerate(ints) if a != 0]
        while True:
            unit = next((k for k in live if abs(ints[k]) == 1), None)
            if unit is not None:
                break
            i = min(live, key=lambda k: abs(ints[k]))
            j = next((k for k in live if k != i and ints[k] % ints[i] != 0), None)
            if j is None:
                # a_i divides every coefficient, so |a_i| divides their gcd 1
                raise AssertionError("unreachable: nonunit minimal coefficient divides gcd 1")
            p = ints[j] // ints[i]
            q = ints[j] - p * ints[i]
            vecs[i] = vecs[i] + p * vecs[j]
            ints[j] = q
        vecs.pop(unit)
        basis = vecs
    # sign convention: first nonzero coordinate positive (span-preserving)
    normed = []
    for v in basis:
        lead = next((c for c in v.coeffs if c != 0), None)
        normed.append(-v if (lead is not None and lead < 0) else v)
    return IntegerBasis(tuple(normed))


def in_resonant_span(x: EnergyVector, basis: IntegerBasis) -> bool:
    """Whether x is an integer combination of the basis elements (exact)."""
    return basis.contains(x)


def condition_holds(rho: DensityOperator, rho_prime: DensityOperator,
                    mag_threshold: float = DEFAULT_MAG_THRESHOLD) -> bool:
    """Convertibility premise: every mode of rho' lies in the resonant span of rho's modes."""
    basis = independent_basis(coherent_modes(rho, mag_threshold))
    return all(in_resonant_span(m, basis) for m in coherent_modes(rho_prime, mag_threshold))
