import math
from fractions import Fraction

import numpy as np

from thermoops.modes import (
    coherent_modes,
    condition_holds,
    in_resonant_span,
    independent_basis,
)
from thermoops.qstate import (
    DensityOperator,
    EnergyVector,
    FrequencyBasis,
    HamiltonianSpec,
)
from util import BASIS1, QUBIT, rand_state


def ev(c, basis=BASIS1):
    return EnergyVector.unit(basis, 0, c)


def test_incoherent_state_has_only_zero_mode():
    rho = DensityOperator(np.diag([0.3, 0.7]), [("S", QUBIT)])
    assert coherent_modes(rho) == {EnergyVector.zero(BASIS1)}


def test_coherent_qubit_modes():
    rho = DensityOperator(np.full((2, 2), 0.5), [("S", QUBIT)])
    assert coherent_modes(rho) == {ev(-1), ev(0), ev(1)}


def test_modes_respect_threshold():
    m = np.diag([0.5, 0.5]).astype(complex)
    m[0, 1] = m[1, 0] = 1e-8
    rho = DensityOperator(m, [("S", QUBIT)])
    assert coherent_modes(rho, mag_threshold=1e-6) == {ev(0)}
    assert coherent_modes(rho, mag_threshold=1e-10) == {ev(-1), ev(0), ev(1)}


def test_degenerate_gap_merges_modes():
    # levels 0,1,2: the 0-1 and 1-2 gaps are the same exact vector
    h = HamiltonianSpec.ladder(BASIS1, 3)
    m = np.eye(3, dtype=complex) / 3
    m[0, 1] = m[1, 0] = 0.1
    m[1, 2] = m[2, 1] = 0.1
    rho = DensityOperator(m, [("S", h)])
    assert coherent_modes(rho) == {ev(-1), ev(0), ev(1)}


def test_independent_basis_is_gcd_on_one_frequency():
    # integer multiples of one frequency reduce to their gcd
    modes = [ev(0), ev(6), ev(-4), ev(10)]
    basis = independent_basis(modes)
    assert len(basis.elements) == 1
    g = basis.elements[0]
    assert g == ev(2) or g == ev(-2)
    assert basis.decompose(ev(6)) is not None
    assert basis.decompose(ev(1)) is None


def test_independent_basis_keeps_independent_frequencies():
    b2 = FrequencyBasis((1.0, math.sqrt(2)), ("w", "v"))
    m1 = EnergyVector.unit(b2, 0)
    m2 = EnergyVector.unit(b2, 1)
    basis = independent_basis([m1, m2, m1 + m2])
    assert len(basis.elements) == 2
    assert basis.decompose(m1 + m2) is not None
    half = EnergyVector((Fraction(1, 2), Fraction(0)), b2)
    assert basis.decompose(half) is None


def test_independent_basis_reduces_rational_combinations():
    b2 = FrequencyBasis((1.0, math.sqrt(2)), ("w", "v"))
    x = EnergyVector((2, 0), b2)
    y = EnergyVector((3, 0), b2)   # dependent: gcd is (1, 0)
    basis = independent_basis([x, y])
    assert len(basis.elements) == 1
    assert basis.decompose(EnergyVector((1, 0), b2)) is not None


def test_decompose_matches_reconstruction():
    rng = np.random.default_rng(21)
    b2 = FrequencyBasis((1.0, math.sqrt(2)), ("w", "v"))
    gens = [EnergyVector((2, 1), b2), EnergyVector((0, 3), b2)]
    basis = independent_basis(gens)
    for _ in range(100):
        coeffs = rng.integers(-5, 6, size=len(basis.elements))
        x = EnergyVector.zero(b2)
        for c, g in zip(coeffs, basis.elements):
            x = x + g * int(c)
        dec = basis.decompose(x)
        assert dec is not None
        back = EnergyVector.zero(b2)
        for c, g in zip(dec, basis.elements):
            back = back + g * int(c)
        assert back == x


def test_empty_basis_contains_only_zero():
    basis = independent_basis([EnergyVector.zero(BASIS1)])
    assert len(basis.elements) == 0
    assert basis.decompose(EnergyVector.zero(BASIS1)) == []
    assert basis.decompose(ev(1)) is None


def test_in_resonant_span():
    basis = independent_basis([ev(2)])
    assert in_resonant_span(ev(4), basis)
    assert in_resonant_span(ev(0), basis)
    assert not in_resonant_span(ev(3), basis)


def test_condition_holds_qubit_pairs():
    coh = DensityOperator(np.full((2, 2), 0.5), [("S", QUBIT)])
    inc = DensityOperator(np.diag([0.4, 0.6]), [("S", QUBIT)])
    assert condition_holds(coh, coh)
    assert condition_holds(coh, inc)      # incoherent target always reachable
    assert not condition_holds(inc, coh)  # cannot create coherence


def test_condition_holds_needs_resonant_target_gap():
    # source coherent on gap 2, target coherent on gap 1: not in the span
    h3 = HamiltonianSpec.from_energies([ev(0), ev(1), ev(2)])
    src = np.diag([0.4, 0.2, 0.4]).astype(complex)
    src[0, 2] = src[2, 0] = 0.2
    dst = np.diag([0.5, 0.5, 0.0]).astype(complex)
    dst[0, 1] = dst[1, 0] = 0.2
    rho = DensityOperator(src, [("S", h3)])
    rho_p = DensityOperator(dst, [("S", h3)])
    assert not condition_holds(rho, rho_p)
    assert condition_holds(rho_p, rho_p)


def test_random_states_modes_form_symmetric_set():
    rng = np.random.default_rng(9)
    for _ in range(25):
        dim = int(rng.integers(2, 6))
        rho = rand_state(rng, dim)
        modes = coherent_modes(rho)
        assert EnergyVector.zero(BASIS1) in modes
        for m in modes:
            assert (m * -1) in modes
