import math

import numpy as np
import pytest

from thermoops.classical import (
    ClassicalState,
    apply_classical_map,
    build_classical_target,
    gibbs_stochastic_feasible,
    gibbs_stochastic_nearest,
    thermomajorization_witness,
    thermomajorizes,
)
from thermoops.config import LatticeWindowError
from thermoops.modes import independent_basis
from thermoops.qstate import DensityOperator, EnergyVector, HamiltonianSpec, gibbs_state
from util import BASIS1, QUBIT


def rand_classical(rng, d):
    h = HamiltonianSpec.from_energies(
        [EnergyVector.unit(BASIS1, 0, c)
         for c in sorted(rng.integers(0, 4, size=d).tolist())])
    p = rng.dirichlet(np.ones(d))
    return ClassicalState(p, tuple(h.energies()))


def test_classical_state_validation():
    energies = tuple(QUBIT.energies())
    with pytest.raises(ValueError):
        ClassicalState(np.array([0.5, 0.6]), energies)
    with pytest.raises(ValueError):
        ClassicalState(np.array([1.1, -0.1]), energies)


def test_gibbs_weights_and_free_energy_gap():
    energies = tuple(QUBIT.energies())
    tau_probs = np.diag(gibbs_state(QUBIT, 1.0).matrix).real
    tau = ClassicalState(tau_probs, energies)
    assert abs(tau.free_energy_gap(1.0)) < 1e-12
    excited = ClassicalState(np.array([0.0, 1.0]), energies)
    # F(excited) - F(tau) = E - (-ln Z) = 1 + ln(1 + e^-1)
    want = 1.0 + math.log(1 + math.exp(-1.0))
    assert abs(excited.free_energy_gap(1.0) - want) < 1e-12


def test_anything_thermomajorizes_gibbs_and_nothing_beats_pure_ground():
    rng = np.random.default_rng(0)
    for _ in range(20):
        p = rand_classical(rng, 4)
        beta = float(rng.uniform(0.3, 2.0))
        g = p.gibbs_weights(beta)
        tau = ClassicalState(g, p.energies)
        assert thermomajorizes(p, tau, beta)
        if not np.allclose(p.probs, g):
            assert not thermomajorizes(tau, p, beta)


def test_curve_oracle_agrees_with_lp_on_random_pairs():
    rng = np.random.default_rng(1)
    disagreements = 0
    for _ in range(500):
        d = int(rng.integers(2, 6))
        h = HamiltonianSpec.from_energies(
            [EnergyVector.unit(BASIS1, 0, c)
             for c in sorted(rng.integers(0, 4, size=d).tolist())])
        energies = tuple(h.energies())
        p = ClassicalState(rng.dirichlet(np.ones(d)), energies)
        q = ClassicalState(rng.dirichlet(np.ones(d)), energies)
        beta = float(rng.uniform(0.3, 2.0))
        curve = thermomajorizes(p, q, beta)
        lp = gibbs_stochastic_feasible(p, q, beta) is not None
        disagreements += curve != lp
    assert disagreements == 0


def test_feasible_map_is_gibbs_stochastic_and_hits_target():
    rng = np.random.default_rng(2)
    checked = 0
    while checked < 25:
        p = rand_classical(rng, 4)
        beta = float(rng.uniform(0.3, 2.0))
        g = p.gibbs_weights(beta)
        # mix toward Gibbs: always reachable
        q = ClassicalState(0.5 * p.probs + 0.5 * g, p.energies)
        t = gibbs_stochastic_feasible(p, q, beta)
        assert t is not None
        assert t.min() > -1e-10
        assert np.abs(t.sum(axis=0) - 1.0).max() < 1e-8
        assert np.abs(t @ g - g).max() < 1e-8
        assert np.abs(t @ p.probs - q.probs).max() < 1e-8
        checked += 1


def test_nearest_map_achieves_zero_on_feasible_pairs():
    rng = np.random.default_rng(3)
    p = rand_classical(rng, 4)
    beta = 1.0
    g = p.gibbs_weights(beta)
    q = ClassicalState(0.7 * p.probs + 0.3 * g, p.energies)
    t, err = gibbs_stochastic_nearest(p, q, beta)
    assert err < 1e-9
    reached = apply_classical_map(t, p)
    assert np.abs(reached.probs - q.probs).max() < 1e-8


def test_nearest_map_error_matches_witness_direction():
    energies = tuple(QUBIT.energies())
    beta = 1.0
    tau = np.diag(gibbs_state(QUBIT, beta).matrix).real
    p = ClassicalState(tau, energies)
    q = ClassicalState(np.array([0.0, 1.0]), energies)
    assert not thermomajorizes(p, q, beta)
    w = thermomajorization_witness(p, q, beta)
    assert w["violation"] > 0
    t, err = gibbs_stochastic_nearest(p, q, beta)
    assert err > 0.1
    # the map is still Gibbs-stochastic even when the target is out of reach
    g = p.gibbs_weights(beta)
    assert np.abs(t @ g - g).max() < 1e-8


def test_free_energy_never_increases_under_gibbs_stochastic_maps():
    rng = np.random.default_rng(4)
    for _ in range(30):
        p = rand_classical(rng, 4)
        beta = float(rng.uniform(0.3, 2.0))
        g = p.gibbs_weights(beta)
        q = ClassicalState(0.4 * p.probs + 0.6 * g, p.energies)
        t = gibbs_stochastic_feasible(p, q, beta)
        reached = apply_classical_map(t, p)
        assert reached.free_energy_gap(beta) <= p.free_energy_gap(beta) + 1e-7


def test_target_plan_incoherent_state_has_no_shifts():
    rho_p = DensityOperator(np.diag([0.6, 0.4]), [("S", QUBIT)])
    basis = independent_basis([EnergyVector.zero(BASIS1)])
    plan = build_classical_target(rho_p, 1, basis)
    assert plan.max_abs_shift() == 0
    assert sorted(r.eigenvalue for r in plan.rows) == pytest.approx([0.4, 0.6])


def test_target_plan_window_lifts_every_coherent_row():
    # |+> on the resonant qubit: both eigenvectors of 0.8|+><+| + 0.2 tau
    # are coherent, so both rows must lift by one ladder quantum
    tau = gibbs_state(QUBIT, 1.0).matrix
    plus = np.full((2, 2), 0.5)
    rho_p = DensityOperator(0.8 * plus + 0.2 * tau, [("S", QUBIT)])
    basis = independent_basis([EnergyVector.unit(BASIS1)])
    plan = build_classical_target(rho_p, 1, basis)
    assert len(plan.rows) == 2
    for row in plan.rows:
        weights = np.abs(row.amplitudes) ** 2
        lift = float(row.shifts[0] @ weights)
        assert 0.0 < lift <= 1.0 + 1e-12
        # window energy sits one quantum above the mean row energy floor
        assert row.energy == EnergyVector.unit(BASIS1, 0, 1)
    # spectrum reproduced exactly
    evals = np.sort(np.linalg.eigvalsh(rho_p.matrix))
    assert np.allclose(np.sort(plan.spectrum()), evals)


def test_target_plan_mu2_rows_are_products():
    tau = gibbs_state(QUBIT, 1.0).matrix
    plus = np.full((2, 2), 0.5)
    rho_p = DensityOperator(0.8 * plus + 0.2 * tau, [("S", QUBIT)])
    basis = independent_basis([EnergyVector.unit(BASIS1)])
    plan = build_classical_target(rho_p, 2, basis)
    assert len(plan.rows) == 4
    evals = np.linalg.eigvalsh(rho_p.matrix)
    prods = sorted(float(a * b) for a in evals for b in evals)
    assert np.allclose(sorted(r.eigenvalue for r in plan.rows), prods)
    for row in plan.rows:
        weights = np.abs(row.amplitudes) ** 2
        lift = float(row.shifts[0] @ weights)
        assert 0.0 < lift <= 1.0 + 1e-12


def test_target_plan_rejects_coherence_without_ladder():
    plus = DensityOperator(np.full((2, 2), 0.5), [("S", QUBIT)])
    empty = independent_basis([EnergyVector.zero(BASIS1)])
    with pytest.raises(LatticeWindowError):
        build_classical_target(plus, 1, empty)
