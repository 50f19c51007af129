import math
import os
import subprocess
import sys

import numpy as np
import pytest

from thermoops.classical import build_classical_target
from thermoops.modes import independent_basis
from thermoops.qstate import DensityOperator, EnergyVector
from thermoops.randomwalk import (
    HittingEstimate,
    WalkSpec,
    hitting_bound,
    simulate_hitting,
    solve_gamma,
    walk_from_unitary,
)
from util import BASIS1, QUBIT


def test_gamma_closed_form_three_quarters_up():
    # p(+1)=3/4, p(-1)=1/4: gamma solves 3g/4 = 1/(4g), so g = sqrt(1/3)
    spec = WalkSpec({1: 0.75, -1: 0.25}, xi=1)
    g = solve_gamma(spec)
    assert abs(g - math.sqrt(1.0 / 3.0)) < 1e-10


def test_gamma_closed_form_nearest_neighbor_family():
    # for +-1 walks the balance equation gives gamma = sqrt(q/p) directly
    for p_up in (0.6, 0.75, 0.9):
        spec = WalkSpec({1: p_up, -1: 1.0 - p_up}, xi=2)
        assert abs(solve_gamma(spec) - math.sqrt((1 - p_up) / p_up)) < 1e-10


def test_bound_dominates_gambler_ruin():
    # the exact +-1 hit probability is (q/p)^xi; the bound must sit above it
    for p_up, xi in [(0.75, 1), (0.75, 3), (0.6, 2)]:
        spec = WalkSpec({1: p_up, -1: 1.0 - p_up}, xi=xi)
        b = hitting_bound(spec)
        exact = ((1.0 - p_up) / p_up) ** xi
        assert exact <= b["bound"] <= b["gamma_pow_xi"] + 1e-12


def test_bound_closed_form_for_criterion_walk():
    # gamma = sqrt(1/3): bound = 1/(gamma^-2 - gamma^-1 + 1) = 1/(4 - sqrt(3))
    spec = WalkSpec({1: 0.75, -1: 0.25}, xi=1)
    b = hitting_bound(spec)
    assert abs(b["bound"] - 1.0 / (4.0 - math.sqrt(3.0))) < 1e-10
    assert abs(b["bound"] - 0.44094) < 5e-5


def test_bound_fields_consistent():
    spec = WalkSpec({2: 0.5, 1: 0.2, -1: 0.3}, xi=4)
    b = hitting_bound(spec)
    g = b["gamma"]
    assert 0 < g < 1
    assert abs(b["gamma_pow_xi"] - g**4) < 1e-12
    assert abs(b["bound"] - 1.0 / (g ** -5 - 1.0 / g + 1.0)) < 1e-12
    assert b["bound"] <= b["gamma_pow_xi"]
    assert abs(b["drift"] - spec.drift()) < 1e-12


def test_gamma_balances_up_and_down_ladders():
    # gamma is the root of sum_i p_i (g + .. + g^i) = sum_i p_-i (g^-1 + .. + g^-i)
    spec = WalkSpec({3: 0.4, 1: 0.35, -2: 0.25}, xi=2)
    g = solve_gamma(spec)
    up = 0.4 * (g + g**2 + g**3) + 0.35 * g
    down = 0.25 * (1.0 / g + 1.0 / g**2)
    assert abs(up - down) < 1e-9


def test_no_downward_jumps_means_zero_hit_probability():
    spec = WalkSpec({1: 0.5, 2: 0.5}, xi=1)
    assert solve_gamma(spec) == 0.0
    assert hitting_bound(spec)["bound"] == 0.0


def test_simulation_agrees_with_gambler_ruin():
    spec = WalkSpec({1: 0.75, -1: 0.25}, xi=1)
    est = simulate_hitting(spec, trajectories=100_000, seed=11)
    exact = 1.0 / 3.0
    assert abs(est.estimate - exact) <= 3 * est.stderr
    assert est.estimate <= hitting_bound(spec)["bound"] + 3 * est.stderr


def test_simulation_deterministic_and_seed_sensitive():
    spec = WalkSpec({1: 0.7, -2: 0.3}, xi=2)
    a = simulate_hitting(spec, trajectories=20_000, seed=5)
    b = simulate_hitting(spec, trajectories=20_000, seed=5)
    c = simulate_hitting(spec, trajectories=20_000, seed=6)
    assert a.hits == b.hits and a.estimate == b.estimate
    assert a.hits != c.hits


def test_estimate_bookkeeping():
    spec = WalkSpec({1: 0.75, -1: 0.25}, xi=1)
    est = simulate_hitting(spec, trajectories=5_000, seed=3)
    assert isinstance(est, HittingEstimate)
    assert est.estimate == est.hits / est.trajectories
    binom = math.sqrt(est.estimate * (1 - est.estimate) / est.trajectories)
    assert abs(est.stderr - binom) < 1e-15
    # no absorber above the floor: every non-hit trajectory survives
    assert abs(est.escaped_mass - (1.0 - est.estimate)) < 1e-15
    # survivors drifted ~ horizon/2 up, so their residual bound is negligible
    assert 0 <= est.survivor_tail_bound < 1e-12


def test_python_backend_bit_identical_to_compiled():
    code = (
        "from thermoops.randomwalk import WalkSpec, simulate_hitting\n"
        "from thermoops._kernels import BACKEND_NAME\n"
        "e = simulate_hitting(WalkSpec({2: 0.6, -1: 0.4}, xi=3),"
        " trajectories=40000, seed=123)\n"
        "print(BACKEND_NAME, e.hits, repr(e.estimate), repr(e.survivor_tail_bound))\n"
    )
    outs = {}
    for force in ("0", "1"):
        env = dict(os.environ, THERMOOPS_FORCE_PY_KERNEL=force)
        r = subprocess.run([sys.executable, "-c", code], capture_output=True,
                           text=True, env=env, check=True)
        name, rest = r.stdout.split(maxsplit=1)
        outs[name] = rest
    if "cython" not in outs:
        pytest.skip("compiled kernel not built")
    assert outs["cython"] == outs["python"]


def test_walk_from_unitary_reads_plan_shifts():
    # pure coherent target: one plan row, jump law = |amplitude|^2 per shift
    amp = math.sqrt(0.05)
    m = np.array([[amp**2, amp * math.sqrt(0.95)],
                  [amp * math.sqrt(0.95), 0.95]])
    rho = DensityOperator(m, [("S", QUBIT)])
    basis = independent_basis([EnergyVector.unit(BASIS1)])
    plan = build_classical_target(rho, 1, basis, radius=4)
    assert len(plan.rows) == 1
    spec = walk_from_unitary(plan, np.array([1.0]), 0, xi=2)
    assert spec.xi == 2
    assert set(spec.probs) == {0, 1}
    assert abs(spec.probs[1] - 0.05) < 1e-12
    assert abs(spec.probs[0] - 0.95) < 1e-12
    assert abs(spec.drift() - 0.05) < 1e-12


def test_walk_from_unitary_input_validation():
    amp = math.sqrt(0.05)
    m = np.array([[amp**2, amp * math.sqrt(0.95)],
                  [amp * math.sqrt(0.95), 0.95]])
    rho = DensityOperator(m, [("S", QUBIT)])
    basis = independent_basis([EnergyVector.unit(BASIS1)])
    plan = build_classical_target(rho, 1, basis, radius=4)
    with pytest.raises(ValueError):
        walk_from_unitary(plan, np.array([0.5, 0.5]), 0, xi=1)
    with pytest.raises(IndexError):
        walk_from_unitary(plan, np.array([1.0]), 1, xi=1)


def test_walkspec_validation():
    with pytest.raises(ValueError):
        WalkSpec({1: 0.6, -1: 0.3}, xi=1)       # probabilities must sum to 1
    with pytest.raises(ValueError):
        WalkSpec({1: 0.75, -1: 0.25}, xi=0)     # floor distance must be >= 1
    with pytest.raises(ValueError):
        WalkSpec({1: 1.2, -1: -0.2}, xi=1)      # probabilities in [0, 1]
    with pytest.raises(ValueError):
        solve_gamma(WalkSpec({0: 1.0}, xi=1))   # zero drift has no bound


def test_simulation_requires_positive_drift():
    with pytest.raises(ValueError):
        simulate_hitting(WalkSpec({1: 0.25, -1: 0.75}, xi=1))


def test_ordered_jumps_sorted():
    spec = WalkSpec({3: 0.2, -1: 0.5, 1: 0.3}, xi=1)
    jumps, probs = spec.ordered()
    assert jumps.tolist() == [-1, 1, 3]
    assert probs.tolist() == [0.5, 0.3, 0.2]
    assert spec.max_jump == 3
