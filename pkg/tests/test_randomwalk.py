"""Supremum of a negative-drift walk: simulation, ladder heights, compounds.

The exact oracle is xi = Exp(lam) - c: ladder heights are Exp(lam) by
memorylessness and P(M > x) = s exp(-lam (1-s) x) with s = exp(-lam (1-s) c).
"""
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from htl.convolve import StoppingLaw, stopped_sum
from htl.measures import DeltaWindow, GridMeasure, GridSpec, ParameterError, make_distribution
from htl.randomwalk import (
    IncrementModel,
    cell_agreement,
    estimate_ladder,
    ladder_local_prediction,
    ladder_tail_prediction,
    simulate_supremum,
    supremum_density_check,
    supremum_via_geometric,
    taboo_sum,
)

LAM, C = 1.0, 2.0
SIGMA = brentq(lambda s: s - math.exp(-LAM * (1 - s) * C), 1e-9, 1 - 1e-9)
EXP = IncrementModel(make_distribution("exponential", [LAM]), C)
PAR = IncrementModel(make_distribution("pareto", [2.0]), 3.0)
NEG = IncrementModel(make_distribution("point_mass", [1.0]), 2.0)


def oracle_tail(x):
    return SIGMA * np.exp(-LAM * (1 - SIGMA) * np.asarray(x))


@pytest.fixture(scope="module")
def exp_runs():
    R = simulate_supremum(EXP, 40000, barrier=40.0, seed=3, x_max=30.0)
    L = estimate_ladder(EXP, 40000, barrier=40.0, seed=4, x_max=30.0)
    return R, L


@pytest.fixture(scope="module")
def pareto_ladder():
    return estimate_ladder(PAR, 100000, barrier=1000.0, seed=7, x_max=300.0)


def test_positive_drift_rejected():  # [TRIVIAL]
    with pytest.raises(ParameterError, match="drift"):
        IncrementModel(make_distribution("point_mass", [3.0]), 2.0)


def test_nonpositive_increments_give_delta_zero():  # [TRIVIAL]
    R = simulate_supremum(NEG, 200, barrier=10.0, seed=1, x_max=20.0)
    assert R.pi_hat.mass[0] == 1.0 and R.pi_hat.total == 1.0


def test_ladder_never_ascends():  # [TRIVIAL]
    L = estimate_ladder(NEG, 200, barrier=10.0, seed=1, x_max=20.0)
    assert L.p_hat == 0.0 and L.G_hat.total == pytest.approx(1.0)
    C0 = supremum_via_geometric(L)
    assert C0.pi_hat.mass[0] == 1.0


def test_geometric_staircase():  # [TRIVIAL]
    spec = GridSpec(1.0, -1, 40)
    pi, _ = stopped_sum(GridMeasure.point_mass(1.0, spec), StoppingLaw.geometric(0.5))
    np.testing.assert_allclose(pi.mass[:30], 2.0 ** -(np.arange(30) + 1.0), rtol=1e-12)


def test_monte_carlo_against_exact_law(exp_runs):  # [DERIVED] closed-form supremum law
    R, _ = exp_runs
    xs = np.array([0.0, 1.0, 2.0, 4.0, 8.0])
    est, hw = R.tail_ci(xs, level=0.999)
    assert np.all(np.abs(est - oracle_tail(xs)) <= hw)


def test_ladder_against_exact_law(exp_runs):  # [DERIVED] Exp(lam) ladder heights
    _, L = exp_runs
    assert abs(L.p_hat - SIGMA) <= L.ci_halfwidth * 3.29 / 1.96
    assert not L.biased
    np.testing.assert_allclose(np.mean(L.heights), 1 / LAM, rtol=0.03)


@pytest.mark.parametrize("method", ["empirical", "smoothed"])
def test_compound_against_exact_law(exp_runs, method):  # [DERIVED]
    _, L = exp_runs
    xs = np.array([1.0, 2.0, 4.0, 8.0])
    Cm = supremum_via_geometric(L, xs=xs, method=method)
    want = oracle_tail(xs) - oracle_tail(xs + 1)
    np.testing.assert_allclose(Cm.pi_hat.windows(xs, 1.0), want, rtol=0.06)


def test_cell_agreement_on_exact_case(exp_runs):
    R, L = exp_runs
    Cm = supremum_via_geometric(L, R.pi_hat.spec, method="smoothed")
    ok, worst, n = cell_agreement(R, Cm)
    assert n > 30 and ok, worst


def test_determinism():
    a = simulate_supremum(PAR, 3000, barrier=200.0, seed=11, x_max=50.0)
    b = simulate_supremum(PAR, 3000, barrier=200.0, seed=11, x_max=50.0)
    c = simulate_supremum(PAR, 3000, barrier=200.0, seed=12, x_max=50.0)
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(a.pi_hat.mass, b.pi_hat.mass)
    assert not np.array_equal(a.samples, c.samples)
    la = estimate_ladder(EXP, 3000, barrier=30.0, seed=5, x_max=20.0)
    lb = estimate_ladder(EXP, 3000, barrier=30.0, seed=5, x_max=20.0)
    np.testing.assert_array_equal(la.heights, lb.heights)


def test_barrier_flag(pareto_ladder):
    L = pareto_ladder
    assert L.biased == (abs(L.p_hat_2B - L.p_hat) > L.ci_halfwidth)


def test_local_prediction_linear_in_window():  # [TRIVIAL]
    a = ladder_local_prediction(PAR, 50.0, DeltaWindow(1.0), 0.3)
    b = ladder_local_prediction(PAR, 50.0, DeltaWindow(2.0), 0.3)
    assert b == pytest.approx(2 * a, rel=1e-15)


def test_local_prediction_integrates_to_tail():  # [DERIVED] Riemann sum of the local form
    T = 0.01
    xs = 20.0 + T * np.arange(2_000_000)
    s = np.sum(ladder_local_prediction(PAR, xs, DeltaWindow(T), 0.3))
    s += ladder_tail_prediction(PAR, xs[-1] + T, 0.3)
    assert s == pytest.approx(float(ladder_tail_prediction(PAR, 20.0, 0.3)), rel=1e-3)


def test_ladder_local_window_pareto(pareto_ladder):  # [DERIVED] Monte Carlo from estimate_ladder
    L = pareto_ladder
    x = 10.0
    T = 5.0
    hits = np.count_nonzero((L.heights > x) & (L.heights <= x + T))
    est = hits / L.n_paths / L.p_hat
    hw = 1.96 * math.sqrt(hits) / L.n_paths / L.p_hat
    # the local form is asymptotic: allow 15% besides the Monte Carlo error
    pred = float(np.sum(ladder_local_prediction(PAR, x + np.arange(50) * 0.1, DeltaWindow(0.1), L.p_hat)))
    assert abs(est - pred) <= hw + 0.15 * pred


def test_taboo_zero_function():  # [TRIVIAL]
    r = taboo_sum(NEG, lambda y: np.zeros_like(np.asarray(y, dtype=float)), 5.0, 100,
                  barrier=50.0, seed=1, cell_width=1.0)
    assert r.value == 0.0


def test_taboo_deterministic_walk():  # [DERIVED] closed-path series
    v = lambda y: 1.0 / (1.0 + np.asarray(y)) ** 2
    r = taboo_sum(NEG, v, 5.0, 100, barrier=1000.0, seed=1, cell_width=1.0)
    want = sum(1.0 / (6.0 + n) ** 2 for n in range(1001))
    assert r.value == pytest.approx(want, rel=1e-12)


def test_taboo_pareto_window(pareto_ladder):  # [DERIVED] quadrature for V
    F = make_distribution("pareto", [2.0])
    v = lambda y: np.asarray(F.local_prob(np.asarray(y, dtype=float), 1.0))
    vals = [taboo_sum(PAR, v, x, 0, ladder=pareto_ladder) for x in (20.0, 80.0)]
    for r in vals:
        assert r.value > 0 and r.predicted > 0
    assert vals[1].value < vals[0].value
    assert abs(vals[1].value / vals[1].predicted - 1) < 0.2


def test_density_check_needs_density():  # [TRIVIAL]
    L = estimate_ladder(NEG, 100, barrier=10.0, seed=1, x_max=20.0)
    with pytest.raises(ParameterError):
        supremum_density_check(NEG, [5.0], L)


def test_density_matches_window(pareto_ladder):  # [DERIVED] internal cross-check
    L = pareto_ladder
    xs = np.array([20.0, 50.0, 100.0])
    dc = supremum_density_check(PAR, xs, L, x_max=250.0)
    pi, _ = stopped_sum(dc.ladder.to_measure(), StoppingLaw.geometric(L.p_hat, tol=1e-12))
    dens_win = dc.compound.to_measure().windows(xs, 1.0)
    np.testing.assert_allclose(dens_win, pi.windows(xs, 1.0), rtol=1e-6)
    # the smoothed compound is a different discretization of the same law
    Cm = supremum_via_geometric(L, GridSpec.covering(0.0, 250.0, L.occ_step), xs=xs, method="smoothed")
    np.testing.assert_allclose(dens_win, Cm.pi_hat.windows(xs, 1.0), rtol=0.01)


def test_local_uniform_in_window(pareto_ladder):
    """pi(x+D) / ((1/m) int_x^{x+T} tail) deviates no more for T in {2, 5, inf} than for T0 = 1."""
    L = pareto_ladder
    xs = np.array([20.0, 50.0, 100.0])
    Cm = supremum_via_geometric(L, xs=xs, method="smoothed")
    devs = {}
    for T in (1.0, 2.0, 5.0, math.inf):
        upper = 0.0 if math.isinf(T) else np.asarray(PAR.integrated_tail(xs + T))
        pred = (np.asarray(PAR.integrated_tail(xs)) - upper) / PAR.m
        devs[T] = abs(Cm.pi_hat.windows(xs, T)[-1] / pred[-1] - 1)
    for T in (2.0, 5.0, math.inf):
        assert devs[T] <= devs[1.0] + 0.05, devs
