"""Transient renewal measures, the renewal equation and the key renewal regimes."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from htl.measures import GridMeasure, GridSpec, ParameterError, discretize, make_distribution
from htl.renewal import (
    DefectiveMeasure,
    RegimeUndetermined,
    classify_regime,
    dri_proxy,
    krt_regime,
    renewal_measure,
    renewal_measure_via_stopped_sum,
    solve_renewal,
)
from htl.series import CONVERGING, geometric_schedule


def pareto_kernel(theta, x_max=2001.0, w=0.05, alpha=2.0):
    spec = GridSpec.covering(0.0, x_max, w)
    return DefectiveMeasure.scaled(discretize(make_distribution("pareto", [alpha]), spec), theta)


def test_staircase():  # [TRIVIAL]
    spec = GridSpec(1.0, -1, 40)
    D = DefectiveMeasure(GridMeasure.point_mass(3.0, spec, 0.5))
    U = renewal_measure(D)
    k = np.arange(14)
    np.testing.assert_allclose(U.mass[3 * k], 0.5 ** k, rtol=1e-15)
    assert U.mass[np.setdiff1d(np.arange(40), 3 * k)].sum() == 0.0


def test_total_mass():  # [PAPER]
    U = renewal_measure(pareto_kernel(0.5, 200.0, 0.25), tol=1e-12)
    assert U.total == pytest.approx(2.0, abs=1e-9)


def test_renewal_window_ratio():  # [PAPER]
    D = pareto_kernel(0.5)
    U = renewal_measure(D)
    xs = geometric_schedule(10, 2000, 1.5, 0.05)
    r = U.windows(xs, 1.0) / D.G.windows(xs, 1.0)
    assert abs(r[-1] - 4.0) < 0.05 * 4.0
    assert abs(r[-1] - 4) < abs(r[0] - 4)


def test_theta_one_rejected():  # [TRIVIAL]
    spec = GridSpec(1.0, -1, 10)
    D = DefectiveMeasure(GridMeasure.point_mass(1.0, spec))
    with pytest.raises(ParameterError):
        renewal_measure(D)


def test_kernel_mass_at_zero_rejected():
    spec = GridSpec(1.0, -1, 10)
    with pytest.raises(ParameterError):
        DefectiveMeasure(GridMeasure.point_mass(0.0, spec, 0.5))


def test_two_constructions_agree():  # [DERIVED] geometric compound representation
    D = pareto_kernel(0.6, 300.0, 0.25)
    a = renewal_measure(D, tol=1e-14)
    b = renewal_measure_via_stopped_sum(D, tol=1e-14)
    np.testing.assert_allclose(a.mass, b.mass, atol=1e-9)


def test_zero_input():  # [TRIVIAL]
    D = pareto_kernel(0.5, 100.0, 0.25)
    sol = solve_renewal(lambda x: np.zeros_like(x), D)
    assert np.all(sol.Z == 0)


def test_empty_convolution():  # [TRIVIAL] theta -> 0 leaves Z = z
    spec = GridSpec(1.0, -1, 30)
    D = DefectiveMeasure(GridMeasure.point_mass(100.0, GridSpec(1.0, -1, 200), 1e-300))
    z = lambda x: np.exp(-x)
    sol = solve_renewal(z, D, cross_check=False)
    np.testing.assert_allclose(sol.Z, np.exp(-sol.nodes), rtol=1e-15)
    del spec


def test_unit_atom_series():  # [DERIVED] Z(x) = sum 0.5^n z(x-n) = 0.5^floor(x)
    spec = GridSpec(0.25, -1, 80)
    D = DefectiveMeasure(GridMeasure.point_mass(1.0, spec, 0.5))
    sol = solve_renewal(lambda x: (x < 1.0).astype(float), D)
    np.testing.assert_allclose(sol.Z, 0.5 ** np.floor(sol.nodes), rtol=1e-14)
    assert sol.check_error < 1e-8


def test_solver_cross_check():  # [DERIVED] two independent computations
    D = pareto_kernel(0.5, 300.0, 0.25)
    sol = solve_renewal(lambda x: np.exp(-x) * (1 + np.sin(x) ** 2), D)
    assert sol.check_error < 1e-8
    assert np.all(sol.Z >= sol.z_input)


def test_negative_input_rejected():
    with pytest.raises(ParameterError):
        solve_renewal(lambda x: -np.ones_like(x), pareto_kernel(0.5, 50.0, 0.25))


def test_regime_compact_input():  # [PAPER]
    D = pareto_kernel(0.5)
    xs = geometric_schedule(10, 2000, 1.5, 0.05)
    sol = krt_regime(lambda x: np.where(x < 1.0, 1 - x, 0.0), D, xs, tol=0.1)
    assert sol.regime == "i"
    assert abs(sol.evidence.final_ratio - 1) < 0.1
    assert sol.preconditions["dri_proxy"]["ok"]


def test_regime_proportional_input():  # [PAPER]
    F = make_distribution("pareto", [2.0])
    D = pareto_kernel(0.5)
    xs = geometric_schedule(10, 2000, 1.5, 0.05)
    sol = krt_regime(lambda x: 0.7 * 0.5 * np.asarray(F.local_prob(x, 1.0)), D, xs, tol=0.1)
    assert sol.regime == "ii" and sol.c == pytest.approx(0.7, rel=1e-2)
    assert abs(sol.evidence.final_ratio - 1) < 0.1


def test_regime_heavy_input():  # [PAPER]
    spec = GridSpec.covering(0.0, 2001.0, 0.05)
    D = DefectiveMeasure.scaled(discretize(make_distribution("exponential", [1.0]), spec), 0.5)
    dens = make_distribution("pareto", [1.5])
    xs = geometric_schedule(10, 2000, 1.5, 0.05)
    sol = krt_regime(lambda x: np.nan_to_num(dens.density(x)), D, xs, tol=0.1)
    assert sol.regime == "iii"
    assert abs(sol.evidence.final_ratio - 1) < 0.1


def test_regime_undetermined():
    x = np.arange(1.0, 13.0)
    with pytest.raises(RegimeUndetermined):
        classify_regime(np.where(x % 2 == 0, 1.0, 3.0), x)


def test_example1_renewal_does_not_settle():
    """U(x+D)/G(x+D) for the example1 kernel at T=1 keeps swinging."""
    spec = GridSpec(1.0, -1, 1500)
    D = DefectiveMeasure.scaled(discretize(make_distribution("example1"), spec), 0.5)
    U = renewal_measure(D)
    xs = np.arange(1001.0, 1011.0)
    r = U.windows(xs, 1.0) / D.G.windows(xs, 1.0)
    assert np.ptp(r) > 1.0


def test_dri_proxy_rejects_nondecaying():
    zs = np.ones(400)
    ok, _ = dri_proxy(zs, 0.25, 100.0)
    assert not ok


@settings(max_examples=15)
@given(bump=st.lists(st.floats(0.0, 2.0), min_size=8, max_size=8),
       extra=st.lists(st.floats(0.0, 1.0), min_size=8, max_size=8))
def test_monotone_in_input(bump, extra):
    D = pareto_kernel(0.5, 50.0, 0.25)
    n = D.spec.n_cells
    z1 = np.zeros(n)
    z1[:8] = bump
    z2 = z1.copy()
    z2[:8] += extra
    Z1 = solve_renewal(z1, D, cross_check=False).Z
    Z2 = solve_renewal(z2, D, cross_check=False).Z
    assert np.all(Z2 >= Z1 - 1e-15)
