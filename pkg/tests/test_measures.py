"""Catalog formulas, windows and discretization.

Oracle tags: [DERIVED] values come from an independent computation in the
test, [PAPER] values are the stated closed forms, [TRIVIAL] are asserted
directly.
"""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from htl.measures import (
    DeltaWindow,
    GridMeasure,
    GridSpec,
    ParameterError,
    add_measures,
    discretize,
    discretize_density,
    integrated_tail,
    local_prob,
    make_distribution,
)


def test_pareto_tail_closed_form():  # [PAPER]
    F = make_distribution("pareto", [1.0])
    assert F.tail(2.0) == pytest.approx(0.5, abs=1e-15)


def test_pareto_tail_at_support_start():  # [TRIVIAL]
    assert make_distribution("pareto", [1.0]).tail(1.0) == 1.0


def test_example1_atom_at_four():  # [DERIVED] normaliser by brute-force summation
    k = np.arange(1, 10_000_001, dtype=np.float64)
    even = np.sum(1.0 / k[::-1] ** 2) + 1.0 / 10_000_000  # integral tail correction
    odd = np.sum(2.0 ** -np.arange(0, 80, dtype=np.float64))
    gamma = 1.0 / (even + odd)
    F = make_distribution("example1")
    assert F.pmf(4.0) == pytest.approx(gamma / 4, rel=1e-12)
    assert F.local_prob(3.0, 1.0) == pytest.approx(gamma / 4, rel=1e-12)


def test_local_prob_pareto_window():  # [DERIVED] quadrature of the density
    F = make_distribution("pareto", [1.0])
    q, _ = integrate.quad(F.density, 2.0, 4.0)
    assert local_prob(F, 2.0, DeltaWindow(2.0)) == pytest.approx(0.25, abs=1e-15)
    assert q == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize("kind,params", [("pareto", [2.0]), ("weibull", [0.5]),
                                         ("lognormal", [1.0, 1.0]), ("exponential", [1.0])])
def test_infinite_window_below_support_is_full_mass(kind, params):  # [TRIVIAL]
    F = make_distribution(kind, params)
    assert F.local_prob(F.support_min - 1.0, math.inf) == pytest.approx(1.0, abs=1e-15)


def test_weibull_window_against_asymptote():  # [PAPER] with the exact value
    F = make_distribution("weibull", [0.5])
    got = F.local_prob(100.0, 1.0)
    exact = math.exp(-10.0) * -math.expm1(-(math.sqrt(101.0) - 10.0))
    asym = 0.5 * 100.0 ** -0.5 * math.exp(-10.0)
    assert got == pytest.approx(exact, rel=1e-12)
    # the finite-x gap is 2.7%: the asymptote is approached like 1 - x^(-1/2)/4
    assert got / asym == pytest.approx(0.97304, abs=1e-5)
    assert abs(got / asym - 1) < 0.03


def test_integrated_tail_pareto():  # [DERIVED] closed form checked by quadrature
    F = make_distribution("pareto", [2.0])
    q, _ = integrate.quad(F.tail, 4.0, np.inf)
    assert integrated_tail(F, 4.0) == pytest.approx(0.25, abs=1e-15)
    assert q == pytest.approx(0.25, rel=1e-10)


def test_integrated_tail_clamped():  # [TRIVIAL]
    assert make_distribution("pareto", [2.0]).integrated_tail(0.0) == 1.0


def test_integrated_tail_divergent():  # [TRIVIAL]
    with pytest.raises(ParameterError):
        make_distribution("pareto", [1.0]).integrated_tail(2.0)


@pytest.mark.parametrize("kind,params", [("pareto", [0.0]), ("weibull", [1.0]), ("weibull", [0.0]),
                                         ("lognormal", [0.0, 1.0]), ("lognormal", [1.0, 0.0]),
                                         ("exponential", [-1.0])])
def test_parameter_errors_name_the_constraint(kind, params):
    with pytest.raises(ParameterError, match="needs"):
        make_distribution(kind, params)


def test_unknown_kind_and_parameter_names():
    with pytest.raises(ParameterError, match="unknown distribution"):
        make_distribution("cauchy", [1.0])
    with pytest.raises(ParameterError, match="unknown parameter"):
        make_distribution("pareto", {"beta": 2.0})
    assert make_distribution("pareto", {"alpha": 2.0}).alpha == 2.0


def test_discretize_point_mass():  # [TRIVIAL]
    spec = GridSpec.covering(0.0, 5.0, 0.5)
    m = discretize(make_distribution("point_mass", [2.0]), spec)
    k = spec.node_index(2.0)
    assert m.mass[k] == 1.0 and m.mass.sum() == 1.0 and m.overflow == 0.0


def test_discretize_pareto_overflow():  # [DERIVED] closed-form tail at 100
    spec = GridSpec.covering(1.0, 100.0, 1.0)
    m = discretize(make_distribution("pareto", [1.0]), spec)
    assert m.overflow == pytest.approx(0.01, abs=1e-15)
    assert m.total == pytest.approx(1.0, abs=1e-12)


def test_discretize_example1_atoms():  # [DERIVED] direct series evaluation
    F = make_distribution("example1")
    spec = GridSpec.covering(0.0, 200.0, 1.0)
    m = discretize(F, spec)
    n = np.arange(201, dtype=np.float64)
    g = F.gamma
    atoms = np.where((n % 2 == 0) & (n >= 2), g / np.maximum(n // 2, 1) ** 2, 0.0)
    atoms = np.where(n % 2 == 1, g * 2.0 ** -(n // 2), atoms)
    np.testing.assert_allclose(m.mass, atoms, rtol=1e-12, atol=1e-300)


def test_window_must_be_positive():
    with pytest.raises(ParameterError):
        DeltaWindow(0.0)
    with pytest.raises(ParameterError):
        DeltaWindow(float("nan"))
    with pytest.raises(ParameterError):
        DeltaWindow(0.3).check_grid(0.25)


def test_grid_measure_total_invariant():
    spec = GridSpec(0.5, -1, 4)
    with pytest.raises(ValueError):
        GridMeasure(spec, [0.1, 0.2, 0.3, 0.4], 0.0, total=2.0)
    with pytest.raises(ValueError):
        GridMeasure(spec, [0.1, -0.2, 0.3, 0.4])
    m = add_measures([GridMeasure(spec, [1, 0, 0, 0]), GridMeasure(spec, [0, 1, 0, 0], 0.5)], [0.5, 0.5])
    assert m.total == pytest.approx(1.25)


def test_density_grid_for_point_mass_is_rejected():  # [TRIVIAL]
    with pytest.raises(ParameterError):
        discretize_density(make_distribution("point_mass", [1.0]), GridSpec.covering(0, 5, 0.5))


def test_example3_density_band():
    F = make_distribution("example3")
    n = np.arange(100, 5000, dtype=np.float64)
    r = F.pmf(n) * n ** 2
    assert r.min() >= 1.0 - 1e-9 and r.max() <= 2.0 + 1e-9
    assert r.max() - r.min() > 0.9


def test_example2_total_mass():
    F = make_distribution("example2")
    assert F.tail(0.5) == 1.0
    assert F.local_prob(0.5, 40.0) + F.tail(40.5) == pytest.approx(1.0, abs=1e-12)


# --------------------------------------------------------------------------
# properties

CATALOG = [("pareto", [1.5]), ("pareto", [2.0]), ("weibull", [0.5]), ("lognormal", [1.0, 1.0]),
           ("exponential", [2.0]), ("example1", []), ("example3", [])]


@given(idx=st.integers(0, len(CATALOG) - 1), w=st.sampled_from([0.25, 0.5, 1.0]),
       n=st.integers(1, 400))
def test_discretize_preserves_mass(idx, w, n):
    F = make_distribution(*CATALOG[idx])
    m = discretize(F, GridSpec(w, -1, n))
    assert m.mass.sum() + m.overflow == pytest.approx(1.0, abs=1e-12)


@given(idx=st.integers(0, len(CATALOG) - 1), k=st.integers(0, 150), kt=st.integers(1, 40))
def test_window_equals_cell_sum(idx, k, kt):
    F = make_distribution(*CATALOG[idx])
    w = 1.0 if F.lattice_span else 0.25
    spec = GridSpec(w, -1, 400)
    m = discretize(F, spec)
    x, T = k * w, kt * w
    assert m.window(x, T) == pytest.approx(float(F.local_prob(x, T)), abs=1e-12)


@given(x=st.floats(1.0, 1e6), alpha=st.floats(0.5, 4.0))
def test_pareto_infinite_window_is_tail(x, alpha):
    F = make_distribution("pareto", [alpha])
    assert F.local_prob(x, math.inf) == pytest.approx(x ** -alpha, rel=1e-12)


@given(x=st.floats(0.0, 1e4), beta=st.floats(0.1, 0.9))
def test_weibull_infinite_window_is_tail(x, beta):
    F = make_distribution("weibull", [beta])
    assert F.local_prob(x, math.inf) == pytest.approx(math.exp(-x ** beta), rel=1e-12)


@given(idx=st.integers(0, 4), xs=st.lists(st.floats(0.0, 1e4), min_size=2, max_size=20))
def test_tails_nonincreasing(idx, xs):
    F = make_distribution(*CATALOG[idx])
    xs = np.sort(np.asarray(xs))
    t = np.asarray(F.tail(xs))
    it = np.asarray(F.integrated_tail(xs))
    assert np.all(np.diff(t) <= 1e-15)
    assert np.all(np.diff(it) <= 1e-15)
