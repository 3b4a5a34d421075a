"""Grid convolution, powers, stopped sums, Kesten bound, overshoot, densities."""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy import stats

from htl.convolve import (
    StoppingLaw,
    convolve,
    convolve_arrays,
    convolve_power,
    convolve_windows_at,
    density_convolve_square,
    geometric_series_oracle,
    kesten_check,
    overshoot_local,
    stopped_sum,
)
from htl.measures import (
    DeltaWindow,
    GridMeasure,
    GridSpec,
    ParameterError,
    discretize,
    discretize_density,
    make_distribution,
)


def _direct(a, b):
    out = np.zeros(a.size + b.size - 1)
    for i, ai in enumerate(a):
        out[i:i + b.size] += ai * b
    return out


def _half(n, w=1.0):
    return GridSpec(w, -1, n)


def test_point_masses_shift():  # [TRIVIAL]
    spec = _half(20)
    c = convolve(GridMeasure.point_mass(3.0, spec), GridMeasure.point_mass(5.0, spec))
    k = c.spec.node_index(8.0)
    assert c.mass[k] == 1.0 and c.mass.sum() == 1.0


def test_delta_zero_is_identity():  # [TRIVIAL]
    a = discretize(make_distribution("pareto", [2.0]), _half(50))
    c = convolve(a, GridMeasure.delta_zero(1.0), a.spec.n_cells)
    np.testing.assert_array_equal(c.mass, a.mass)
    assert c.overflow == a.overflow


def test_fft_matches_direct_random_64():  # [DERIVED] direct summation oracle
    rng = np.random.default_rng(7)
    a, b = rng.random(64), rng.random(64)
    a /= a.sum()
    b /= b.sum()
    np.testing.assert_allclose(convolve_arrays(a, b, "fft"), _direct(a, b), atol=1e-12)
    np.testing.assert_allclose(convolve_arrays(a, b, "direct"), _direct(a, b), atol=1e-15)


def test_mismatched_widths():
    with pytest.raises(ValueError):
        convolve(GridMeasure.point_mass(1.0, _half(4)), GridMeasure.point_mass(1.0, _half(4, 0.5)))


def test_power_one_and_point_mass():  # [TRIVIAL]
    spec = _half(40)
    a = GridMeasure.point_mass(3.0, spec)
    assert convolve_power(a, 1) is a
    p = convolve_power(a, 5, out_cells=40)
    assert p.mass[p.spec.node_index(15.0)] == 1.0
    with pytest.raises(ParameterError):
        convolve_power(a, 0)


def test_power_four_matches_sequential():  # [DERIVED] sequential oracle
    a = discretize(make_distribution("pareto", [1.5]), _half(300))
    seq = a
    for _ in range(3):
        seq = convolve(seq, a, 300, method="direct")
    p = convolve_power(a, 4, out_cells=300)
    np.testing.assert_allclose(p.mass, seq.mass, atol=1e-12)
    assert p.overflow == pytest.approx(seq.overflow, abs=1e-12)


def test_density_square_of_exponential_is_gamma():  # [DERIVED] Gamma(2) density
    spec = _half(4000, 0.005)
    f = discretize_density(make_distribution("exponential", [1.0]), spec, threshold=0.0)
    h = density_convolve_square(f)
    xs = np.array([1.0, 2.0, 5.0, 10.0])
    got = h.values[[h.spec.node_index(x) for x in xs]]
    np.testing.assert_allclose(got, stats.gamma.pdf(xs, 2), rtol=1e-4, atol=1e-6)


def test_density_square_all_head():  # [TRIVIAL] empty integration range
    spec = _half(400, 0.5)
    F = make_distribution("exponential", [1.0])
    f = discretize_density(F, spec, threshold=60.0)
    h = density_convolve_square(f)
    k = h.spec.node_index(130.0)
    head_part = np.dot(f.head.mass[:k + 1], f.values[k::-1]) * 2
    assert h.values[k] == pytest.approx(head_part, rel=1e-12)


def test_density_square_pareto_trend():  # [PAPER] f^{*2} ~ 2 f
    spec = _half(40000, 0.05)
    F = make_distribution("pareto", [2.0])
    f = discretize_density(F, spec, threshold=1.0)
    h = density_convolve_square(f)
    xs = [50.0, 200.0, 1000.0]
    r = [h.values[h.spec.node_index(x)] / (2 * F.density(x)) for x in xs]
    assert abs(r[-1] - 1) < abs(r[0] - 1)
    assert abs(r[-1] - 1) < 0.02


def test_stopped_sum_trivial_laws():  # [TRIVIAL]
    a = discretize(make_distribution("pareto", [2.0]), _half(100))
    s, trunc = stopped_sum(a, StoppingLaw.geometric(0.0))
    assert s.mass[0] == 1.0 and s.mass[1:].sum() == 0.0 and trunc == 0.0
    s, _ = stopped_sum(a, StoppingLaw.custom([0.0, 1.0]))
    np.testing.assert_array_equal(s.mass, a.mass)


def test_stopped_sum_poisson_mass_audit():  # [DERIVED] mass conservation vs sum p_n
    a = discretize(make_distribution("pareto", [2.0]), _half(500))
    law = StoppingLaw.poisson(1.0)
    s, trunc = stopped_sum(a, law)
    assert s.total == pytest.approx(1.0 - trunc, abs=1e-12)
    assert trunc < 1e-12


def test_stopped_sum_matches_geometric_series():  # [DERIVED] term-by-term oracle
    a = discretize(make_distribution("pareto", [1.5]), _half(120))
    n = 12
    law = StoppingLaw.geometric(0.5, n_max=n - 1)
    s, _ = stopped_sum(a, law)
    o = geometric_series_oracle(a, 0.5, n)
    np.testing.assert_allclose(s.mass, o.mass, atol=1e-12)


def test_geometric_staircase():  # [DERIVED] unit atoms: S_tau = tau
    spec = _half(60)
    a = GridMeasure.point_mass(1.0, spec)
    s, _ = stopped_sum(a, StoppingLaw.geometric(0.5))
    k = np.arange(30)
    np.testing.assert_allclose(s.mass[k], 2.0 ** -(k + 1), rtol=1e-12)


def test_compound_poisson_point_mass():  # [DERIVED] Poisson pmf
    spec = _half(40)
    s, _ = stopped_sum(GridMeasure.point_mass(1.0, spec), StoppingLaw.poisson(1.0))
    k = np.arange(15)
    np.testing.assert_allclose(s.mass[k], stats.poisson.pmf(k, 1.0), rtol=1e-12)


def test_kesten_pareto_no_violations():  # [DERIVED] all powers computed directly
    F = make_distribution("pareto", [2.0])
    G = discretize(F, _half(400))
    rep = kesten_check(F, G, DeltaWindow(1.0), 0.5, 20, x0=50.0)
    assert rep.holds and rep.n_checked == 20


def test_kesten_flags_a_short_calibration():
    # below x0 the bulk of G^{*n} near 2n peaks at n = 6, past the calibration prefix
    F = make_distribution("pareto", [2.0])
    G = discretize(F, _half(400))
    rep = kesten_check(F, G, DeltaWindow(1.0), 0.5, 20, x0=5.0)
    assert not rep.holds
    assert all(n > 5 for n, _ in rep.violations)


def test_kesten_n_max_one():  # [TRIVIAL]
    F = make_distribution("pareto", [2.0])
    G = discretize(F, _half(100))
    rep = kesten_check(F, G, DeltaWindow(1.0), 0.5, 1, x0=2.0)
    assert rep.fitted_V == rep.sup_ratio and rep.holds


def test_kesten_bounded_support():  # [DERIVED]
    F = make_distribution("pareto", [2.0])
    spec = _half(200)
    mass = np.zeros(200)
    mass[1:5] = 0.25
    G = GridMeasure(spec, mass)
    rep = kesten_check(F, G, DeltaWindow(1.0), 1.0, 12, x0=2.0)
    assert rep.holds
    assert rep.ratios_by_n[-1] < rep.fitted_V


def test_kesten_zero_reference():
    G = GridMeasure.point_mass(1.0, _half(50))
    with pytest.raises(ParameterError):
        kesten_check(make_distribution("point_mass", [1.0]), G, DeltaWindow(1.0), 0.5, 3, x0=2.0)


def test_overshoot_single_step():  # [TRIVIAL]
    G = discretize(make_distribution("pareto", [2.0]), _half(200))
    r = overshoot_local(G, 10.0, 20.0, DeltaWindow(1.0), StoppingLaw.custom([0.0, 1.0]))
    assert r.value == pytest.approx(G.window(30.0, 1.0), rel=1e-14)


def test_overshoot_beyond_grid():  # [TRIVIAL]
    G = discretize(make_distribution("pareto", [2.0]), _half(50))
    r = overshoot_local(G, 10.0, 45.0, DeltaWindow(1.0), StoppingLaw.geometric(0.5))
    assert r.value == 0.0 and r.truncation > 0


def test_overshoot_enumeration_oracle():  # [DERIVED] enumerate all paths
    # increments uniform on {1,2,3}, tau geometric(0.5)
    spec = _half(40)
    mass = np.zeros(40)
    mass[[1, 2, 3]] = 1 / 3
    G = GridMeasure(spec, mass)
    law = StoppingLaw.geometric(0.5, n_max=25)
    x, y = 6.0, 1.0
    # P(S_{n-1} <= x, S_n in (x+y, x+y+1]) via explicit path distributions
    dist = {0: 1.0}
    want = 0.0
    surv = law.survival()
    for n in range(1, 26):
        new = {}
        for s, p in dist.items():
            for step in (1, 2, 3):
                if s <= x and x + y < s + step <= x + y + 1:
                    want += surv[n] * p / 3
                new[s + step] = new.get(s + step, 0.0) + p / 3
        dist = new
    got = overshoot_local(G, x, y, DeltaWindow(1.0), law)
    assert got.value == pytest.approx(want, rel=1e-12)


def test_windows_at_matches_grid_product():
    a = discretize(make_distribution("pareto", [1.5]), _half(600))
    c = convolve(a, a, 600)
    xs = np.array([10.0, 50.0, 200.0])
    for T in (1.0, 3.0, 300.0):
        np.testing.assert_allclose(convolve_windows_at(a, a, xs, T), c.windows(xs, T), rtol=1e-10)


# --------------------------------------------------------------------------
# properties

masses = hnp.arrays(np.float64, st.integers(1, 40), elements=st.floats(0.0, 1.0))


def _norm(m):
    s = m.sum()
    return m / s if s > 0 else np.eye(1, m.size)[0]


@given(a=masses, b=masses, oa=st.floats(0.0, 0.3), ob=st.floats(0.0, 0.3))
def test_mass_conservation(a, b, oa, ob):
    A = GridMeasure(_half(a.size), _norm(a) * (1 - oa), oa)
    B = GridMeasure(_half(b.size), _norm(b) * (1 - ob), ob)
    for cells in (None, 5):
        c = convolve(A, B, cells)
        assert c.total == pytest.approx(A.total * B.total, abs=1e-12)


@given(a=masses, b=masses, c=masses)
def test_commutative_and_associative(a, b, c):
    A, B, C = (GridMeasure(_half(m.size), _norm(m)) for m in (a, b, c))
    np.testing.assert_allclose(convolve(A, B).mass, convolve(B, A).mass, atol=1e-12)
    np.testing.assert_allclose(convolve(convolve(A, B), C).mass,
                               convolve(A, convolve(B, C)).mass, atol=1e-12)


@given(p=st.floats(0.05, 0.8), n=st.integers(2, 10))
def test_stopped_sum_geometric_identity(p, n):
    a = discretize(make_distribution("pareto", [2.0]), _half(60))
    s, _ = stopped_sum(a, StoppingLaw.geometric(p, n_max=n - 1).__class__(
        (1 - p) * p ** np.arange(n), "custom", None, p ** n))
    o = geometric_series_oracle(a, p, n)
    np.testing.assert_allclose(s.mass, o.mass, atol=1e-12)


@pytest.mark.parametrize("kind,params", [("pareto", [1.5]), ("pareto", [2.5]), ("example3", [])])
def test_power_liminf(kind, params):
    """F^{*n}(x+D)/F(x+D) >= n - tol at the largest reliable x."""
    F = make_distribution(kind, params)
    G = discretize(F, _half(6000))
    x = 2000.0
    for n in range(2, 7):
        Fn = convolve_power(G, n, out_cells=6000)
        assert Fn.window(x, 1.0) / F.local_prob(x, 1.0) >= n - 0.05


def test_sum_of_two_classes_ratio():
    """(F*G)(x+D) / (F(x+D) + G(x+D)) >= 1 - tol."""
    F, H = make_distribution("pareto", [1.5]), make_distribution("pareto", [2.5])
    a, b = discretize(F, _half(6000)), discretize(H, _half(6000))
    x = 2000.0
    got = convolve_windows_at(a, b, [x], 1.0)[0]
    assert got / (F.local_prob(x, 1.0) + H.local_prob(x, 1.0)) >= 0.95
