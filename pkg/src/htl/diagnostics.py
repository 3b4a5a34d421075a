"""Finite-x membership verdicts for L_D, S_D, S_ac and S*, plus sufficient-condition checks.

Every verdict carries its evidence as a :class:`RatioSeries`. The rules are
numerical proxies for limits: a pass means the evidence converged within the
stated tolerance on the x values given, not a proof.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from htl.convolve import convolve_windows_at, density_convolve_at
from htl.measures import (
    DeltaWindow,
    DensityGrid,
    Distribution,
    GridMeasure,
    GridSpec,
    ParameterError,
    discretize,
    discretize_density,
)
from htl.series import (
    CONVERGING,
    DEFAULT_K,
    DEFAULT_TOL,
    DIVERGING,
    INCONCLUSIVE,
    OSCILLATING,
    RatioSeries,
)

PASS, FAIL = "pass", "fail"
CLASS_NAMES = ("L_Delta", "S_Delta", "S_ac", "S_star")


@dataclass(frozen=True, eq=False)
class MembershipVerdict:
    class_name: str
    window: DeltaWindow | None
    verdict: str
    evidence: RatioSeries
    condition_used: str
    witnesses: list = field(default_factory=list)
    notes: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_dict(self) -> dict:
        return {
            "class": self.class_name,
            "T": None if self.window is None else self.window.T,
            "verdict": self.verdict,
            "evidence_verdict": self.evidence.verdict,
            "final_ratio": self.evidence.final_ratio if len(self.evidence) else None,
            "final_abs_error": self.evidence.final_abs_error,
            "target": self.evidence.target,
            "tol": self.evidence.tol,
            "condition": self.condition_used,
            "witnesses": [float(x) for x in self.witnesses],
            "notes": self.notes,
        }


def _witnesses(series: RatioSeries) -> list[float]:
    """x values that exhibit the failure: turning points or the trailing points."""
    r = series.ratios
    if series.verdict == OSCILLATING and r.size >= 3:
        d = np.diff(r)
        idx = np.flatnonzero(d[:-1] * d[1:] < 0) + 1
        return series.xs[idx].tolist()[-6:]
    return series.xs[-series.k:].tolist()


def _verdict_from(series: RatioSeries, class_name: str, window, condition: str,
                  notes: str = "") -> MembershipVerdict:
    if series.verdict == CONVERGING:
        v, wit = PASS, []
    elif series.verdict in (DIVERGING, OSCILLATING):
        v, wit = FAIL, _witnesses(series)
    else:
        v, wit = INCONCLUSIVE, []
    return MembershipVerdict(class_name, window, v, series, condition, wit, notes)


def _window(dist, xs, T):
    xs = np.asarray(xs, dtype=np.float64)
    if isinstance(dist, GridMeasure):
        return dist.windows(xs, T)
    return np.asarray(dist.local_prob(xs, T), dtype=np.float64)


def _log_window(dist, xs, T):
    xs = np.asarray(xs, dtype=np.float64)
    if isinstance(dist, Distribution):
        return np.asarray(dist.log_local_prob(xs, T), dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.log(_window(dist, xs, T))


def default_cell_width(dist, window: DeltaWindow) -> float:
    if isinstance(dist, GridMeasure):
        return dist.cell_width
    if dist.lattice_span is not None and dist.kind != "point_mass":
        return float(dist.lattice_span)
    return 0.05 if not window.finite else min(0.05, window.T / 8)


def _grid_measure(dist, x_max: float, window: DeltaWindow, cell_width: float | None) -> GridMeasure:
    if isinstance(dist, GridMeasure):
        return dist
    w = cell_width or default_cell_width(dist, window)
    hi = x_max + (window.T if window.finite else 0.0)
    if dist.support_min < 0:
        raise ParameterError(f"{dist!r} has mass below 0; S_D checks need a law on [0, inf)")
    return discretize(dist, GridSpec.covering(0.0, hi, w))


# --------------------------------------------------------------------------
# class membership


def check_long_tailed(dist, window: DeltaWindow, xs, n_t: int = 8,
                      tol: float = DEFAULT_TOL, k: int = DEFAULT_K) -> MembershipVerdict:
    """sup over t in {1/n_t, ..., 1} of |F(x+t+D)/F(x+D) - 1|, which should tend to 0.

    The t-subgrid gives a lower bound on the true supremum over [0, 1].
    A window mass of zero at some x is reported as a fail with those x as
    witnesses (the ratio is undefined, so the law cannot be long-tailed there).
    """
    xs = np.asarray(xs, dtype=np.float64)
    T = window.T
    ts = np.arange(1, n_t + 1) / n_t
    cond = f"sup over t in {n_t}-point subgrid of (0,1]"
    if isinstance(dist, GridMeasure):
        # shifts snap to the grid; x values whose shifted window leaves the grid are dropped
        w = dist.cell_width
        ts = np.unique(np.maximum(np.round(ts / w), 1.0) * w)
        reach = dist.spec.right_edge - ts[-1] - (0.0 if math.isinf(T) else T)
        xs = xs[xs <= reach + 1e-9 * w]
        cond = f"sup over t in {ts.size}-point grid subset of (0,1]"
    base = _log_window(dist, xs, T)
    if np.any(np.isneginf(base)):
        zero = xs[np.isneginf(base)]
        ev = RatioSeries.build(xs, np.full(xs.size, np.inf), 0.0, tol, k)
        return MembershipVerdict("L_Delta", window, FAIL, ev, cond, zero.tolist()[:6],
                                 "window mass vanishes")
    dev = np.zeros(xs.size)
    for t in ts:
        shifted = _log_window(dist, xs + t, T)
        dev = np.maximum(dev, np.abs(np.expm1(shifted - base)))
    ev = RatioSeries.build(xs, dev, 0.0, tol, k, observed=dev, predicted=np.zeros(xs.size))
    return _verdict_from(ev, "L_Delta", window, cond)


def check_delta_subexp(dist, window: DeltaWindow, xs, cell_width: float | None = None,
                       tol: float = DEFAULT_TOL, k: int = DEFAULT_K,
                       require_long_tailed: bool = True) -> MembershipVerdict:
    """(F*F)(x+D) / 2F(x+D) -> 1, evaluated exactly on a grid carrying F's cell masses."""
    xs = np.asarray(xs, dtype=np.float64)
    m = _grid_measure(dist, float(xs.max()), window, cell_width)
    T = window.T
    window.check_grid(m.cell_width)
    single = m.windows(xs, T)
    if np.any(single <= 0):
        ev = RatioSeries.build(xs, np.full(xs.size, np.inf), 1.0, tol, k)
        return MembershipVerdict("S_Delta", window, FAIL, ev, "F*F(x+D)/2F(x+D)",
                                 xs[single <= 0].tolist()[:6], "window mass vanishes")
    double = convolve_windows_at(m, m, xs, T)
    ev = RatioSeries.from_observed(xs, double, 2 * single, 1.0, tol=tol, k=k)
    cond = f"F*F(x+D)/2F(x+D), grid width {m.cell_width:g}"
    if require_long_tailed:
        lt = check_long_tailed(m if isinstance(dist, GridMeasure) else dist, window, xs,
                               tol=tol, k=k)
        if lt.verdict == FAIL:
            return MembershipVerdict("S_Delta", window, FAIL, ev, cond + "; long-tailed check failed",
                                     lt.witnesses or _witnesses(ev), "not long-tailed")
        if lt.verdict == INCONCLUSIVE and ev.verdict == CONVERGING:
            return MembershipVerdict("S_Delta", window, INCONCLUSIVE, ev,
                                     cond + "; long-tailed check inconclusive")
    return _verdict_from(ev, "S_Delta", window, cond)


def density_grid_for(dist: Distribution, x_max: float, threshold: float | None = None,
                     cell_width: float = 0.05) -> DensityGrid:
    """Density samples on a half-line grid, threshold defaulting to max(1, support start)."""
    if not dist.has_density:
        raise ParameterError(f"{dist!r} has no density; S_ac needs an absolutely continuous law")
    if threshold is None:
        threshold = max(1.0, math.ceil(dist.support_min))
    return discretize_density(dist, GridSpec.covering(0.0, x_max, cell_width), threshold)


def check_density_subexp(f, xs, cell_width: float = 0.05, threshold: float | None = None,
                         tol: float = DEFAULT_TOL, k: int = DEFAULT_K) -> MembershipVerdict:
    """f^{*2}(x) / 2f(x) -> 1 with the two-term density formula, after a long-tail check of f."""
    xs = np.asarray(xs, dtype=np.float64)
    if isinstance(f, Distribution):
        f = density_grid_for(f, float(xs.max()) + 1.0, threshold, cell_width)
    if not isinstance(f, DensityGrid):
        raise ParameterError("check_density_subexp needs a DensityGrid or a law with a density")
    fx = f.at(xs)
    if np.any(fx <= 0):
        raise ParameterError("density vanishes on the requested x values")
    # long-tailed density: sup over t in (0,1] of |f(x+t)/f(x) - 1|
    n_t = max(1, int(round(1.0 / f.spec.cell_width)))
    step = max(1, n_t // 8)
    dev = np.zeros(xs.size)
    for j in range(step, n_t + 1, step):
        dev = np.maximum(dev, np.abs(f.at(xs + j * f.spec.cell_width) / fx - 1.0))
    lt = RatioSeries.build(xs, dev, 0.0, tol, k)
    h = density_convolve_at(f, f, xs)
    ev = RatioSeries.from_observed(xs, h, 2 * fx, 1.0, tol=tol, k=k)
    cond = f"f*f(x)/2f(x), threshold {f.threshold:g}, grid width {f.spec.cell_width:g}"
    if lt.verdict in (DIVERGING, OSCILLATING):
        return MembershipVerdict("S_ac", None, FAIL, ev, cond + "; density not long-tailed",
                                 _witnesses(lt))
    return _verdict_from(ev, "S_ac", None, cond)


def sstar_integral(dist: Distribution, x: float, step: float = 0.01) -> float:
    """Trapezoid value of the integral of tail(x-y) tail(y) over [0, x]."""
    n = max(200, int(math.ceil(x / step)))
    n = min(n, 2_000_000)
    y = np.linspace(0.0, x, n + 1)
    vals = np.asarray(dist.tail(x - y)) * np.asarray(dist.tail(y))
    return float(integrate.trapezoid(vals, y))


def check_sstar(dist: Distribution, xs, tol: float = DEFAULT_TOL, k: int = DEFAULT_K,
                step: float = 0.01) -> MembershipVerdict:
    """int_0^x tail(x-y) tail(y) dy / (2 m+ tail(x)) -> 1, with m+ = E max(xi, 0)."""
    m_plus = dist.positive_mean()
    if not math.isfinite(m_plus):
        raise ParameterError(f"{dist!r}: E max(xi,0) is infinite, S* is undefined")
    xs = np.asarray(xs, dtype=np.float64)
    obs = np.array([sstar_integral(dist, float(x), step) for x in xs])
    pred = 2 * m_plus * np.asarray(dist.tail(xs), dtype=np.float64)
    ev = RatioSeries.from_observed(xs, obs, pred, 1.0, tol=tol, k=k)
    return _verdict_from(ev, "S_star", None, f"trapezoid step {step:g}")


# --------------------------------------------------------------------------
# sufficient conditions


def check_suff_ratio(dist, window: DeltaWindow, xs, x0: float | None = None,
                     threshold: float = 1e-3, n_t: int = 16,
                     tol: float = DEFAULT_TOL, k: int = DEFAULT_K) -> MembershipVerdict:
    """c_hat(x) = min over t in (0, x] of F(x+t+D)/F(x+D), which must stay >= threshold.

    t runs over the subgrid x/n_t, 2x/n_t, ..., x. A pass certifies S_D together
    with a long-tailed window. A c_hat that keeps shrinking geometrically is a
    fail even when still above the threshold.
    """
    if not window.finite:
        raise ParameterError("check_suff_ratio needs a finite window")
    xs = np.asarray(xs, dtype=np.float64)
    if x0 is not None:
        xs = xs[xs > x0]
    T = window.T
    base = _window(dist, xs, T)
    if np.any(base <= 0):
        raise ParameterError("window mass vanishes on xs")
    c = np.full(xs.size, np.inf)
    for j in range(1, n_t + 1):
        c = np.minimum(c, _window(dist, xs + xs * j / n_t, T) / base)
    ev = RatioSeries.build(xs, c, float(np.mean(c[-k:])), tol, k)
    inf_c = float(c.min())
    shrinking = c.size >= 2 * k and np.all(np.diff(c[-2 * k:]) < 0) and c[-1] < 0.5 * c[-2 * k]
    cond = f"inf c_hat = {inf_c:.3g} (threshold {threshold:g})"
    if inf_c >= threshold and not shrinking:
        lt = check_long_tailed(dist, window, xs, tol=tol, k=k)
        if lt.verdict == FAIL:
            return MembershipVerdict("S_Delta", window, INCONCLUSIVE, ev,
                                     cond + "; long-tailed precondition failed", lt.witnesses)
        return MembershipVerdict("S_Delta", window, PASS, ev, cond)
    wit = xs[c < threshold].tolist()[:6] or xs[-k:].tolist()
    return MembershipVerdict("S_Delta", window, FAIL, ev, cond + ("; c_hat decays" if shrinking else ""), wit)


def check_suff_concave(dist, window: DeltaWindow, xs, gamma: float = 0.5,
                       x0: float | None = None, cell_width: float | None = None,
                       concave_span: float = 2000.0, tol: float = DEFAULT_TOL,
                       k: int = DEFAULT_K) -> MembershipVerdict:
    """Concavity of g(x) = -ln F(x+D) beyond x0 and x F(x**gamma + D) -> 0.

    Concavity is tested by second differences on a uniform grid over
    [x0, x0 + concave_span] and by three-point differences at every x in xs,
    with tolerance 1e-9 * max(1, |g|). A long-tailed failure upstream makes
    the result inconclusive (the certificate's precondition is not met).
    """
    if not window.finite:
        raise ParameterError("check_suff_concave needs a finite window")
    if not 0 < gamma < 1:
        raise ParameterError("gamma must lie in (0, 1)")
    xs = np.asarray(xs, dtype=np.float64)
    T = window.T
    x0 = float(xs[0]) if x0 is None else float(x0)
    # in logs: the window at x**gamma can underflow long before x F(x**gamma + D) is small
    decay = np.exp(np.log(xs) + _log_window(dist, xs ** gamma, T))
    ev = RatioSeries.build(xs, decay, 0.0, tol, k)
    lt = check_long_tailed(dist, window, xs, tol=tol, k=k)
    if lt.verdict != PASS:
        return MembershipVerdict("S_Delta", window, INCONCLUSIVE, ev,
                                 "precondition: long-tailed window check did not pass", lt.witnesses,
                                 "concavity certificate not applicable")
    h = cell_width or T / 8
    grid = np.arange(x0, x0 + concave_span, h)
    # three-point differences are meaningless once x + h rounds to x
    checks = [grid, xs[(xs >= x0 + h) & (xs + h > xs) & (xs - h < xs)]]
    worst = -math.inf
    bad = []
    for pts in checks:
        g = -_log_window(dist, pts, T)
        gm = -_log_window(dist, pts - h, T)
        gp = -_log_window(dist, pts + h, T)
        d2 = gp - 2 * g + gm
        lim = 1e-9 * np.maximum(1.0, np.abs(g))
        over = d2 - lim
        worst = max(worst, float(np.max(over / np.maximum(lim, 1e-300))))
        bad.extend(pts[over > 0].tolist())
    concave = not bad
    cond = f"h(x)=x^{gamma:g}; concavity on [{x0:g}, {x0 + concave_span:g}] step {h:g}"
    if not concave:
        return MembershipVerdict("S_Delta", window, FAIL, ev, cond + "; g not concave", bad[:6])
    return _verdict_from(ev, "S_Delta", window, cond)


def check_tail_equivalence(A, B, window: DeltaWindow, xs, window_b: DeltaWindow | None = None,
                           tol: float = DEFAULT_TOL, k: int = DEFAULT_K) -> RatioSeries:
    """A(x+D)/B(x+D_b) with D_b = D unless given; the target is the fitted limit.

    A separate ``window_b`` compares a window against a tail, as in the
    Weibull surrogate whose tail mimics the Weibull window.
    """
    xs = np.asarray(xs, dtype=np.float64)
    wb = window if window_b is None else window_b
    la = _log_window(A, xs, window.T)
    lb = _log_window(B, xs, wb.T)
    if np.any(np.isneginf(la)) or np.any(np.isneginf(lb)):
        raise ParameterError("window masses must be positive on xs")
    a, b = np.exp(la), np.exp(lb)
    r = np.exp(la - lb)
    target = float(np.mean(r[-k:]))
    return RatioSeries.build(xs, r, target, tol * max(1.0, abs(target)), k, observed=a, predicted=b)


def check_additivity(F_ref, G1, G2, window: DeltaWindow, xs, c1: float, c2: float,
                     cell_width: float | None = None, tol: float = DEFAULT_TOL,
                     k: int = DEFAULT_K) -> RatioSeries:
    """(G1*G2)(x+D)/F(x+D) -> c1 + c2 when G_i(x+D)/F(x+D) -> c_i and F is in S_D."""
    xs = np.asarray(xs, dtype=np.float64)
    x_max = float(xs.max())
    w = cell_width or default_cell_width(F_ref, window)
    m1 = _grid_measure(G1, x_max, window, w)
    m2 = _grid_measure(G2, x_max, window, w)
    obs = convolve_windows_at(m1, m2, xs, window.T)
    ref = _window(F_ref, xs, window.T)
    return RatioSeries.from_observed(xs, obs, ref, c1 + c2, tol=tol, k=k)


def check_n_windows(dist, window: DeltaWindow, xs, ns=(2, 3), **kw) -> dict[int, MembershipVerdict]:
    """S_D at the multiples nT of the window, on the same grid."""
    w = kw.pop("cell_width", None) or default_cell_width(dist, window)
    return {n: check_delta_subexp(dist, window.scaled(n), xs, cell_width=w, **kw) for n in ns}
