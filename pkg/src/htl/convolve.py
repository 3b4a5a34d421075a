"""Grid convolution, convolution powers, densities and randomly stopped sums."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy import stats

from htl import kernels
from htl.measures import (
    DeltaWindow,
    DensityGrid,
    Distribution,
    GridMeasure,
    GridSpec,
    ParameterError,
)

DIRECT_THRESHOLD = 4096


def _check_widths(a: GridSpec, b: GridSpec) -> None:
    if not math.isclose(a.cell_width, b.cell_width, rel_tol=1e-12):
        raise ValueError(f"cell widths differ: {a.cell_width} vs {b.cell_width}")


def convolve_arrays(a: np.ndarray, b: np.ndarray, method: str = "auto") -> np.ndarray:
    """Full linear convolution of two nonnegative arrays."""
    if method == "auto":
        method = "direct" if max(a.size, b.size) < DIRECT_THRESHOLD else "fft"
    if method == "direct":
        return kernels.direct_convolve(np.ascontiguousarray(a, dtype=np.float64),
                                       np.ascontiguousarray(b, dtype=np.float64))
    if method != "fft":
        raise ValueError(f"unknown convolution method {method!r}")
    n = a.size + b.size - 1
    size = sfft.next_fast_len(n, real=True)
    out = sfft.irfft(sfft.rfft(a, size) * sfft.rfft(b, size), size)[:n]
    # round-off can leave tiny negative values where the exact result is 0
    return np.maximum(out, 0.0)


def convolve(a: GridMeasure, b: GridMeasure, out_cells: int | None = None,
             method: str = "auto") -> GridMeasure:
    """The measure a*b on the grid with origin ``oa + ob + 1``.

    With ``out_cells`` the result is cut to that many cells and the products
    landing beyond join the overflow bucket.
    """
    _check_widths(a.spec, b.spec)
    full = convolve_arrays(a.mass, b.mass, method)
    n_full = full.size
    n = n_full if out_cells is None else int(out_cells)
    spec = GridSpec(a.cell_width, a.spec.origin_index + b.spec.origin_index + 1, n)
    overflow = a.overflow * b.total + a.total * b.overflow - a.overflow * b.overflow
    if n < n_full:
        overflow += float(full[n:].sum())
        mass = full[:n]
    else:
        mass = np.zeros(n)
        mass[:n_full] = full
    return GridMeasure(spec, mass, max(overflow, 0.0))


def _on_half_line(a: GridMeasure) -> GridMeasure:
    """Re-index a measure supported on [0, inf) onto a grid whose node 0 is index 0."""
    if a.spec.origin_index == -1:
        return a
    if a.spec.origin_index > -1:
        spec = GridSpec(a.cell_width, -1, a.spec.n_cells + a.spec.origin_index + 1)
        return a.with_spec(spec)
    k = -1 - a.spec.origin_index
    if np.any(a.mass[:k] > 0):
        raise ParameterError("measure has mass below 0; a half-line grid is required")
    return a.with_spec(GridSpec(a.cell_width, -1, a.spec.n_cells - k))


def convolve_power(a: GridMeasure, n: int, out_cells: int | None = None,
                   method: str = "auto") -> GridMeasure:
    """a^{*n} by binary exponentiation.

    ``out_cells`` truncates every intermediate product; this is exact on the
    kept cells only for measures on [0, inf), which is therefore required.
    """
    if int(n) != n or n < 1:
        raise ParameterError(f"convolution power needs n >= 1, got {n}")
    n = int(n)
    if n == 1:
        return a
    if out_cells is not None:
        a = _on_half_line(a)
    result = None
    base = a
    while True:
        if n & 1:
            result = base if result is None else convolve(result, base, out_cells, method)
        n >>= 1
        if not n:
            break
        base = convolve(base, base, out_cells, method)
    return result


def delta_zero_like(a: GridMeasure, n_cells: int | None = None) -> GridMeasure:
    n = a.spec.n_cells if n_cells is None else n_cells
    return GridMeasure.point_mass(0.0, GridSpec(a.cell_width, -1, n))


# --------------------------------------------------------------------------
# stopping laws


@dataclass(frozen=True, eq=False)
class StoppingLaw:
    """Law of a stopping index: probs[n] = P(tau = n) for n <= n_max.

    ``remainder`` is the dropped mass P(tau > n_max).
    """

    probs: np.ndarray
    tail_kind: str
    param: float | None = None
    remainder: float = 0.0

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ParameterError("stopping law needs a nonempty probability vector")
        if p.min() < 0:
            raise ParameterError("stopping probabilities must be nonnegative")
        if self.tail_kind not in ("geometric", "poisson", "custom"):
            raise ParameterError(f"unknown tail kind {self.tail_kind!r}")
        s = float(p.sum()) + self.remainder
        if abs(s - 1.0) > 1e-9:
            raise ParameterError(f"stopping probabilities sum to {s}, not 1")
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @classmethod
    def geometric(cls, p: float, n_max: int | None = None, tol: float = 1e-12) -> "StoppingLaw":
        """P(tau = n) = (1 - p) p**n, n >= 0."""
        if not 0 <= p < 1:
            raise ParameterError(f"geometric law needs 0 <= p < 1, got {p}")
        if n_max is None:
            n_max = 0 if p == 0 else max(0, math.ceil(math.log(tol) / math.log(p)) - 1)
        n = np.arange(n_max + 1)
        probs = (1 - p) * p ** n
        return cls(probs, "geometric", float(p), float(p ** (n_max + 1)))

    @classmethod
    def poisson(cls, mu: float, n_max: int | None = None, tol: float = 1e-12) -> "StoppingLaw":
        if not mu >= 0:
            raise ParameterError(f"Poisson law needs mu >= 0, got {mu}")
        if n_max is None:
            n_max = int(stats.poisson.isf(tol, mu)) + 1 if mu > 0 else 0
            while stats.poisson.sf(n_max, mu) >= tol:
                n_max += 1
        probs = stats.poisson.pmf(np.arange(n_max + 1), mu)
        return cls(probs, "poisson", float(mu), float(stats.poisson.sf(n_max, mu)))

    @classmethod
    def custom(cls, probs) -> "StoppingLaw":
        return cls(np.asarray(probs, dtype=np.float64), "custom", None, 0.0)

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    @property
    def mean(self) -> float:
        if self.tail_kind == "geometric":
            return self.param / (1 - self.param)
        if self.tail_kind == "poisson":
            return self.param
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def with_n_max(self, n_max: int) -> "StoppingLaw":
        if self.tail_kind == "geometric":
            return StoppingLaw.geometric(self.param, n_max)
        if self.tail_kind == "poisson":
            return StoppingLaw.poisson(self.param, n_max)
        if n_max < self.n_max:
            raise ParameterError("a custom law cannot be shortened")
        return self

    def survival(self) -> np.ndarray:
        """P(tau >= n) for n = 0..n_max."""
        return np.cumsum(self.probs[::-1])[::-1] + self.remainder

    def weighted_tail(self, growth: float, n: int) -> float:
        """Sum over k > n of p_k * growth**k (through the closed form when there is one)."""
        if self.tail_kind == "geometric":
            q = self.param * growth
            return math.inf if q >= 1 else (1 - self.param) * q ** (n + 1) / (1 - q)
        if self.tail_kind == "poisson":
            mu = self.param
            # e^{-mu} sum_{k>n} (mu g)^k / k! = e^{mu(g-1)} P(Poisson(mu g) > n)
            return math.exp(mu * (growth - 1)) * float(stats.poisson.sf(n, mu * growth))
        return 0.0 if n >= self.n_max else float(
            np.dot(self.probs[n + 1:], growth ** np.arange(n + 1, self.n_max + 1)))

    def kesten_n_max(self, V: float, epsilon: float, rel: float = 1e-6) -> "StoppingLaw":
        """Widen n_max until V * sum_{k > n_max} p_k (1+eps)^k < rel * E tau."""
        target = rel * max(self.mean, 1e-300)
        n = self.n_max
        if self.weighted_tail(1 + epsilon, n) * V < target:
            return self
        if self.tail_kind == "custom":
            return self
        if math.isinf(self.weighted_tail(1 + epsilon, 10 ** 6)):
            raise ParameterError("E(1+eps)^tau is infinite; no Kesten truncation exists")
        while self.weighted_tail(1 + epsilon, n) * V >= target:
            n += max(1, n // 4)
        return self.with_n_max(n)


def stopped_sum(a: GridMeasure, law: StoppingLaw, out_cells: int | None = None,
                method: str = "auto") -> tuple[GridMeasure, float]:
    """Sum over n of p_n a^{*n} on a half-line grid; returns (measure, truncation).

    The truncation is the dropped stopping mass P(tau > n_max).
    """
    a = _on_half_line(a)
    n_cells = a.spec.n_cells if out_cells is None else int(out_cells)
    if n_cells != a.spec.n_cells:
        a = a.with_spec(a.spec.with_cells(n_cells))
    spec = a.spec
    mass = np.zeros(n_cells)
    mass[0] = law.probs[0]
    overflow = 0.0
    power = None
    for n in range(1, law.n_max + 1):
        power = a if power is None else convolve(power, a, n_cells, method)
        pn = law.probs[n]
        if pn:
            mass += pn * power.mass
            overflow += pn * power.overflow
    return GridMeasure(spec, mass, overflow), law.remainder


def geometric_series_oracle(a: GridMeasure, p: float, n_terms: int) -> GridMeasure:
    """Partial geometric series (1-p) sum_{n < n_terms} p^n a^{*n}, term by term.

    Independent of ``stopped_sum``: every power is rebuilt from scratch by
    sequential direct convolution.
    """
    a = _on_half_line(a)
    n_cells = a.spec.n_cells
    acc = np.zeros(n_cells)
    acc[0] = 1 - p
    over = 0.0
    for n in range(1, n_terms):
        power = a
        for _ in range(n - 1):
            power = convolve(power, a, n_cells, method="direct")
        acc += (1 - p) * p ** n * power.mass
        over += (1 - p) * p ** n * power.overflow
    return GridMeasure(a.spec, acc, over)


# --------------------------------------------------------------------------
# Kesten majorant


@dataclass(frozen=True, eq=False)
class KestenReport:
    epsilon: float
    x0: float
    fitted_V: float
    n_checked: int
    violations: list = field(default_factory=list)
    sup_ratio: float = math.nan
    ratios_by_n: np.ndarray | None = None  # sup over x for each n

    @property
    def holds(self) -> bool:
        return not self.violations


def kesten_check(F_ref: Distribution, G: GridMeasure, window: DeltaWindow, epsilon: float,
                 n_max: int, x0: float, calibration: int = 5,
                 method: str = "auto") -> KestenReport:
    """Check G^{*n}(x+D) <= V (1+eps)^n F(x+D) with V fitted on n <= calibration.

    All grid-aligned x > x0 whose window fits on the grid are checked.
    """
    if not epsilon > 0:
        raise ParameterError("epsilon must be > 0")
    if n_max < 1:
        raise ParameterError("n_max must be >= 1")
    G = _on_half_line(G)
    T = window.T
    w = G.cell_width
    window.check_grid(w)
    nodes = G.nodes
    last = G.spec.right_edge - (0.0 if math.isinf(T) else T)
    xs = nodes[(nodes > x0 + 1e-12 * max(1.0, x0)) & (nodes <= last + 1e-9 * w)]
    if xs.size == 0:
        raise ParameterError("no grid points above x0 to check")
    ref = np.asarray(F_ref.local_prob(xs, T), dtype=np.float64)
    if np.any(ref <= 0):
        raise ParameterError("reference window mass F(x+D) vanishes on the checked range")
    n_cells = G.spec.n_cells
    power = None
    sup_by_n = np.empty(n_max)
    ratio_rows = []
    for n in range(1, n_max + 1):
        power = G if power is None else convolve(power, G, n_cells, method)
        r = power.windows(xs, T) / ((1 + epsilon) ** n * ref)
        sup_by_n[n - 1] = r.max()
        ratio_rows.append(r)
    cal = min(calibration, n_max)
    V = float(sup_by_n[:cal].max())
    violations = []
    for n in range(cal + 1, n_max + 1):
        bad = np.flatnonzero(ratio_rows[n - 1] > V * (1 + 1e-12))
        violations.extend((n, float(xs[i])) for i in bad)
    return KestenReport(float(epsilon), float(x0), V, n_max, violations,
                        float(sup_by_n.max()), sup_by_n)


# --------------------------------------------------------------------------
# overshoot


@dataclass(frozen=True)
class OvershootResult:
    value: float
    truncation: float


def overshoot_local(G: GridMeasure, x: float, y: float, window: DeltaWindow,
                    law: StoppingLaw, method: str = "auto") -> OvershootResult:
    """P(chi(x) in y + D) for the first passage of S over level x before tau.

    Sums P(tau >= n) P(S_{n-1} <= x, S_n in x+y+D) over n <= n_max; the
    truncation reports the stopping mass beyond n_max plus any part of the
    window that lies off the grid.
    """
    G = _on_half_line(G)
    spec = G.spec
    spec.node_index(x)
    spec.node_index(y)
    T = window.T
    lo = x + y
    hi = lo + T
    n_cells = spec.n_cells
    if lo >= spec.right_edge:
        return OvershootResult(0.0, law.remainder + G.overflow)
    clipped = math.isinf(T) is False and hi > spec.right_edge
    T_eff = (spec.right_edge - lo) if clipped else T
    surv = law.survival()
    value = 0.0
    prev = GridMeasure.point_mass(0.0, spec)  # S_0
    for n in range(1, law.n_max + 1):
        step = convolve(prev.restricted_upto(x), G, n_cells, method)
        value += surv[n] * step.window(lo, T_eff)
        prev = convolve(prev, G, n_cells, method)
    trunc = law.remainder + (G.overflow if clipped else 0.0)
    return OvershootResult(float(value), float(trunc))


# --------------------------------------------------------------------------
# densities


def _trapezoid_values(f: DensityGrid) -> np.ndarray:
    v = f.values.copy()
    v[f.threshold_index] *= 0.5
    return v


def density_convolve(f: DensityGrid, g: DensityGrid, out_cells: int | None = None,
                     method: str = "auto") -> DensityGrid:
    """Density of F*G on (x_f + x_g, inf) by the two-term formula.

    h(x) = int_0^{x_f} g(x-u) F_head(du) + int_0^{x_g} f(x-v) G_head(dv)
           + int_{x_f}^{x - x_g} f(u) g(x-u) du,
    the heads as grid measures and the last integral by the trapezoid rule.
    The output head is F*G on the nodes up to x_f + x_g.
    """
    _check_widths(f.spec, g.spec)
    if f.spec.origin_index != -1 or g.spec.origin_index != -1:
        raise ParameterError("density convolution works on half-line grids (origin index -1)")
    w = f.spec.cell_width
    n = f.spec.n_cells if out_cells is None else int(out_cells)
    spec = GridSpec(w, -1, n)
    thr = f.threshold + g.threshold
    k_thr = spec.node_index(thr)
    if k_thr >= n:
        raise ParameterError(f"grid too short: output threshold {thr} lies beyond the grid edge")

    def cut(arr):
        out = np.zeros(n)
        m = min(n, arr.size)
        out[:m] = arr[:m]
        return out

    head_terms = (convolve_arrays(f.head.mass, g.values, method)
                  + convolve_arrays(g.head.mass, f.values, method))
    inner = w * convolve_arrays(_trapezoid_values(f), _trapezoid_values(g), method)
    h = cut(head_terms + inner)
    h[:k_thr] = 0.0

    # measure-level product of the two trapezoid equivalents, for the head and overflow
    meas = convolve(f.to_measure(), g.to_measure(), n, method)
    head = meas.mass.copy()
    head[k_thr + 1:] = 0.0
    head[k_thr] = max(head[k_thr] - 0.5 * w * h[k_thr], 0.0)
    return DensityGrid(spec, h, thr, GridMeasure(spec, head), overflow=meas.overflow)


def density_convolve_square(f: DensityGrid, out_cells: int | None = None,
                            method: str = "auto") -> DensityGrid:
    return density_convolve(f, f, out_cells, method)


# --------------------------------------------------------------------------
# pointwise evaluation (full relative precision deep in the tail)


def convolve_windows_at(a: GridMeasure, b: GridMeasure, xs, T: float) -> np.ndarray:
    """(a*b)(x, x+T] at each x, summing positive terms only.

    Both measures must live on [0, inf) and every window must fit on b's
    grid. Unlike an FFT product, the relative accuracy does not degrade
    where the window mass is many orders below the bulk.
    """
    a = _on_half_line(a)
    b = _on_half_line(b)
    _check_widths(a.spec, b.spec)
    w = a.cell_width
    xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
    suf = b._suffix()
    nb = b.spec.n_cells
    kt = 0 if math.isinf(T) else int(round(T / w))
    direct = 0 < kt <= 256
    if direct:
        wsum = b.window_sums(kt)  # wsum[k] = b-mass of cells k..k+kt-1
    ka = np.arange(a.spec.n_cells)  # node of index i is i*w
    out = np.empty(xs.size)
    for j, x in enumerate(xs):
        kx = b.spec.node_index(x)  # on a half-line grid this is x / w
        if not math.isinf(T):
            if kx + kt >= nb:
                raise ParameterError(f"window ({x}, {x + T}] extends beyond the grid")
            lim = min(a.spec.n_cells, kx + kt + 1)
            i = ka[:lim]
            k0 = kx - i + 1  # first b-cell of the shifted window (may be negative)
            if direct:
                # windows partly left of node 0 keep only their in-grid cells
                vals = np.where(k0 >= 0, wsum[np.clip(k0, 0, nb)],
                                suf[0] - suf[np.clip(k0 + kt, 0, nb)])
            else:
                vals = suf[np.clip(k0, 0, nb)] - suf[np.clip(k0 + kt, 0, nb)]
            out[j] = float(np.dot(a.mass[:lim], vals))
        else:
            k0 = np.clip(kx - ka + 1, 0, nb)
            out[j] = float(np.dot(a.mass, suf[k0])) + a.overflow * b.total
    return out


def density_convolve_at(f: DensityGrid, g: DensityGrid, xs) -> np.ndarray:
    """The two-term density of F*G evaluated at grid points x > x_f + x_g."""
    _check_widths(f.spec, g.spec)
    if f.spec.origin_index != -1 or g.spec.origin_index != -1:
        raise ParameterError("density convolution works on half-line grids (origin index -1)")
    w = f.spec.cell_width
    ft, gt = _trapezoid_values(f), _trapezoid_values(g)
    out = []
    for x in np.atleast_1d(xs):
        k = f.spec.node_index(x)
        if k >= f.spec.n_cells or k >= g.spec.n_cells:
            raise ParameterError(f"x={x} lies beyond the grid")
        if x <= f.threshold + g.threshold:
            raise ParameterError("the two-term formula holds only above x_f + x_g")
        s = np.dot(f.head.mass[:k + 1], g.values[k::-1])
        s += np.dot(g.head.mass[:k + 1], f.values[k::-1])
        s += w * np.dot(ft[:k + 1], gt[k::-1])
        out.append(s)
    return np.asarray(out)
