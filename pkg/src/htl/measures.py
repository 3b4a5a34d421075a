"""Distribution catalog and uniform-grid measures.

Grid convention: cell ``k`` of a :class:`GridSpec` is the right-closed
interval ``((origin_index + k) * w, (origin_index + k + 1) * w]`` and its mass
is treated as sitting at the right endpoint ("node"). Sums of nodes are
nodes, so lattice measures convolve exactly and every window ``(x, x+T]``
with grid-aligned ``x`` and ``T`` is a whole number of cells.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

INF = math.inf
_ALIGN_RTOL = 1e-9
_DIRECT_WINDOW_CELLS = 256


class ParameterError(ValueError):
    """A distribution or grid parameter is outside its allowed range."""


def _as_array(x):
    return np.asarray(x, dtype=np.float64)


def _scalar_or_array(x, out):
    return float(np.asarray(out).reshape(-1)[0]) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class DeltaWindow:
    """The window (0, T]; ``T`` may be ``math.inf``."""

    T: float

    def __post_init__(self):
        T = float(self.T)
        if not T > 0:  # also rejects nan
            raise ParameterError(f"window length T must be > 0, got {self.T!r}")
        object.__setattr__(self, "T", T)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.T)

    def scaled(self, n: int) -> "DeltaWindow":
        return DeltaWindow(self.T * n)

    def check_grid(self, cell_width: float) -> None:
        if self.finite and not is_aligned(self.T, cell_width):
            raise ParameterError(
                f"window length T={self.T} is not a multiple of the cell width {cell_width}"
            )

    def __str__(self):
        return f"(0,{self.T:g}]"


def is_aligned(x: float, cell_width: float) -> bool:
    q = x / cell_width
    return abs(q - round(q)) <= _ALIGN_RTOL * max(1.0, abs(q))


@dataclass(frozen=True)
class GridSpec:
    cell_width: float
    origin_index: int
    n_cells: int

    def __post_init__(self):
        if not self.cell_width > 0:
            raise ParameterError(f"cell_width must be > 0, got {self.cell_width}")
        if int(self.n_cells) < 1:
            raise ParameterError(f"n_cells must be >= 1, got {self.n_cells}")
        object.__setattr__(self, "cell_width", float(self.cell_width))
        object.__setattr__(self, "origin_index", int(self.origin_index))
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @classmethod
    def covering(cls, x_min: float, x_max: float, cell_width: float) -> "GridSpec":
        """Smallest grid whose nodes run from ``x_min`` to at least ``x_max``.

        ``x_min`` itself is a node, so the cell ``(x_min - w, x_min]`` holds any
        atom at ``x_min`` (for measures on [0, inf) this puts 0 at index 0).
        """
        w = float(cell_width)
        first = math.floor(x_min / w + _ALIGN_RTOL)
        last = math.ceil(x_max / w - _ALIGN_RTOL)
        return cls(w, first - 1, max(1, last - first + 1))

    @property
    def left_edge(self) -> float:
        return self.origin_index * self.cell_width

    @property
    def right_edge(self) -> float:
        return (self.origin_index + self.n_cells) * self.cell_width

    @property
    def nodes(self) -> np.ndarray:
        return (self.origin_index + 1 + np.arange(self.n_cells)) * self.cell_width

    def node_index(self, x: float) -> int:
        """Array index of the cell whose right endpoint is ``x`` (may be out of range)."""
        q = x / self.cell_width
        k = round(q)
        if abs(q - k) > _ALIGN_RTOL * max(1.0, abs(q)):
            raise ParameterError(f"x={x} is not aligned to the grid (cell width {self.cell_width})")
        return int(k) - self.origin_index - 1

    def with_cells(self, n_cells: int) -> "GridSpec":
        return GridSpec(self.cell_width, self.origin_index, n_cells)


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Nonnegative measure on a grid plus an overflow bucket beyond the right edge."""

    spec: GridSpec
    mass: np.ndarray
    overflow: float = 0.0
    total: float = field(default=None)

    def __post_init__(self):
        mass = np.array(self.mass, dtype=np.float64)
        if mass.ndim != 1 or mass.shape[0] != self.spec.n_cells:
            raise ValueError(
                f"mass has shape {mass.shape}, grid has {self.spec.n_cells} cells"
            )
        if mass.size and mass.min() < 0:
            raise ValueError("grid masses must be nonnegative")
        overflow = float(self.overflow)
        if overflow < 0:
            raise ValueError("overflow must be nonnegative")
        mass.flags.writeable = False
        s = float(mass.sum()) + overflow
        total = s if self.total is None else float(self.total)
        if abs(total - s) > 1e-12 * max(1.0, abs(total)):
            raise ValueError(f"total {total} disagrees with sum(mass)+overflow {s}")
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "overflow", overflow)
        object.__setattr__(self, "total", total)

    @classmethod
    def point_mass(cls, c: float, spec: GridSpec, weight: float = 1.0) -> "GridMeasure":
        k = spec.node_index(c)
        if not 0 <= k < spec.n_cells:
            raise ParameterError(f"point {c} lies outside the grid")
        mass = np.zeros(spec.n_cells)
        mass[k] = weight
        return cls(spec, mass)

    @classmethod
    def delta_zero(cls, cell_width: float) -> "GridMeasure":
        return cls(GridSpec(cell_width, -1, 1), np.array([1.0]))

    @property
    def nodes(self) -> np.ndarray:
        return self.spec.nodes

    @property
    def cell_width(self) -> float:
        return self.spec.cell_width

    def _suffix(self) -> np.ndarray:
        # suffix[k] = sum(mass[k:]) + overflow, summed from the small end
        suf = np.empty(self.spec.n_cells + 1)
        suf[-1] = self.overflow
        suf[:-1] = np.cumsum(self.mass[::-1])[::-1] + self.overflow
        return suf

    def tail(self, x):
        """Mass strictly above ``x`` (any real ``x``; atoms sit at nodes)."""
        xs = _as_array(x)
        w = self.spec.cell_width
        # first index whose node exceeds x
        k = np.floor(xs / w + _ALIGN_RTOL) - self.spec.origin_index
        k = np.clip(k, 0, self.spec.n_cells).astype(np.int64)
        out = self._suffix()[k]
        return _scalar_or_array(x, out)

    def windows(self, xs, T: float) -> np.ndarray:
        """Masses of (x, x+T] for grid-aligned ``xs`` and ``T`` (``T`` may be inf)."""
        xs = np.atleast_1d(_as_array(xs))
        w = self.spec.cell_width
        q = xs / w
        if np.any(np.abs(q - np.round(q)) > _ALIGN_RTOL * np.maximum(1.0, np.abs(q))):
            raise ParameterError("window positions must be grid-aligned")
        suf = self._suffix()
        n = self.spec.n_cells
        k0 = np.clip(np.round(q).astype(np.int64) - self.spec.origin_index, 0, n)
        if math.isinf(T):
            return suf[k0]
        if not is_aligned(T, w):
            raise ParameterError(f"window length {T} is not a multiple of the cell width {w}")
        k1 = np.round(q + T / w).astype(np.int64) - self.spec.origin_index
        if np.any(k1 > n):
            raise ParameterError("window extends beyond the right edge of the grid")
        k1 = np.clip(k1, 0, n)
        kt = int(round(T / w))
        if kt <= _DIRECT_WINDOW_CELLS:
            # summing the cells avoids cancellation between two large suffix sums
            return self._direct_windows(k0, k1)
        return suf[k0] - suf[k1]

    def window_sums(self, kt: int) -> np.ndarray:
        """W[k] = sum of mass[k : k+kt] for k = 0..n (cells past the edge count as 0)."""
        n = self.spec.n_cells
        padded = np.zeros(n + kt + 1)
        padded[:n] = self.mass
        out = np.zeros(n + 1)
        for j in range(kt):
            out += padded[j:j + n + 1]
        return out

    def _direct_windows(self, k0, k1):
        out = np.zeros(k0.shape)
        span = int(np.max(k1 - k0)) if k0.size else 0
        for j in range(span):
            idx = k0 + j
            ok = idx < k1
            out[ok] += self.mass[idx[ok]]
        return out

    def window(self, x: float, T: float) -> float:
        return float(self.windows([x], T)[0])

    def restricted_upto(self, x: float) -> "GridMeasure":
        """The measure restricted to nodes <= x (mass above x is dropped)."""
        mass = self.mass.copy()
        k = int(math.floor(x / self.cell_width + _ALIGN_RTOL)) - self.spec.origin_index
        mass[max(k, 0):] = 0.0
        return GridMeasure(self.spec, mass, 0.0)

    def scaled(self, c: float) -> "GridMeasure":
        return GridMeasure(self.spec, self.mass * c, self.overflow * c)

    def with_spec(self, spec: GridSpec) -> "GridMeasure":
        """Re-index onto another grid of the same cell width.

        Mass falling left of the new grid raises; mass right of it joins the
        overflow bucket.
        """
        if not math.isclose(spec.cell_width, self.cell_width, rel_tol=1e-12):
            raise ValueError("cell widths differ")
        shift = self.spec.origin_index - spec.origin_index
        mass = np.zeros(spec.n_cells)
        src = np.arange(self.spec.n_cells) + shift
        left = src < 0
        if np.any(self.mass[left] > 0):
            raise ValueError("measure has mass left of the target grid")
        inside = (src >= 0) & (src < spec.n_cells)
        mass[src[inside]] = self.mass[inside]
        beyond = float(self.mass[src >= spec.n_cells].sum())
        return GridMeasure(spec, mass, self.overflow + beyond)

    def mean(self) -> float:
        """Mean of the in-grid part (overflow ignored)."""
        return float(np.dot(self.nodes, self.mass))


def add_measures(measures: Sequence[GridMeasure], weights: Sequence[float] | None = None) -> GridMeasure:
    """Weighted sum of measures sharing one grid."""
    spec = measures[0].spec
    if weights is None:
        weights = [1.0] * len(measures)
    mass = np.zeros(spec.n_cells)
    overflow = 0.0
    for m, c in zip(measures, weights):
        if m.spec != spec:
            raise ValueError("measures live on different grids")
        mass += c * m.mass
        overflow += c * m.overflow
    return GridMeasure(spec, mass, overflow)


# --------------------------------------------------------------------------
# catalog


class Distribution:
    """Base class for catalog distributions with exact tail formulas.

    Subclasses implement ``tail``; the defaults derive the rest.
    ``lattice_span`` is ``None`` for absolutely continuous laws.
    """

    kind: str = "abstract"
    lattice_span: float | None = None
    support_min: float = 0.0

    def params(self) -> dict:
        return {}

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"

    def tail(self, x):
        raise NotImplementedError

    def cdf(self, x):
        return 1.0 - _as_array(self.tail(x))

    def local_prob(self, x, T: float = INF):
        """F(x, x+T]; the tail when ``T`` is infinite."""
        if math.isinf(T):
            return self.tail(x)
        xs = _as_array(x)
        out = _as_array(self.tail(xs)) - _as_array(self.tail(xs + T))
        return _scalar_or_array(x, np.maximum(out, 0.0))

    def log_local_prob(self, x, T: float):
        """log F(x, x+T]; overridden where the window underflows long before its log does."""
        with np.errstate(divide="ignore"):
            return _scalar_or_array(x, np.log(_as_array(self.local_prob(x, T))))

    def density(self, x):
        raise NotImplementedError(f"{self.kind} has no density")

    @property
    def has_density(self) -> bool:
        return False

    def mean(self) -> float:
        return self.support_min + self._tail_integral(self.support_min)

    def positive_mean(self) -> float:
        """E max(xi, 0)."""
        return self._tail_integral(0.0)

    def _tail_integral(self, x: float) -> float:
        val, _ = integrate.quad(lambda y: float(self.tail(y)), x, np.inf, limit=200)
        return val

    def integrated_tail(self, x):
        """min(1, integral of the tail over (x, inf))."""
        if not math.isfinite(self.positive_mean()):
            raise ParameterError(f"{self!r}: integral of the tail diverges (infinite mean)")
        xs = np.atleast_1d(_as_array(x))
        out = np.array([self._tail_integral(float(v)) for v in xs])
        return _scalar_or_array(x, np.minimum(out, 1.0))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        raise NotImplementedError(f"sampling is not available for {self.kind}")


class Pareto(Distribution):
    """Tail x**-alpha on [1, inf)."""

    kind = "pareto"

    def __init__(self, alpha: float):
        if not alpha > 0:
            raise ParameterError(f"Pareto needs alpha > 0, got {alpha}")
        self.alpha = float(alpha)
        self.support_min = 1.0

    def params(self):
        return {"alpha": self.alpha}

    def tail(self, x):
        xs = _as_array(x)
        out = np.where(xs < 1.0, 1.0, np.maximum(xs, 1.0) ** -self.alpha)
        return _scalar_or_array(x, out)

    def local_prob(self, x, T=INF):
        if math.isinf(T):
            return self.tail(x)
        a = self.alpha
        xs = _as_array(x)
        hi = xs + T
        lo = np.maximum(xs, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            width = np.where(xs >= 1.0, T, hi - lo)
            out = lo ** -a * -np.expm1(-a * np.log1p(width / lo))
        out = np.where(hi <= 1.0, 0.0, out)
        return _scalar_or_array(x, out)

    @property
    def has_density(self):
        return True

    def density(self, x):
        xs = _as_array(x)
        out = np.where(xs < 1.0, 0.0, self.alpha * np.maximum(xs, 1.0) ** (-self.alpha - 1))
        return _scalar_or_array(x, out)

    def mean(self):
        return self.alpha / (self.alpha - 1) if self.alpha > 1 else INF

    def positive_mean(self):
        return self.mean()

    def _tail_integral(self, x):
        a = self.alpha
        if a <= 1:
            return INF
        if x >= 1:
            return x ** (1 - a) / (a - 1)
        return (1 - x) + 1 / (a - 1)

    def integrated_tail(self, x):
        if self.alpha <= 1:
            raise ParameterError(f"{self!r}: integral of the tail diverges (alpha <= 1)")
        xs = _as_array(x)
        a = self.alpha
        out = np.where(xs >= 1, np.maximum(xs, 1.0) ** (1 - a) / (a - 1), (1 - xs) + 1 / (a - 1))
        return _scalar_or_array(x, np.minimum(out, 1.0))

    def sample(self, rng, size):
        u = 1.0 - rng.random(size)
        if self.alpha == 2.0:
            return 1.0 / np.sqrt(u)
        return u ** (-1.0 / self.alpha)


class Weibull(Distribution):
    """Tail exp(-x**beta) on [0, inf), 0 < beta < 1."""

    kind = "weibull"

    def __init__(self, beta: float):
        if not 0 < beta < 1:
            raise ParameterError(f"Weibull needs 0 < beta < 1, got {beta}")
        self.beta = float(beta)

    def params(self):
        return {"beta": self.beta}

    def tail(self, x):
        xs = np.maximum(_as_array(x), 0.0)
        return _scalar_or_array(x, np.exp(-(xs ** self.beta)))

    def local_prob(self, x, T=INF):
        if math.isinf(T):
            return self.tail(x)
        b = self.beta
        xs = np.maximum(_as_array(x), 0.0)
        hi = np.maximum(_as_array(x) + T, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            # (x+T)^b - x^b without cancellation
            inc = np.where(xs > 0, xs ** b * np.expm1(b * np.log1p(T / np.where(xs > 0, xs, 1.0))), hi ** b)
        out = np.exp(-(xs ** b)) * -np.expm1(-inc)
        return _scalar_or_array(x, out)

    def log_local_prob(self, x, T):
        if math.isinf(T):
            return _scalar_or_array(x, -(np.maximum(_as_array(x), 0.0) ** self.beta))
        b = self.beta
        xs = np.maximum(_as_array(x), 0.0)
        hi = np.maximum(_as_array(x) + T, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            inc = np.where(xs > 0, xs ** b * np.expm1(b * np.log1p(T / np.where(xs > 0, xs, 1.0))), hi ** b)
            out = -(xs ** b) + np.log(-np.expm1(-inc))
        return _scalar_or_array(x, out)

    @property
    def has_density(self):
        return True

    def density(self, x):
        xs = _as_array(x)
        b = self.beta
        with np.errstate(divide="ignore"):
            out = np.where(xs > 0, b * np.abs(xs) ** (b - 1) * np.exp(-(np.abs(xs) ** b)), 0.0)
        return _scalar_or_array(x, out)

    def mean(self):
        return math.gamma(1 + 1 / self.beta)

    def positive_mean(self):
        return self.mean()

    def _tail_integral(self, x):
        b = self.beta
        x = max(x, 0.0)
        return special.gamma(1 / b) * special.gammaincc(1 / b, x ** b) / b

    def integrated_tail(self, x):
        xs = np.maximum(_as_array(x), 0.0)
        b = self.beta
        out = special.gamma(1 / b) * special.gammaincc(1 / b, xs ** b) / b
        out = out + np.maximum(-_as_array(x), 0.0)
        return _scalar_or_array(x, np.minimum(out, 1.0))

    def sample(self, rng, size):
        return rng.standard_exponential(size) ** (1.0 / self.beta)


class WeibullSurrogate(Distribution):
    """Tail min(1, x**(beta-1) * exp(-x**beta)), tail-equivalent to a Weibull window."""

    kind = "weibull_surrogate"

    def __init__(self, beta: float):
        if not 0 < beta < 1:
            raise ParameterError(f"needs 0 < beta < 1, got {beta}")
        self.beta = float(beta)
        from scipy.optimize import brentq

        # x^(1-beta) = exp(-x^beta): below this point the formula exceeds 1
        self.support_min = brentq(lambda t: (1 - beta) * math.log(t) + t ** beta, 1e-12, 1.0)

    def params(self):
        return {"beta": self.beta}

    def _log_tail(self, xs):
        b = self.beta
        return (b - 1) * np.log(xs) - xs ** b

    def tail(self, x):
        xs = _as_array(x)
        safe = np.maximum(xs, self.support_min)
        out = np.where(xs <= self.support_min, 1.0, np.exp(self._log_tail(safe)))
        return _scalar_or_array(x, np.minimum(out, 1.0))

    def local_prob(self, x, T=INF):
        if math.isinf(T):
            return self.tail(x)
        xs = _as_array(x)
        lo = np.maximum(xs, self.support_min)
        b = self.beta
        # the width is T itself inside the support; x + T - x loses T once x >> T
        width = np.where(xs >= self.support_min, T, np.maximum(xs + T - self.support_min, 0.0))
        d = (b - 1) * np.log1p(width / lo) - lo ** b * np.expm1(b * np.log1p(width / lo))
        out = np.exp(self._log_tail(lo)) * -np.expm1(d)
        return _scalar_or_array(x, np.maximum(out, 0.0))

    def log_local_prob(self, x, T):
        xs = _as_array(x)
        lo = np.maximum(xs, self.support_min)
        if math.isinf(T):
            return _scalar_or_array(x, np.minimum(self._log_tail(lo), 0.0))
        b = self.beta
        # the width is T itself inside the support; x + T - x loses T once x >> T
        width = np.where(xs >= self.support_min, T, np.maximum(xs + T - self.support_min, 0.0))
        d = (b - 1) * np.log1p(width / lo) - lo ** b * np.expm1(b * np.log1p(width / lo))
        with np.errstate(divide="ignore"):
            out = self._log_tail(lo) + np.log(-np.expm1(d))
        return _scalar_or_array(x, out)

    @property
    def has_density(self):
        return True

    def density(self, x):
        xs = _as_array(x)
        b = self.beta
        safe = np.maximum(xs, self.support_min)
        out = np.exp(self._log_tail(safe)) * (b * safe ** (b - 1) + (1 - b) / safe)
        return _scalar_or_array(x, np.where(xs < self.support_min, 0.0, out))

    def mean(self):
        return self.support_min + self._tail_integral(self.support_min)

    def _tail_integral(self, x):
        x = max(x, 0.0)
        lo = max(x, self.support_min)
        val, _ = integrate.quad(lambda y: math.exp(self._log_tail(y)), lo, np.inf, limit=200)
        return val + (lo - x)


class Lognormal(Distribution):
    """Density exp(-(ln x - ln a)^2 / 2 sigma^2) / (x sqrt(2 pi sigma^2))."""

    kind = "lognormal"

    def __init__(self, a: float, sigma: float):
        if not a > 0:
            raise ParameterError(f"lognormal needs a > 0, got {a}")
        if not sigma > 0:
            raise ParameterError(f"lognormal needs sigma > 0, got {sigma}")
        self.a = float(a)
        self.sigma = float(sigma)

    def params(self):
        return {"a": self.a, "sigma": self.sigma}

    def _z(self, xs):
        with np.errstate(divide="ignore"):
            return (np.log(np.maximum(xs, 0.0)) - math.log(self.a)) / self.sigma

    def tail(self, x):
        xs = _as_array(x)
        return _scalar_or_array(x, special.ndtr(-self._z(xs)))

    def local_prob(self, x, T=INF):
        if math.isinf(T):
            return self.tail(x)
        xs = _as_array(x)
        l1 = special.log_ndtr(-self._z(xs))
        l2 = special.log_ndtr(-self._z(xs + T))
        with np.errstate(invalid="ignore"):
            out = np.exp(l1) * -np.expm1(l2 - l1)
        out = np.where(np.isfinite(out), out, 0.0)
        return _scalar_or_array(x, np.maximum(out, 0.0))

    @property
    def has_density(self):
        return True

    def density(self, x):
        xs = _as_array(x)
        s = self.sigma
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.exp(-0.5 * self._z(xs) ** 2) / (xs * math.sqrt(2 * math.pi) * s)
        return _scalar_or_array(x, np.where(xs > 0, out, 0.0))

    def mean(self):
        return self.a * math.exp(self.sigma ** 2 / 2)

    def positive_mean(self):
        return self.mean()

    def sample(self, rng, size):
        return self.a * np.exp(self.sigma * rng.standard_normal(size))


class Exponential(Distribution):
    kind = "exponential"

    def __init__(self, lam: float):
        if not lam > 0:
            raise ParameterError(f"exponential needs lambda > 0, got {lam}")
        self.lam = float(lam)

    def params(self):
        return {"lam": self.lam}

    def tail(self, x):
        xs = _as_array(x)
        return _scalar_or_array(x, np.exp(-self.lam * np.maximum(xs, 0.0)))

    def local_prob(self, x, T=INF):
        if math.isinf(T):
            return self.tail(x)
        xs = _as_array(x)
        lo = np.maximum(xs, 0.0)
        hi = np.maximum(xs + T, 0.0)
        width = np.where(xs >= 0.0, T, hi - lo)
        out = np.exp(-self.lam * lo) * -np.expm1(-self.lam * width)
        return _scalar_or_array(x, out)

    @property
    def has_density(self):
        return True

    def density(self, x):
        xs = _as_array(x)
        out = np.where(xs >= 0, self.lam * np.exp(-self.lam * np.maximum(xs, 0.0)), 0.0)
        return _scalar_or_array(x, out)

    def mean(self):
        return 1.0 / self.lam

    def positive_mean(self):
        return self.mean()

    def _tail_integral(self, x):
        return math.exp(-self.lam * max(x, 0.0)) / self.lam + max(-x, 0.0)

    def integrated_tail(self, x):
        xs = _as_array(x)
        out = np.exp(-self.lam * np.maximum(xs, 0.0)) / self.lam + np.maximum(-xs, 0.0)
        return _scalar_or_array(x, np.minimum(out, 1.0))

    def sample(self, rng, size):
        return rng.standard_exponential(size) / self.lam


class PointMass(Distribution):
    kind = "point_mass"

    def __init__(self, c: float):
        if not math.isfinite(c):
            raise ParameterError(f"point mass location must be finite, got {c}")
        self.c = float(c)
        self.support_min = self.c

    def params(self):
        return {"c": self.c}

    @property
    def lattice_span(self):
        return 1.0

    def tail(self, x):
        xs = _as_array(x)
        return _scalar_or_array(x, np.where(xs < self.c, 1.0, 0.0))

    def mean(self):
        return self.c

    def positive_mean(self):
        return max(self.c, 0.0)

    def _tail_integral(self, x):
        return max(self.c - x, 0.0)

    def sample(self, rng, size):
        return np.full(size, self.c)


class _Lattice(Distribution):
    """Integer-valued law given by a vectorized pmf and an exact tail."""

    lattice_span = 1.0
    _direct_max = 64  # windows up to this many atoms are summed atom by atom

    def pmf(self, n):
        raise NotImplementedError

    def local_prob(self, x, T=INF):
        if math.isinf(T) or T > self._direct_max:
            return super().local_prob(x, T)
        xs = np.atleast_1d(_as_array(x))
        first = np.floor(xs) + 1
        last = np.floor(xs + T)
        k = np.arange(int(math.ceil(T)) + 1)
        n = first[:, None] + k[None, :]
        ok = n <= last[:, None]
        vals = np.where(ok, self.pmf(np.where(ok, n, 1.0)), 0.0)
        out = vals.sum(axis=1)
        return _scalar_or_array(x, out)

    def _sampling_table(self, tol=1e-15):
        n_max = 1024
        while float(self.tail(n_max)) > tol and n_max < 2 ** 40:
            n_max *= 4
        n = np.arange(1, n_max + 1, dtype=np.float64)
        cdf = np.cumsum(self.pmf(n))
        return n, cdf

    def sample(self, rng, size):
        if not hasattr(self, "_table"):
            self._table = self._sampling_table()
        n, cdf = self._table
        idx = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
        return n[np.minimum(idx, n.size - 1)]


class Example1(_Lattice):
    """P(xi = 2k) = g/k^2 (k >= 1), P(xi = 2k+1) = g/2^k (k >= 0)."""

    kind = "example1"
    support_min = 1.0

    def __init__(self):
        self.gamma = 1.0 / (math.pi ** 2 / 6 + 2.0)

    def pmf(self, n):
        n = _as_array(n)
        k = np.floor(n / 2)
        even = (n % 2 == 0) & (n >= 2)
        odd = (n % 2 == 1) & (n >= 1)
        with np.errstate(divide="ignore", over="ignore"):
            out = np.where(even, self.gamma / np.maximum(k, 1) ** 2, 0.0)
            out = np.where(odd, self.gamma * np.exp2(-k), out)
        return out

    def tail(self, x):
        xs = _as_array(x)
        k_even = np.maximum(np.floor(xs / 2) + 1, 1)
        k_odd = np.maximum(np.floor((xs - 1) / 2) + 1, 0)
        out = self.gamma * (special.polygamma(1, k_even) + np.exp2(1 - k_odd))
        return _scalar_or_array(x, np.minimum(out, 1.0))

    def mean(self):
        return INF

    def positive_mean(self):
        return INF


class Example3(_Lattice):
    """Lattice law with F({n}) = f(n) for n >= n0 and the rest of the mass at 1.

    ``f`` is piecewise linear through the points x_j = 2**(j/4) with
    f(x_j) = 1/x_j^2 for even j and 2/x_j^2 for odd j, so f(n) n^2 keeps
    swinging between 1 and 2 and never settles to a monotone profile.
    """

    kind = "example3"
    support_min = 1.0
    _n_direct = 1 << 20

    def __init__(self):
        n = np.arange(1, self._n_direct + 1, dtype=np.float64)
        f = self.f(n)
        # suffix sums of f over n >= N, the part beyond _n_direct in closed form
        beyond = self._sum_from(self._n_direct + 1)
        self._suffix = np.empty(self._n_direct + 2)
        self._suffix[-1] = 0.0
        self._suffix[-2] = beyond
        self._suffix[1:-1] = np.cumsum(f[::-1])[::-1] + beyond
        self._suffix[0] = self._suffix[1]
        n0 = 1
        while self._suffix[n0] > 1.0:
            n0 += 1
        self.n0 = n0
        self.atom_at_one = 1.0 - self._suffix[n0]

    @staticmethod
    def f(x):
        x = _as_array(x)
        j = np.floor(4 * np.log2(np.maximum(x, 1.0)))
        # guard against log2 rounding at the knots
        j = np.where(np.exp2((j + 1) / 4) <= x, j + 1, j)
        j = np.where(np.exp2(j / 4) > x, j - 1, j)
        x0, x1 = np.exp2(j / 4), np.exp2((j + 1) / 4)
        f0 = np.where(j % 2 == 0, 1.0, 2.0) / x0 ** 2
        f1 = np.where(j % 2 == 0, 2.0, 1.0) / x1 ** 2
        return f0 + (f1 - f0) * (x - x0) / (x1 - x0)

    @classmethod
    def _sum_from(cls, N: int) -> float:
        """Sum of f(n) over integers n >= N, by arithmetic series per segment."""
        total = 0.0
        j = int(math.floor(4 * math.log2(N))) - 1
        while True:
            x0, x1 = 2.0 ** (j / 4), 2.0 ** ((j + 1) / 4)
            if x0 > 1e300:
                break
            lo = max(N, math.ceil(x0))
            hi = math.ceil(x1) - 1
            if hi >= lo:
                cnt = hi - lo + 1
                s_n = (lo + hi) * cnt / 2.0
                f0 = (1.0 if j % 2 == 0 else 2.0) / x0 ** 2
                f1 = (2.0 if j % 2 == 0 else 1.0) / x1 ** 2
                slope = (f1 - f0) / (x1 - x0)
                part = cnt * (f0 - slope * x0) + slope * s_n
                total += part
                if part < 1e-18 * total:
                    break
            j += 1
        return total

    def pmf(self, n):
        n = _as_array(n)
        out = np.where(n >= self.n0, self.f(n), 0.0)
        return np.where(n == 1, self.atom_at_one + (self.f(1.0) if self.n0 <= 1 else 0.0), out)

    def tail(self, x):
        xs = np.atleast_1d(_as_array(x))
        N = np.maximum(np.floor(xs) + 1, 1)  # first integer above x
        out = np.empty(xs.shape)
        small = N <= self._n_direct
        Ns = np.maximum(N[small].astype(np.int64), self.n0)
        out[small] = self._suffix[Ns]
        out[small & (N <= 1)] = 1.0
        for i in np.flatnonzero(~small):
            out[i] = self._sum_from(int(N[i]))
        return _scalar_or_array(x, out)

    def mean(self):
        return INF

    def positive_mean(self):
        return INF


class Example2(Distribution):
    """Uniform(-1/8, 1/8) plus an independent lattice with P(k) = g/k^2."""

    kind = "example2"
    support_min = 7.0 / 8.0
    _direct_max = 64

    def __init__(self):
        self.gamma = 6.0 / math.pi ** 2

    def _bump_tail(self, xs):
        # mass above x contributed by the bump at k = round(x), plus all bumps above it
        k = np.maximum(np.floor(xs + 0.5), 1.0)
        inside = np.clip((k + 0.125 - xs) * 4.0, 0.0, 1.0)
        return self.gamma * (special.polygamma(1, k + 1) + inside / k ** 2)

    def tail(self, x):
        xs = _as_array(x)
        out = np.where(xs <= self.support_min, 1.0, self._bump_tail(np.maximum(xs, 1.0 - 0.125)))
        return _scalar_or_array(x, np.minimum(out, 1.0))

    def _interval_mass(self, lo, T):
        # exact mass of (lo, lo+T] by summing the bumps it meets
        hi = lo + T
        k0 = np.maximum(np.floor(lo + 0.125), 1.0)
        m = np.arange(int(math.ceil(T)) + 2)
        k = k0[:, None] + m[None, :]
        left = np.maximum(lo[:, None], k - 0.125)
        right = np.minimum(hi[:, None], k + 0.125)
        overlap = np.maximum(right - left, 0.0)
        return (self.gamma / k ** 2 * 4.0 * overlap).sum(axis=1)

    def local_prob(self, x, T=INF):
        if math.isinf(T) or T > self._direct_max:
            return super().local_prob(x, T)
        xs = np.atleast_1d(_as_array(x))
        return _scalar_or_array(x, self._interval_mass(xs, T))

    @property
    def has_density(self):
        return True

    def density(self, x):
        xs = _as_array(x)
        k = np.maximum(np.round(xs), 1.0)
        out = np.where(np.abs(xs - k) < 0.125, 4.0 * self.gamma / k ** 2, 0.0)
        return _scalar_or_array(x, out)

    def mean(self):
        return INF

    def positive_mean(self):
        return INF

    def sample(self, rng, size):
        if not hasattr(self, "_table"):
            n_max = 1 << 24
            n = np.arange(1, n_max + 1, dtype=np.float64)
            self._table = (n, np.cumsum(self.gamma / n ** 2))
        n, cdf = self._table
        idx = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
        return n[np.minimum(idx, n.size - 1)] + rng.uniform(-0.125, 0.125, size)


class Empirical(Distribution):
    """A grid measure viewed as a distribution; no extrapolation past the grid."""

    kind = "empirical"

    def __init__(self, measure: GridMeasure):
        if abs(measure.total - 1.0) > 1e-9:
            raise ParameterError(f"empirical measure must have total mass 1, got {measure.total}")
        self.measure = measure
        nz = np.flatnonzero(measure.mass)
        self.support_min = float(measure.nodes[nz[0]]) if nz.size else measure.spec.right_edge

    def params(self):
        return {"cells": self.measure.spec.n_cells, "cell_width": self.measure.cell_width}

    @property
    def lattice_span(self):
        return self.measure.cell_width

    def tail(self, x):
        return self.measure.tail(x)

    def mean(self):
        if self.measure.overflow > 0:
            return INF
        return self.measure.mean()

    def positive_mean(self):
        if self.measure.overflow > 0:
            return INF
        return float(np.dot(np.maximum(self.measure.nodes, 0.0), self.measure.mass))

    def _tail_integral(self, x):
        nodes, m = self.measure.nodes, self.measure.mass
        return float(np.dot(np.maximum(nodes - x, 0.0), m))

    def sample(self, rng, size):
        p = self.measure.mass / self.measure.mass.sum()
        return rng.choice(self.measure.nodes, size=size, p=p)


_CATALOG: dict[str, tuple[Callable, tuple[str, ...]]] = {
    "pareto": (Pareto, ("alpha",)),
    "weibull": (Weibull, ("beta",)),
    "weibull_surrogate": (WeibullSurrogate, ("beta",)),
    "lognormal": (Lognormal, ("a", "sigma")),
    "exponential": (Exponential, ("lam",)),
    "point_mass": (PointMass, ("c",)),
    "example1": (Example1, ()),
    "example2": (Example2, ()),
    "example3": (Example3, ()),
}

CATALOG_KINDS = tuple(_CATALOG) + ("empirical",)


def make_distribution(kind: str, params=()) -> Distribution:
    """Build a catalog distribution from a kind name and a parameter list or dict.

    >>> make_distribution("pareto", [1.0]).tail(2.0)
    0.5
    """
    key = kind.lower().replace("-", "_")
    if key == "empirical":
        measure = params["measure"] if isinstance(params, dict) else params[0]
        return Empirical(measure)
    if key not in _CATALOG:
        raise ParameterError(f"unknown distribution kind {kind!r}; known: {', '.join(CATALOG_KINDS)}")
    cls, names = _CATALOG[key]
    if isinstance(params, dict):
        unknown = set(params) - set(names)
        if unknown:
            raise ParameterError(f"{kind}: unknown parameter(s) {sorted(unknown)}; expected {list(names)}")
        missing = [n for n in names if n not in params]
        if missing:
            raise ParameterError(f"{kind}: missing parameter(s) {missing}")
        args = [float(params[n]) for n in names]
    else:
        args = [float(p) for p in params]
        if len(args) != len(names):
            raise ParameterError(f"{kind} takes {len(names)} parameter(s) {list(names)}, got {len(args)}")
    return cls(*args)


def local_prob(dist: Distribution, x, window: DeltaWindow):
    """F(x + window) = F(x, x+T]."""
    return dist.local_prob(x, window.T)


def integrated_tail(dist: Distribution, x):
    return dist.integrated_tail(x)


def discretize(dist: Distribution, spec: GridSpec) -> GridMeasure:
    """Exact cell masses of ``dist`` on ``spec``; the tail beyond goes to overflow."""
    below = 1.0 - float(dist.tail(spec.left_edge))
    if below > 1e-13:
        raise ParameterError(
            f"{dist!r} puts mass {below:.3g} at or below the grid's left edge {spec.left_edge}"
        )
    lefts = spec.nodes - spec.cell_width
    mass = np.asarray(dist.local_prob(lefts, spec.cell_width), dtype=np.float64)
    overflow = float(dist.tail(spec.right_edge))
    return GridMeasure(spec, np.maximum(mass, 0.0), overflow)


# --------------------------------------------------------------------------
# densities


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """A law with a density on [threshold, inf) and an arbitrary part below.

    ``values[k]`` is the density at node k (zero below ``threshold``);
    ``head`` carries the mass on nodes <= threshold; ``overflow`` is the mass
    beyond the right edge. As a measure the density part is integrated with
    trapezoid weights: w/2 at the threshold node and w at nodes above it.
    """

    spec: GridSpec
    values: np.ndarray
    threshold: float
    head: GridMeasure
    overflow: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (self.spec.n_cells,):
            raise ValueError("values must have one entry per grid cell")
        if values.size and values.min() < 0:
            raise ValueError("density values must be nonnegative")
        if self.head.spec != self.spec:
            raise ValueError("head must live on the same grid")
        k = self.spec.node_index(self.threshold)
        if not 0 <= k < self.spec.n_cells:
            raise ValueError("threshold must be a node inside the grid")
        if np.any(values[:k] != 0):
            raise ValueError("density values below the threshold must be zero")
        if np.any(self.head.mass[k + 1:] != 0):
            raise ValueError("head has mass above the threshold")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "threshold", float(self.threshold))

    @property
    def threshold_index(self) -> int:
        return self.spec.node_index(self.threshold)

    @property
    def nodes(self):
        return self.spec.nodes

    def weights(self) -> np.ndarray:
        """Trapezoid weights of the density part at the nodes."""
        w = self.values * self.spec.cell_width
        k = self.threshold_index
        w = w.copy()
        w[k] *= 0.5
        return w

    def to_measure(self) -> GridMeasure:
        return GridMeasure(self.spec, self.head.mass + self.weights(), self.overflow + self.head.overflow)

    def window_mass(self, x: float, T: float) -> float:
        return self.to_measure().window(x, T)

    def at(self, x):
        idx = np.asarray([self.spec.node_index(v) for v in np.atleast_1d(x)])
        out = self.values[idx]
        return float(out[0]) if np.ndim(x) == 0 else out


def discretize_density(dist: Distribution, spec: GridSpec, threshold: float = 0.0) -> DensityGrid:
    """Sample the density of ``dist`` at the nodes from ``threshold`` on.

    The head is the exact measure of the cells at or below the threshold.
    """
    if not dist.has_density:
        raise ParameterError(f"{dist!r} has no density")
    full = discretize(dist, spec)
    k = spec.node_index(threshold)
    values = np.asarray(dist.density(spec.nodes), dtype=np.float64).copy()
    values[:k] = 0.0
    head_mass = full.mass.copy()
    head_mass[k + 1:] = 0.0
    head = GridMeasure(spec, head_mass)
    return DensityGrid(spec, values, threshold, head, overflow=full.overflow)
