"""Ratio series with an explicit finite-x convergence rule."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CONVERGING = "converging"
DIVERGING = "diverging"
OSCILLATING = "oscillating"
INCONCLUSIVE = "inconclusive"
VERDICTS = (CONVERGING, DIVERGING, OSCILLATING, INCONCLUSIVE)

DEFAULT_TOL = 0.05
DEFAULT_K = 3


def classify(ratios, target: float, tol: float = DEFAULT_TOL, k: int = DEFAULT_K) -> str:
    """Finite-x verdict for a ratio sequence that should tend to ``target``.

    * converging: the last ``k`` errors are within ``tol`` and their maximum
      does not exceed the maximum over the preceding ``k`` points (or is
      already below ``tol/2``), i.e. the error envelope is not growing;
    * oscillating: at least two turning points, with both adjacent steps
      larger than ``tol``, in the second half of the series;
    * diverging: the final error exceeds ``tol`` and the errors over the last
      ``k`` points grow monotonically;
    * inconclusive otherwise.
    """
    r = np.asarray(ratios, dtype=np.float64)
    if r.size < k:
        return INCONCLUSIVE
    err = np.abs(r - target)
    last = err[-k:]
    if np.all(np.isfinite(last)) and np.all(last <= tol):
        prev = err[-2 * k:-k]
        prev_max = float(np.max(prev)) if prev.size and np.all(np.isfinite(prev)) else math.inf
        if last.max() <= max(prev_max, tol / 2):
            return CONVERGING
    half = r[r.size // 2:]
    if half.size >= 3 and np.all(np.isfinite(half)):
        with np.errstate(over="ignore", invalid="ignore"):
            d = np.diff(half)
            turns = (d[:-1] * d[1:] < 0) & (np.abs(d[:-1]) > tol) & (np.abs(d[1:]) > tol)
        if np.count_nonzero(turns) >= 2:
            return OSCILLATING
    if not np.isfinite(err[-1]) or (err[-1] > tol and np.all(np.diff(np.nan_to_num(last, nan=np.inf)) >= 0)):
        return DIVERGING
    return INCONCLUSIVE


@dataclass(frozen=True, eq=False)
class RatioSeries:
    xs: np.ndarray
    ratios: np.ndarray
    target: float
    verdict: str
    final_abs_error: float
    tol: float = DEFAULT_TOL
    k: int = DEFAULT_K
    observed: np.ndarray | None = None
    predicted: np.ndarray | None = None

    @classmethod
    def build(cls, xs, ratios, target: float, tol: float = DEFAULT_TOL, k: int = DEFAULT_K,
              observed=None, predicted=None) -> "RatioSeries":
        xs = np.asarray(xs, dtype=np.float64)
        ratios = np.asarray(ratios, dtype=np.float64)
        if xs.shape != ratios.shape or xs.ndim != 1:
            raise ValueError("xs and ratios must be 1-d arrays of equal length")
        if xs.size > 1 and np.any(np.diff(xs) <= 0):
            raise ValueError("x values must be strictly increasing")
        verdict = classify(ratios, target, tol, k)
        fin = float(abs(ratios[-1] - target)) if ratios.size else math.nan
        obs = None if observed is None else np.asarray(observed, dtype=np.float64)
        pred = None if predicted is None else np.asarray(predicted, dtype=np.float64)
        return cls(xs, ratios, float(target), verdict, fin, tol, k, obs, pred)

    @classmethod
    def from_observed(cls, xs, observed, predicted, target: float = 1.0, **kw) -> "RatioSeries":
        observed = np.asarray(observed, dtype=np.float64)
        predicted = np.asarray(predicted, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = observed / predicted
        return cls.build(xs, ratios, target, observed=observed, predicted=predicted, **kw)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.xs.tolist(), self.ratios.tolist()))

    @property
    def final_ratio(self) -> float:
        return float(self.ratios[-1])

    def fitted_limit(self) -> float:
        """Mean of the last ``k`` ratios, a finite-x estimate of the limit."""
        return float(np.mean(self.ratios[-self.k:]))

    def __len__(self):
        return self.xs.size


def geometric_schedule(x0: float, x_max: float, ratio: float, cell_width: float) -> np.ndarray:
    """Grid-aligned points x0 * ratio**j up to x_max (duplicates after rounding removed)."""
    if not (x0 > 0 and x_max >= x0 and ratio > 1):
        raise ValueError("need 0 < x0 <= x_max and ratio > 1")
    n = int(math.floor(math.log(x_max / x0) / math.log(ratio) + 1e-9)) + 1
    raw = x0 * ratio ** np.arange(n)
    aligned = np.round(raw / cell_width) * cell_width
    aligned = aligned[(aligned >= x0 - 1e-12) & (aligned <= x_max + 1e-9)]
    return np.unique(aligned)
