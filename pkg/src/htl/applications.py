"""Compound Poisson laws, infinitely divisible laws and subcritical branching means."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from htl.convolve import KestenReport, StoppingLaw, _on_half_line, convolve, stopped_sum
from htl.measures import (
    DeltaWindow,
    Distribution,
    GridMeasure,
    GridSpec,
    ParameterError,
    discretize,
)
from htl.series import DEFAULT_K, DEFAULT_TOL, INCONCLUSIVE, RatioSeries


def _spec_for(xs, window: DeltaWindow, cell_width: float) -> GridSpec:
    hi = float(np.max(xs)) + (window.T if window.finite else 0.0)
    return GridSpec.covering(0.0, hi, cell_width)


def compound_poisson_measure(F, mu: float, spec: GridSpec,
                             kesten: KestenReport | None = None) -> tuple[GridMeasure, StoppingLaw]:
    """e^{-mu} sum mu^n/n! F^{*n} on ``spec``; returns the measure and the law used.

    n_max is the smallest n with Poisson tail below 1e-10, widened with a
    Kesten report so the dropped terms stay below 1e-6 of the window value.
    """
    if not mu > 0:
        raise ParameterError(f"mu must be > 0, got {mu}")
    Fm = F if isinstance(F, GridMeasure) else discretize(F, spec)
    law = StoppingLaw.poisson(mu, tol=1e-10)
    if kesten is not None:
        law = law.kesten_n_max(kesten.fitted_V, kesten.epsilon)
    G, _ = stopped_sum(Fm, law)
    return G, law


def compound_poisson(F: Distribution, mu: float, spec: GridSpec | None, window: DeltaWindow, xs,
                     kesten: KestenReport | None = None, cell_width: float = 0.05,
                     tol: float = DEFAULT_TOL, k: int = DEFAULT_K) -> RatioSeries:
    """G(x+D) / (mu F(x+D)) for the compound Poisson law G, which should tend to 1."""
    xs = np.asarray(xs, dtype=np.float64)
    spec = spec or _spec_for(xs, window, cell_width)
    window.check_grid(spec.cell_width)
    G, _ = compound_poisson_measure(F, mu, spec, kesten)
    obs = G.windows(xs, window.T)
    ref = mu * np.asarray(F.local_prob(xs, window.T), dtype=np.float64)
    return RatioSeries.from_observed(xs, obs, ref, 1.0, tol=tol, k=k)


# --------------------------------------------------------------------------
# infinitely divisible laws


@dataclass(frozen=True, eq=False)
class InfDivSpec:
    """Levy tail law G on (1, inf) with mass mu, and the light factor F1.

    ``epsilon`` is the claimed exponential rate of F1's tail; it is verified
    on construction by fitting C on the first half of the grid and checking
    tail(x) <= C e^{-eps x} on the rest (overflow included).
    """

    levy_tail_law: Distribution
    mu: float
    light_factor: GridMeasure
    epsilon: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ParameterError(f"mu must be > 0, got {self.mu}")
        if not self.epsilon > 0:
            raise ParameterError("the exponential rate epsilon must be > 0")
        ok, C = light_tail_certificate(self.light_factor, self.epsilon)
        if not ok:
            raise ParameterError(
                f"light factor fails the tail bound C e^(-{self.epsilon} x) (fitted C = {C:.3g})")


def light_tail_certificate(F1: GridMeasure, epsilon: float) -> tuple[bool, float]:
    F1 = _on_half_line(F1)
    nodes = F1.nodes
    tails = F1.tail(nodes)
    half = max(nodes.size // 2, 1)
    # compare log(tail) + eps x; zero tails satisfy any bound
    with np.errstate(divide="ignore"):
        lt = np.log(tails) + epsilon * nodes
    logC = float(np.max(lt[:half]))
    ok = bool(np.all(lt[half:] <= logC + 1e-9))
    if F1.overflow > 0:
        ok = ok and math.log(F1.overflow) + epsilon * F1.spec.right_edge <= logC + 1e-9
    C = math.exp(logC) if logC < 700 else math.inf
    return ok, C


@dataclass(frozen=True, eq=False)
class InfDivResult:
    series: RatioSeries
    secondary: RatioSeries | None
    precondition: str


def infdiv_local(spec: InfDivSpec, window: DeltaWindow, xs, grid: GridSpec | None = None,
                 cell_width: float = 0.05, tol: float = DEFAULT_TOL,
                 k: int = DEFAULT_K) -> InfDivResult:
    """F(x+D)/nu(x+D) for F = F1 * F2 with F2 the compound Poisson law of (mu, G).

    When G fails the S_D check the ratio series is still computed but its
    verdict is set to inconclusive. The secondary series is F(x+D)/F2(x+D).
    """
    from htl.diagnostics import check_delta_subexp

    xs = np.asarray(xs, dtype=np.float64)
    grid = grid or _spec_for(xs, window, cell_width)
    G = spec.levy_tail_law
    pre = check_delta_subexp(G, window, xs, cell_width=grid.cell_width, tol=tol, k=k)
    F2, _ = compound_poisson_measure(G, spec.mu, grid)
    F1 = _on_half_line(spec.light_factor)
    F1 = F1.with_spec(grid)
    F = convolve(F1, F2, grid.n_cells)
    obs = F.windows(xs, window.T)
    nu = spec.mu * np.asarray(G.local_prob(xs, window.T), dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = obs / nu
    if pre.verdict != "pass":
        series = RatioSeries(xs, ratio, 1.0, INCONCLUSIVE, float(abs(ratio[-1] - 1)), tol, k, obs, nu)
        return InfDivResult(series, None, pre.verdict)
    series = RatioSeries.from_observed(xs, obs, nu, 1.0, tol=tol, k=k)
    sec = RatioSeries.from_observed(xs, obs, F2.windows(xs, window.T), 1.0, tol=tol, k=k)
    return InfDivResult(series, sec, pre.verdict)


# --------------------------------------------------------------------------
# branching


@dataclass(frozen=True)
class BranchingParams:
    A: float
    lifetime: Distribution

    def __post_init__(self):
        if not 0 < self.A < 1:
            raise ParameterError(f"subcritical branching needs 0 < A < 1, got {self.A}")


@dataclass(frozen=True, eq=False)
class BranchingResult:
    ts: np.ndarray
    mean_curve: np.ndarray
    series: RatioSeries
    remainder: float


def branching_mean(P: BranchingParams, ts, window: DeltaWindow, cell_width: float = 0.05,
                   n_max: int | None = None, tol: float = DEFAULT_TOL,
                   k: int = DEFAULT_K) -> BranchingResult:
    """A(t) = 1 - sum_{n>=1} (1-A) A^{n-1} F^{*n}[0, t] and the ratio (A(t)-A(t+T))(1-A)/F(t+D).

    The increment A(t) - A(t+T) is summed window by window rather than taken
    as a difference. ``remainder`` = A^{n_max} bounds the dropped terms.
    """
    A = P.A
    F = P.lifetime
    if F.support_min < 0:
        raise ParameterError("lifetimes must be nonnegative")
    ts = np.asarray(ts, dtype=np.float64)
    spec = _spec_for(ts, window, cell_width)
    window.check_grid(spec.cell_width)
    if n_max is None:
        n_max = max(1, math.ceil(math.log(1e-12) / math.log(A)))
    probs = np.zeros(n_max + 1)
    probs[1:] = (1 - A) * A ** np.arange(n_max)
    law = StoppingLaw(probs, "custom", None, A ** n_max)
    S, remainder = stopped_sum(discretize(F, spec), law)
    # cumulative mass up to each node: exactly zero before the lifetime support
    cum = np.cumsum(S.mass)
    idx = np.array([spec.node_index(t) for t in ts])
    below = np.where(idx >= 0, cum[np.clip(idx, 0, spec.n_cells - 1)], 0.0)
    curve = 1.0 - below
    obs = S.windows(ts, window.T) * (1 - A)
    ref = np.asarray(F.local_prob(ts, window.T), dtype=np.float64)
    series = RatioSeries.from_observed(ts, obs, ref, 1.0, tol=tol, k=k)
    return BranchingResult(ts, curve, series, remainder)
