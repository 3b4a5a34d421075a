"""Supremum of a random walk with negative drift: simulation, ladder heights and predictions.

Increments are xi = eta - shift with eta from the catalog. When eta has a
closed-form inverse (Pareto, point mass) every path owns a splitmix64 stream
seeded from ``SeedSequence(seed)`` and the kernels draw inline; otherwise
batches of paths draw blocks from numpy generators spawned from the same
seed. Either way a path's increments do not depend on the kernel backend.

Both simulators use the same finite-time rule, the drawdown barrier: an
excursion is abandoned once the walk falls ``B`` below its running maximum.
For the ladder simulation (which starts at its maximum 0) this is the
crossing of -B; for the supremum it makes every ladder epoch of a path face
the same barrier, so the Monte Carlo law of M and the geometric compound of
the estimated ladder law target the same quantity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, signal, stats

from htl import _pykernels, kernels
from htl.convolve import StoppingLaw, density_convolve, stopped_sum
from htl.measures import (
    DeltaWindow,
    DensityGrid,
    Distribution,
    GridMeasure,
    GridSpec,
    ParameterError,
)
from htl.series import RatioSeries

BLOCK = 128
BATCH = 1 << 15


@dataclass(frozen=True)
class IncrementModel:
    """xi = eta - shift, with eta >= 0 from the catalog and drift m = shift - E eta > 0."""

    positive_part: Distribution
    shift: float

    def __post_init__(self):
        if self.positive_part.support_min < 0:
            raise ParameterError("eta must be nonnegative")
        if not math.isfinite(self.positive_part.mean()):
            raise ParameterError("E eta must be finite")
        if not self.m > 0:
            raise ParameterError(f"drift must be negative: E xi = {-self.m:g} >= 0")

    @property
    def m(self) -> float:
        return float(self.shift - self.positive_part.mean())

    @property
    def lattice_span(self):
        span = self.positive_part.lattice_span
        if span is None:
            return None
        return span if float(self.shift / span).is_integer() else None

    @property
    def has_density(self) -> bool:
        return self.positive_part.has_density

    def tail(self, x):
        return self.positive_part.tail(np.asarray(x, dtype=np.float64) + self.shift)

    def local_prob(self, x, T):
        return self.positive_part.local_prob(np.asarray(x, dtype=np.float64) + self.shift, T)

    def density(self, x):
        return self.positive_part.density(np.asarray(x, dtype=np.float64) + self.shift)

    def integrated_tail(self, x):
        """min(1, integral of the tail of xi over (x, inf))."""
        return self.positive_part.integrated_tail(np.asarray(x, dtype=np.float64) + self.shift)

    def positive_mean(self) -> float:
        """E max(xi, 0)."""
        return float(self.positive_part._tail_integral(self.shift))

    def stream_params(self) -> tuple[int, float] | None:
        """(kind, parameter) for the inline generators of the walk kernels, if eta has one."""
        eta = self.positive_part
        if eta.kind == "pareto":
            return (1, 0.0) if eta.alpha == 2.0 else (2, -1.0 / eta.alpha)
        if eta.kind == "point_mass":
            return (0, float(eta.c))
        return None

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        out = self.positive_part.sample(rng, shape)
        out -= self.shift
        return out


def default_barrier(inc: IncrementModel) -> float:
    return 50.0 * inc.m


def _batch_sizes(n_paths: int, batch: int) -> list[int]:
    full, rest = divmod(int(n_paths), batch)
    return [batch] * full + ([rest] if rest else [])


def _cic(values: np.ndarray, spec: GridSpec) -> GridMeasure:
    """Empirical law with each value split linearly between its two neighbouring nodes.

    The split keeps the mean of every value exact; values on a node stay
    there. Mass beyond the grid goes to the overflow bucket.
    """
    n = spec.n_cells
    u = values / spec.cell_width - (spec.origin_index + 1)
    j = np.floor(u).astype(np.int64)
    frac = u - j
    if np.any(j < 0):
        raise ParameterError("value below the grid")
    mass = np.zeros(n)
    inside = j + 1 < n
    mass += np.bincount(j[inside], weights=1.0 - frac[inside], minlength=n)[:n]
    mass += np.bincount(j[inside] + 1, weights=frac[inside], minlength=n)[:n]
    # the last node shares a value with the bucket beyond the edge
    edge = j == n - 1
    mass[n - 1] += np.sum(1.0 - frac[edge])
    over = float(np.count_nonzero(j >= n) + np.sum(frac[edge]))
    m = values.size
    return GridMeasure(spec, mass / m, over / m)


# --------------------------------------------------------------------------
# supremum by direct simulation


def _path_states(seed: int, n: int) -> np.ndarray:
    """Generator states for paths 0..n-1, independent of how the paths are batched."""
    base = np.random.SeedSequence(seed).generate_state(1, np.uint64)[0]
    return _pykernels.splitmix_states(base, n)


@dataclass(frozen=True, eq=False)
class TailCheck:
    """Observed/predicted ratios with relative CI half-widths and a reliability mask.

    Each producer sets its own reliability rule; all of them combine enough
    hits (or a narrow CI) with a barrier-sensitivity bound. ``final_x`` is
    the largest x up to which every point is reliable (NaN when the first
    point already is not).
    """

    xs: np.ndarray
    observed: np.ndarray
    predicted: np.ndarray
    ratio: np.ndarray
    halfwidth: np.ndarray
    reliable: np.ndarray

    @property
    def final_index(self) -> int:
        bad = np.flatnonzero(~self.reliable)
        return (self.xs.size if bad.size == 0 else int(bad[0])) - 1

    @property
    def final_x(self) -> float:
        i = self.final_index
        return float(self.xs[i]) if i >= 0 else math.nan

    def within_ci(self, target: float = 1.0) -> np.ndarray:
        return np.abs(self.ratio - target) <= self.halfwidth


@dataclass(frozen=True, eq=False)
class SupremumResult:
    pi_hat: GridMeasure
    source: str
    predictions: dict
    n_paths: int
    barrier: float
    samples: np.ndarray | None = None
    batch_measures: list | None = None
    samples_half: np.ndarray | None = None  # maxima under the barrier B/2

    def tail_ci(self, x, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        """Estimate of P(M > x) and its normal-approximation half-width."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        if self.samples is not None:
            est = _exceed(self.samples, x) / self.samples.size
        else:
            est = np.atleast_1d(self.pi_hat.tail(x))
        return est, _halfwidth(est, self.n_paths, level)

    def window_ci(self, xs, T: float, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        """Window estimate and half-width: binomial for Monte Carlo, batch spread for compounds."""
        est = self.pi_hat.windows(xs, T)
        if self.source == "monte_carlo" or not self.batch_measures:
            return est, _halfwidth(est, self.n_paths, level)
        reps = np.array([m.windows(xs, T) for m in self.batch_measures])
        return est, _batch_halfwidth(reps, level)

    def cell_ci(self, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        """Cell masses and half-widths at ``level`` for each cell separately."""
        est = self.pi_hat.mass
        if self.source == "monte_carlo" or not self.batch_measures:
            return est, _halfwidth(est, self.n_paths, level)
        reps = np.array([m.mass for m in self.batch_measures])
        return est, _batch_halfwidth(reps, level)

    def tail_check(self, inc: "IncrementModel", xs, level: float = 0.95,
                   min_hits: int = 1000) -> TailCheck:
        """P(M > x) against (1/m) integrated tail, with barrier-halving sensitivity."""
        if self.samples is None or self.samples_half is None:
            raise ParameterError("tail_check needs the Monte Carlo samples")
        xs = np.asarray(xs, dtype=np.float64)
        est, hw = self.tail_ci(xs, level)
        half = _exceed(self.samples_half, xs) / self.samples_half.size
        pred = np.asarray(inc.integrated_tail(xs), dtype=np.float64) / inc.m
        hits = est * self.n_paths
        reliable = (hits >= min_hits) & (np.abs(est - half) <= 0.5 * hw)
        with np.errstate(divide="ignore", invalid="ignore"):
            return TailCheck(xs, est, pred, est / pred, hw / pred, reliable)


def _exceed(samples: np.ndarray, xs: np.ndarray) -> np.ndarray:
    srt = np.sort(samples)
    return (srt.size - np.searchsorted(srt, xs, side="right")).astype(np.float64)


def _halfwidth(p, n, level):
    z = stats.norm.ppf(0.5 + level / 2)
    p = np.asarray(p, dtype=np.float64)
    return z * np.sqrt(np.maximum(p * (1 - p), 0.0) / n)


def _batch_halfwidth(reps: np.ndarray, level: float) -> np.ndarray:
    K = reps.shape[0]
    q = stats.t.ppf(0.5 + level / 2, K - 1)
    return q * reps.std(axis=0, ddof=1) / math.sqrt(K)


def predictions_table(inc: IncrementModel, xs, T: float) -> dict:
    xs = np.asarray(xs, dtype=np.float64)
    m = inc.m
    tail = np.asarray(inc.tail(xs), dtype=np.float64)
    return {
        "x": xs,
        "local": (T if math.isfinite(T) else np.nan) * tail / m,
        "tail": np.asarray(inc.integrated_tail(xs), dtype=np.float64) / m,
        "density": tail / m,
    }


def _maxima(inc: IncrementModel, n_paths: int, barrier: float, seed: int,
            batch: int = BATCH, block: int = BLOCK) -> tuple[np.ndarray, np.ndarray]:
    """Maxima under the drawdown barrier B and under B/2, one entry per path."""
    n_paths = int(n_paths)
    M = np.zeros(n_paths)
    Mh = np.zeros(n_paths)
    code = inc.stream_params()
    if code is not None:
        kind, a = code
        kernels.walk_supremum_stream(M, Mh, _path_states(seed, n_paths), kind, a, inc.shift, barrier)
        return M, Mh
    sizes = _batch_sizes(n_paths, batch)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    start = 0
    for size, ss in zip(sizes, seeds):
        rng = np.random.default_rng(ss)
        idx = np.arange(start, start + size)
        S = np.zeros(size)
        Mb = np.zeros(size)
        Mhb = np.zeros(size)
        done = np.zeros(size, dtype=np.uint8)
        while idx.size:
            incs = inc.sample(rng, (idx.size, block))
            kernels.walk_supremum_block(S, Mb, Mhb, done, incs, barrier)
            fin = (done & 1).astype(bool)
            M[idx[fin]] = Mb[fin]
            Mh[idx[fin]] = Mhb[fin]
            keep = ~fin
            idx = idx[keep]
            S, Mb, Mhb, done = (np.ascontiguousarray(v[keep]) for v in (S, Mb, Mhb, done))
        start += size
    return M, Mh


def supremum_grid(x_max: float, cell_width: float) -> GridSpec:
    return GridSpec.covering(0.0, x_max, cell_width)


def simulate_supremum(inc: IncrementModel, n_paths: int, barrier: float | None = None,
                      seed: int = 0, cell_width: float = 0.05, x_max: float = 1000.0,
                      window: DeltaWindow = DeltaWindow(1.0), xs=None,
                      keep_samples: bool = True) -> SupremumResult:
    """Empirical law of M = max_n S_n with the drawdown barrier B (default 50 m)."""
    B = default_barrier(inc) if barrier is None else float(barrier)
    if not B > 0:
        raise ParameterError("barrier must be > 0")
    span = inc.lattice_span
    w = span if span is not None else cell_width
    M, Mh = _maxima(inc, n_paths, B, seed)
    spec = supremum_grid(x_max, w)
    pi = _cic(M, spec)
    xs = _default_xs(x_max, w) if xs is None else np.asarray(xs, dtype=np.float64)
    return SupremumResult(pi, "monte_carlo", predictions_table(inc, xs, window.T), int(n_paths), B,
                          M if keep_samples else None, None, Mh if keep_samples else None)


def _default_xs(x_max: float, w: float) -> np.ndarray:
    from htl.series import geometric_schedule

    return geometric_schedule(max(w, 1.0), x_max / 2, 1.5, w)


# --------------------------------------------------------------------------
# ladder heights


@dataclass(frozen=True, eq=False)
class LadderEstimate:
    p_hat: float
    G_hat: GridMeasure
    n_paths: int
    barrier: float
    ci_halfwidth: float
    inc: IncrementModel
    p_hat_2B: float = math.nan
    biased: bool = False
    heights: np.ndarray | None = None
    occupation: np.ndarray | None = None  # sum over paths of visits to -j*h, h = occ_step
    occ_step: float = 1.0
    batch_p: np.ndarray | None = None
    batch_G: list | None = None
    late_heights: np.ndarray | None = None  # ascents after -B but before -2B
    batch_occupation: list | None = None  # (occupation, paths) per replicate

    @property
    def n_success(self) -> int:
        return 0 if self.heights is None else int(self.heights.size)

    def tail_check(self, xs, level: float = 0.95, min_hits: int = 1000) -> TailCheck:
        """G_hat tail times p m / ((1-p) integrated tail), which should tend to 1.

        The half-width combines the binomial error of p G_hat(x) with that
        of 1 - p_hat; barrier sensitivity is the shift of p G_hat(x) when
        the late ascents (between -B and -2B) are counted as well.
        """
        xs = np.asarray(xs, dtype=np.float64)
        N = self.n_paths
        pG = _exceed(self.heights, xs) / N
        late = _exceed(self.late_heights, xs) / N
        p = self.p_hat
        inc = self.inc
        FI = np.asarray(inc.integrated_tail(xs), dtype=np.float64)
        obs = pG / p
        pred = (1 - p) / (p * inc.m) * FI
        hw_pG = _halfwidth(pG, N, level)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.sqrt((hw_pG / pG) ** 2 + (self.ci_halfwidth / (1 - p)) ** 2)
            ratio = obs / pred
        reliable = (pG * N >= min_hits) & (late <= 0.5 * hw_pG)
        return TailCheck(xs, obs, pred, ratio, rel * ratio, reliable)


def _ladder_runs(inc: IncrementModel, n_paths: int, B: float, seed: int, occ_step: float,
                 n_batches: int = 1, batch: int = BATCH, block: int = BLOCK):
    """First-ascent walks; returns per-path final states and heights, and one
    occupation array per replicate (paths split by index into ``n_batches``)."""
    n_paths = int(n_paths)
    nocc = int(math.floor(B / occ_step)) + 2
    state = np.zeros(n_paths, dtype=np.int8)
    height = np.full(n_paths, np.nan)
    bounds = [n_paths * r // n_batches for r in range(n_batches + 1)]
    occs = []
    code = inc.stream_params()
    if code is not None:
        kind, a = code
        rng = _path_states(seed, n_paths)
        for lo, hi in zip(bounds, bounds[1:]):
            occ = np.zeros(nocc)
            occ[0] += hi - lo  # S_0 = 0
            st, h = state[lo:hi], height[lo:hi]
            kernels.walk_ladder_stream(st, h, rng[lo:hi], kind, a, inc.shift, B, 2 * B, occ, occ_step)
            occs.append(occ)
        return state, height, occs
    seeds = iter(np.random.SeedSequence(seed).spawn(n_paths // batch + 2 * n_batches))
    for lo, hi in zip(bounds, bounds[1:]):
        occ = np.zeros(nocc)
        occ[0] += hi - lo
        start = lo
        for size in _batch_sizes(hi - lo, batch):
            rng = np.random.default_rng(next(seeds))
            idx = np.arange(start, start + size)
            S = np.zeros(size)
            st = np.zeros(size, dtype=np.int8)
            h = np.full(size, np.nan)
            while idx.size:
                incs = inc.sample(rng, (idx.size, block))
                kernels.walk_ladder_block(S, st, h, incs, B, 2 * B, occ, occ_step)
                fin = st >= 2
                state[idx[fin]] = st[fin]
                height[idx[fin]] = h[fin]
                keep = ~fin
                idx = idx[keep]
                S, st, h = (np.ascontiguousarray(v[keep]) for v in (S, st, h))
            start += size
        occs.append(occ)
    return state, height, occs


def estimate_ladder(inc: IncrementModel, n_paths: int, barrier: float | None = None, seed: int = 0,
                    cell_width: float = 0.05, x_max: float = 1000.0, n_batches: int = 10,
                    level: float = 0.95) -> LadderEstimate:
    """p_hat = P(ascent over 0 before -B) and G_hat, the empirical ladder-height law.

    The walks are followed on to -2B so the same paths also give the
    estimate under a doubled barrier; ``biased`` is raised when the two
    differ by more than the CI half-width of p_hat. ``occupation`` records
    the visits of S_n <= 0 before the ascent (or -B) for the taboo sums.
    Paths are split by index into ``n_batches`` contiguous replicates for
    compound CIs; with the stream kernels the replicate split does not change
    any path.
    """
    B = default_barrier(inc) if barrier is None else float(barrier)
    if not B > 0:
        raise ParameterError("barrier must be > 0")
    span = inc.lattice_span
    w = span if span is not None else cell_width
    spec = supremum_grid(x_max, w)
    state, height, occs = _ladder_runs(inc, n_paths, B, seed, w, n_batches)
    occ = np.sum(occs, axis=0)
    N = state.size
    ok = state == 2
    H = height[ok]
    late = height[state == 3]
    p = H.size / N
    p2 = (H.size + late.size) / N
    hw = float(_halfwidth(p, N, level))
    G = _cic(H, spec) if H.size else GridMeasure.point_mass(0.0, spec)
    batch_p, batch_G, batch_occ = [], [], []
    bounds = [N * r // n_batches for r in range(n_batches + 1)]
    for r, (lo, hi) in enumerate(zip(bounds, bounds[1:])):
        if hi == lo:
            continue
        hh = height[lo:hi][ok[lo:hi]]
        batch_p.append(hh.size / (hi - lo))
        batch_G.append(_cic(hh, spec) if hh.size else GridMeasure.point_mass(0.0, spec))
        batch_occ.append((occs[r], hi - lo))
    return LadderEstimate(p, G, N, B, hw, inc, p2, abs(p2 - p) > hw, H, occ, w,
                          np.array(batch_p), batch_G, late, batch_occ)


def smoothed_ladder(L: LadderEstimate, spec: GridSpec, occupation: np.ndarray | None = None,
                    n_paths: int | None = None, depth: float | None = None) -> tuple[float, GridMeasure]:
    """Ladder law from the pre-ascent occupation and the exact increment law.

    A path sitting at -y before its ascent jumps to height in (t, t+dt] with
    probability f(y+t)dt, so p G(dt) = (1/N) sum_j occ_j F_xi(jh + dt). This
    conditional estimate replaces the few observed heights at large t by the
    known tail of xi. Node masses use the same linear split as the empirical
    law: the hat-function integral of f, a second difference of the
    integrated tail. ``depth`` < B drops the occupation below -depth, which
    is the same estimate under the barrier ``depth``. Returns (p, G) with G
    normalised.
    """
    inc = L.inc
    occ = L.occupation if occupation is None else occupation
    if depth is not None:
        occ = occ[: int(math.floor(depth / L.occ_step)) + 1]
    N = L.n_paths if n_paths is None else n_paths
    w = spec.cell_width
    if spec.origin_index != -1 or abs(w - L.occ_step) > 1e-12 * w:
        raise ParameterError("smoothed ladder law needs a half-line grid with the occupation step")
    n, J = spec.n_cells, occ.size
    y = np.arange(n + J + 1) * w
    phi = np.vectorize(inc.positive_part._tail_integral, otypes=[float])(y + inc.shift)
    tail = np.asarray(inc.tail(y), dtype=np.float64)
    k = np.zeros(n + J)
    k[1:] = (phi[:-2] - 2 * phi[1:-1] + phi[2:])[: n + J - 1] / w
    # node 0 only collects heights in (0, w]
    k0 = tail[:J] - (phi[:J] - phi[1:J + 1]) / w
    mass = signal.fftconvolve(occ[::-1], k[:n + J - 1])[J - 1:J - 1 + n]
    mass[0] = np.dot(occ, k0)
    mass = np.maximum(mass, 0.0)  # FFT round-off in the far tail
    total = float(np.dot(occ, tail[:J]))
    if not total > 0:
        raise ParameterError("no occupation mass can reach above 0")
    over = max(total - float(mass.sum()), 0.0)
    return total / N, GridMeasure(spec, mass / total, over / total)


def supremum_via_geometric(L: LadderEstimate, spec: GridSpec | None = None,
                           window: DeltaWindow = DeltaWindow(1.0), xs=None,
                           with_batches: bool = True, method: str = "empirical",
                           depth: float | None = None) -> SupremumResult:
    """(1-p) sum_k p^k G^{*k} from a ladder estimate; batch replicates give the CI.

    ``method`` picks the ladder law: "empirical" uses the observed heights,
    "smoothed" the occupation-based estimate of :func:`smoothed_ladder`,
    optionally cut at ``depth`` below 0.
    """
    if not L.p_hat < 1:
        raise ParameterError("p_hat = 1: the ladder process never stops")
    if method not in ("empirical", "smoothed"):
        raise ParameterError(f"unknown method {method!r}")
    if depth is not None and method != "smoothed":
        raise ParameterError("depth applies to the smoothed ladder law only")
    base = L.G_hat.spec if spec is None else spec

    def compound(p, Gm):
        out, _ = stopped_sum(Gm, StoppingLaw.geometric(p))
        return out

    if method == "smoothed":
        if L.occupation is None or not L.inc.has_density:
            raise ParameterError("the smoothed ladder law needs an occupation and a density")
        p, G = smoothed_ladder(L, base, depth=depth)
        parts = [smoothed_ladder(L, base, o, n, depth) for o, n in (L.batch_occupation or [])]
    else:
        p, G = L.p_hat, L.G_hat.with_spec(base)
        parts = [(q, g.with_spec(base)) for q, g in zip(L.batch_p, L.batch_G or [])]
    pi = compound(p, G)
    reps = None
    if with_batches and len(parts) > 1:
        reps = [compound(q, g) for q, g in parts]
    w = pi.cell_width
    xs = _default_xs(pi.spec.right_edge, w) if xs is None else np.asarray(xs, dtype=np.float64)
    return SupremumResult(pi, "geometric_compound", predictions_table(L.inc, xs, window.T),
                          L.n_paths, L.barrier, None, reps)


def compound_local_check(L: LadderEstimate, xs, window: DeltaWindow = DeltaWindow(1.0),
                         tol: float = 0.1, level: float = 0.95,
                         spec: GridSpec | None = None) -> tuple[TailCheck, SupremumResult]:
    """Smoothed geometric compound pi(x+D) against (T/m) tail(x).

    A point is reliable when the batch CI half-width is at most tol/2 of the
    estimate and cutting the occupation at B/2 moves the estimate by at most
    half the CI half-width.
    """
    xs = np.asarray(xs, dtype=np.float64)
    inc = L.inc
    C = supremum_via_geometric(L, spec, window, xs, method="smoothed")
    Ch = supremum_via_geometric(L, spec, window, xs, with_batches=False, method="smoothed",
                                depth=L.barrier / 2)
    est, hw = C.window_ci(xs, window.T, level)
    half = Ch.pi_hat.windows(xs, window.T)
    pred = window.T * np.asarray(inc.tail(xs), dtype=np.float64) / inc.m
    reliable = (est > 0) & (hw <= 0.5 * tol * est) & (np.abs(est - half) <= 0.5 * hw)
    with np.errstate(divide="ignore", invalid="ignore"):
        return TailCheck(xs, est, pred, est / pred, hw / pred, reliable), C


def cell_agreement(R: SupremumResult, C: SupremumResult, min_hits: int = 50,
                   level: float = 0.95) -> tuple[bool, float, int]:
    """Simultaneous comparison of Monte Carlo and compound cell masses.

    Cells with at least ``min_hits`` Monte Carlo hits are compared; the
    per-cell level is Bonferroni-adjusted so that ``level`` holds for the
    whole family. Returns (all agree, worst |diff| / combined half-width,
    number of cells).
    """
    mc = R.pi_hat.mass
    n = min(mc.size, C.pi_hat.mass.size)
    cells = np.flatnonzero(mc[:n] * R.n_paths >= min_hits)
    if cells.size == 0:
        return False, math.inf, 0
    per = 1 - (1 - level) / cells.size
    _, hw_mc = R.cell_ci(per)
    cm, hw_c = C.cell_ci(per)
    hw = np.sqrt(hw_mc[cells] ** 2 + hw_c[cells] ** 2)
    z = np.abs(mc[cells] - cm[cells]) / hw
    return bool(np.all(z <= 1.0)), float(z.max()), int(cells.size)


def ladder_local_prediction(inc: IncrementModel, x, window: DeltaWindow, p: float):
    """(1-p) T / (p m) * tail(x), the local ladder-height asymptotics."""
    if not 0 < p < 1:
        raise ParameterError("p must lie in (0, 1)")
    return (1 - p) * window.T / (p * inc.m) * np.asarray(inc.tail(x), dtype=np.float64)


def ladder_tail_prediction(inc: IncrementModel, x, p: float):
    """(1-p) / (p m) * integrated tail at x."""
    return (1 - p) / (p * inc.m) * np.asarray(inc.integrated_tail(x), dtype=np.float64)


# --------------------------------------------------------------------------
# taboo sums and the supremum density


@dataclass(frozen=True)
class TabooResult:
    value: float
    predicted: float
    p_hat: float
    n_paths: int
    barrier: float


def _occupation_sum(L: LadderEstimate, v: Callable, xs) -> np.ndarray:
    """(1/N) sum_j occ_j v(x + j h) for each x: the taboo sum with S_n = -j h."""
    h = L.occ_step
    j = np.arange(L.occupation.size)
    xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
    out = np.empty(xs.size)
    for i, x in enumerate(xs):
        out[i] = np.dot(L.occupation, np.asarray(v(x + j * h), dtype=np.float64)) / L.n_paths
    return out


def taboo_sum(inc: IncrementModel, v: Callable, x: float, n_paths: int,
              barrier: float | None = None, seed: int = 0, ladder: LadderEstimate | None = None,
              cell_width: float = 0.05) -> TabooResult:
    """Monte Carlo of sum_n E(v(x - S_n); S_1..S_n <= 0), stopped at -B.

    The visited positions are recorded on a grid of width ``cell_width``
    (split linearly between nodes), so v is in effect interpolated linearly.
    The companion value is (1-p)/m * V(x) with V(x) = integral of v over (x, inf).
    """
    L = ladder or estimate_ladder(inc, n_paths, barrier, seed, cell_width=cell_width)
    V0, _ = integrate.quad(lambda y: float(v(y)), 0, np.inf, limit=200)
    if not math.isfinite(V0):
        raise ParameterError("integral of v over (0, inf) diverges")
    value = float(_occupation_sum(L, v, [x])[0])
    Vx, _ = integrate.quad(lambda y: float(v(y)), x, np.inf, limit=200)
    pred = (1 - L.p_hat) / inc.m * Vx
    return TabooResult(value, pred, L.p_hat, L.n_paths, L.barrier)


def ladder_density(L: LadderEstimate, spec: GridSpec) -> DensityGrid:
    """g(x) = (1/p) sum_n E(f(x - S_n); S_1..S_n <= 0): the taboo sum with v = f."""
    inc = L.inc
    if not inc.has_density:
        raise ParameterError("the increment law has no density")
    if spec.origin_index != -1:
        raise ParameterError("ladder density needs a half-line grid")
    if abs(spec.cell_width - L.occ_step) > 1e-12 * spec.cell_width:
        raise ParameterError("ladder density needs the occupation step as cell width")
    occ = L.occupation / L.n_paths
    n, J = spec.n_cells, occ.size
    f = np.asarray(inc.density(np.arange(n + J - 1) * spec.cell_width), dtype=np.float64)
    # vals[i] = sum_j occ_j f((i + j) h), a correlation
    vals = signal.fftconvolve(occ[::-1], f)[J - 1:J - 1 + n]
    vals = np.maximum(vals, 0.0) / L.p_hat
    head = GridMeasure(spec, np.zeros(spec.n_cells))
    return DensityGrid(spec, vals, 0.0, head)


@dataclass(frozen=True, eq=False)
class DensityCheck:
    series: RatioSeries
    compound: DensityGrid
    ladder: DensityGrid
    p: float
    truncation: float


def compound_density(g: DensityGrid, p: float, tol: float = 1e-12) -> tuple[DensityGrid, float]:
    """(1-p) sum_{k>=1} p^k g^{*k} as a density with the atom (1-p) at 0 in the head."""
    law = StoppingLaw.geometric(p, tol=tol)
    spec = g.spec
    vals = np.zeros(spec.n_cells)
    head = np.zeros(spec.n_cells)
    head[0] = law.probs[0]
    over = 0.0
    power = g
    for k in range(1, law.n_max + 1):
        if k > 1:
            power = density_convolve(power, g)
        vals += law.probs[k] * power.values
        head += law.probs[k] * power.head.mass
        over += law.probs[k] * power.overflow
    return DensityGrid(spec, vals, 0.0, GridMeasure(spec, head), over), law.remainder


def supremum_density_check(inc: IncrementModel, xs, ladder: LadderEstimate, x_max: float | None = None,
                           tol: float = 0.1, k: int = 3,
                           sstar_verdict: str | None = None) -> DensityCheck:
    """Compound ladder density against tail(x)/m.

    ``sstar_verdict`` is the S* verdict of the increment law (required to be
    a pass when given).
    """
    if not inc.has_density:
        raise ParameterError("the supremum density check needs increments with a density")
    if sstar_verdict is not None and sstar_verdict != "pass":
        raise ParameterError(f"increment law failed the S* precondition ({sstar_verdict})")
    xs = np.asarray(xs, dtype=np.float64)
    hi = float(xs.max()) + 1.0 if x_max is None else x_max
    spec = GridSpec.covering(0.0, hi, ladder.occ_step)
    g = ladder_density(ladder, spec)
    dens, trunc = compound_density(g, ladder.p_hat)
    obs = dens.at(xs)
    pred = np.asarray(inc.tail(xs), dtype=np.float64) / inc.m
    series = RatioSeries.from_observed(xs, obs, pred, 1.0, tol=tol, k=k)
    return DensityCheck(series, dens, g, ladder.p_hat, trunc)
