"""Command-line experiment runner: ``htl run <config.toml>`` and ``htl list``.

A config names one experiment from :data:`EXPERIMENTS` plus its inputs.
``run`` writes ``ratios.csv``, ``verdict.json`` and ``plotdata.csv`` to the
output directory and exits 0 when every assertion passes, 1 when one fails
and 2 when the config does not validate.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from htl.measures import (
    CATALOG_KINDS,
    DeltaWindow,
    Distribution,
    GridSpec,
    ParameterError,
    discretize,
    make_distribution,
)
from htl.series import DEFAULT_K, DEFAULT_TOL, RatioSeries, geometric_schedule

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    """The config file is malformed or names something that does not exist."""


# --------------------------------------------------------------------------
# config access


@dataclass
class Config:
    """Parsed TOML with typed accessors that raise :class:`ConfigError`."""

    data: dict
    path: str = "<config>"

    @property
    def experiment(self) -> str:
        name = self.data.get("experiment")
        if not isinstance(name, str):
            raise ConfigError("'experiment' must be a string naming an experiment (see `htl list`)")
        if name not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {name!r}; known: {', '.join(EXPERIMENTS)}")
        return name

    def section(self, name: str) -> dict:
        sec = self.data.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"[{name}] must be a table")
        return sec

    def number(self, section: str, key: str, default=None, *, positive=False, integer=False):
        sec = self.section(section)
        if key not in sec:
            if default is None:
                raise ConfigError(f"[{section}] {key} is required")
            return default
        v = _as_number(sec[key], f"[{section}] {key}")
        if integer:
            if v != int(v):
                raise ConfigError(f"[{section}] {key} must be an integer, got {sec[key]!r}")
            v = int(v)
        if positive and not v > 0:
            raise ConfigError(f"[{section}] {key} must be > 0, got {sec[key]!r}")
        return v

    def text(self, section: str, key: str, default=None, choices=None) -> str:
        sec = self.section(section)
        v = sec.get(key, default)
        if v is None:
            raise ConfigError(f"[{section}] {key} is required")
        if not isinstance(v, str):
            raise ConfigError(f"[{section}] {key} must be a string")
        if choices is not None and v not in choices:
            raise ConfigError(f"[{section}] {key} must be one of {list(choices)}, got {v!r}")
        return v

    @property
    def seed(self) -> int | None:
        s = self.data.get("seed")
        if s is None:
            return None
        if isinstance(s, bool) or not isinstance(s, int) or s < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {s!r}")
        return s

    @property
    def tol(self) -> float:
        return self.number("tolerance", "tol", DEFAULT_TOL, positive=True)

    @property
    def k(self) -> int:
        return self.number("tolerance", "k", DEFAULT_K, positive=True, integer=True)

    @property
    def cell_width(self) -> float:
        return self.number("grid", "cell_width", 0.05, positive=True)

    def distribution(self, section: str = "distribution") -> Distribution:
        sec = self.section(section)
        if not sec:
            raise ConfigError(f"[{section}] is required")
        kind = sec.get("kind")
        if not isinstance(kind, str):
            raise ConfigError(f"[{section}] kind must be a string")
        if kind.lower().replace("-", "_") == "empirical":
            raise ConfigError(f"[{section}] kind 'empirical' needs a measure and cannot come from a config")
        params = sec.get("params", [])
        if not isinstance(params, (list, dict)):
            raise ConfigError(f"[{section}] params must be a list or a table")
        try:
            return make_distribution(kind, params)
        except ParameterError as e:
            raise ConfigError(f"[{section}] {e}") from None
        except (TypeError, ValueError) as e:
            raise ConfigError(f"[{section}] bad parameters: {e}") from None

    def windows(self, default=(1.0,)) -> list[DeltaWindow]:
        raw = self.section("window").get("T", list(default))
        raw = raw if isinstance(raw, list) else [raw]
        if not raw:
            raise ConfigError("[window] T must not be empty")
        out = []
        for t in raw:
            v = _as_number(t, "[window] T")
            if not v > 0:
                raise ConfigError(f"[window] T must be > 0, got {t!r}")
            out.append(DeltaWindow(v))
        return out

    def window(self, default: float = 1.0) -> DeltaWindow:
        ws = self.windows((default,))
        if len(ws) != 1:
            raise ConfigError("this experiment takes a single window T")
        return ws[0]

    def xs(self, align: float, default=(10.0, 1000.0, 1.5)) -> np.ndarray:
        sec = self.section("schedule")
        if "xs" in sec:
            vals = sec["xs"]
            if not isinstance(vals, list) or not vals:
                raise ConfigError("[schedule] xs must be a nonempty list")
            xs = np.array([_as_number(v, "[schedule] xs") for v in vals], dtype=np.float64)
            if np.any(np.diff(xs) <= 0):
                raise ConfigError("[schedule] xs must be strictly increasing")
            if not np.all(np.isfinite(xs)):
                raise ConfigError("[schedule] xs must be finite")
            return xs
        x0 = self.number("schedule", "x0", default[0], positive=True)
        x_max = self.number("schedule", "x_max", default[1], positive=True)
        ratio = self.number("schedule", "ratio", default[2], positive=True)
        if not (x_max >= x0 and ratio > 1 and math.isfinite(x_max)):
            raise ConfigError("[schedule] needs x0 <= x_max < inf and ratio > 1")
        xs = geometric_schedule(x0, x_max, ratio, align)
        if xs.size < 1:
            raise ConfigError("[schedule] produces no grid-aligned points")
        return xs

    def expect(self, default: str = "pass") -> str:
        return self.text("assert", "verdict", default, ("pass", "fail", "inconclusive"))


def _as_number(v, where: str) -> float:
    if isinstance(v, bool):
        raise ConfigError(f"{where} must be a number, got {v!r}")
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity"):
        return math.inf
    if not isinstance(v, (int, float)):
        raise ConfigError(f"{where} must be a number, got {v!r}")
    v = float(v)
    if math.isnan(v):
        raise ConfigError(f"{where} must not be nan")
    return v


# --------------------------------------------------------------------------
# outcomes


@dataclass
class Outcome:
    series: list = field(default_factory=list)  # (label, T, RatioSeries)
    verdicts: list = field(default_factory=list)
    assertions: list = field(default_factory=list)  # (name, passed, detail)
    truncation: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def add_series(self, label: str, T, s: RatioSeries) -> None:
        self.series.append((label, T, s))

    def check(self, name: str, passed: bool, detail: str = "") -> None:
        self.assertions.append((name, bool(passed), detail))

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.assertions)


def _series_summary(label: str, T, s: RatioSeries) -> dict:
    return {
        "series": label,
        "T": T,
        "verdict": s.verdict,
        "target": s.target,
        "final_x": float(s.xs[-1]) if len(s) else None,
        "final_ratio": s.final_ratio if len(s) else None,
        "final_abs_error": s.final_abs_error,
        "tol": s.tol,
        "k": s.k,
    }


def _verdict_assert(out: Outcome, cfg: Config, v, label: str) -> None:
    expected = cfg.expect()
    out.verdicts.append(v.to_dict())
    out.add_series(label, v.window.T if v.window is not None else None, v.evidence)
    out.check(f"{label}: verdict == {expected}", v.verdict == expected,
              f"verdict {v.verdict}, evidence {v.evidence.verdict}")


def _ratio_assert(out: Outcome, label: str, s: RatioSeries, target: float, tol: float) -> None:
    err = abs(s.final_ratio - target)
    out.check(f"{label}: final ratio within {tol:g} of {target:g}", err <= tol * max(1.0, abs(target)),
              f"final ratio {s.final_ratio:.6g} at x={s.xs[-1]:g}")


# --------------------------------------------------------------------------
# experiments


def _grid_width(cfg: Config, dist: Distribution, window: DeltaWindow | None = None) -> float:
    from htl.diagnostics import default_cell_width

    if "cell_width" in cfg.section("grid"):
        return cfg.cell_width
    return default_cell_width(dist, window or DeltaWindow(1.0))


def run_long_tailed(cfg: Config) -> Outcome:
    from htl.diagnostics import check_long_tailed

    dist = cfg.distribution()
    out = Outcome()
    for w in cfg.windows():
        xs = cfg.xs(_grid_width(cfg, dist, w))
        v = check_long_tailed(dist, w, xs, tol=cfg.tol, k=cfg.k)
        _verdict_assert(out, cfg, v, f"L_Delta T={w.T:g}")
    return out


def run_delta_subexp(cfg: Config) -> Outcome:
    from htl.diagnostics import check_delta_subexp

    dist = cfg.distribution()
    out = Outcome()
    for w in cfg.windows():
        cw = _grid_width(cfg, dist, w)
        xs = cfg.xs(cw)
        v = check_delta_subexp(dist, w, xs, cell_width=cw, tol=cfg.tol, k=cfg.k)
        _verdict_assert(out, cfg, v, f"S_Delta T={w.T:g}")
        out.truncation[f"T={w.T:g}"] = {"grid_width": cw}
    return out


def run_density_subexp(cfg: Config) -> Outcome:
    from htl.diagnostics import check_density_subexp

    dist = cfg.distribution()
    thr = cfg.section("params").get("threshold")
    thr = None if thr is None else _as_number(thr, "[params] threshold")
    xs = cfg.xs(cfg.cell_width)
    v = check_density_subexp(dist, xs, cell_width=cfg.cell_width, threshold=thr, tol=cfg.tol, k=cfg.k)
    out = Outcome()
    _verdict_assert(out, cfg, v, "S_ac")
    return out


def run_sstar(cfg: Config) -> Outcome:
    from htl.diagnostics import check_sstar

    dist = cfg.distribution()
    xs = cfg.xs(cfg.cell_width)
    step = cfg.number("params", "step", 0.01, positive=True)
    v = check_sstar(dist, xs, tol=cfg.tol, k=cfg.k, step=step)
    out = Outcome()
    _verdict_assert(out, cfg, v, "S_star")
    return out


def run_suff_ratio(cfg: Config) -> Outcome:
    from htl.diagnostics import check_suff_ratio

    dist = cfg.distribution()
    out = Outcome()
    thr = cfg.number("params", "threshold", 1e-3, positive=True)
    for w in cfg.windows():
        xs = cfg.xs(_grid_width(cfg, dist, w))
        v = check_suff_ratio(dist, w, xs, threshold=thr, tol=cfg.tol, k=cfg.k)
        _verdict_assert(out, cfg, v, f"ratio condition T={w.T:g}")
    return out


def run_suff_concave(cfg: Config) -> Outcome:
    from htl.diagnostics import check_suff_concave

    dist = cfg.distribution()
    out = Outcome()
    gamma = cfg.number("params", "gamma", 0.5, positive=True)
    for w in cfg.windows():
        xs = cfg.xs(_grid_width(cfg, dist, w))
        v = check_suff_concave(dist, w, xs, gamma=gamma, tol=cfg.tol, k=cfg.k)
        _verdict_assert(out, cfg, v, f"concavity condition T={w.T:g}")
    return out


def run_closure(cfg: Config) -> Outcome:
    from htl.diagnostics import check_additivity, check_n_windows

    F = cfg.distribution()
    out = Outcome()
    w = cfg.window()
    cw = _grid_width(cfg, F, w)
    xs = cfg.xs(cw)
    if cfg.section("second"):
        G2 = cfg.distribution("second")
        c2 = cfg.number("params", "c2", 0.0)
        s = check_additivity(F, F, G2, w, xs, 1.0, c2, cell_width=cw, tol=cfg.tol, k=cfg.k)
        out.add_series("additivity (F*G2)/F", w.T, s)
        out.verdicts.append(_series_summary("additivity", w.T, s))
        _ratio_assert(out, "additivity", s, 1.0 + c2, cfg.tol)
    ns = cfg.section("params").get("multiples", [2])
    if not isinstance(ns, list) or not all(isinstance(n, int) and n >= 2 for n in ns):
        raise ConfigError("[params] multiples must be a list of integers >= 2")
    for n, v in check_n_windows(F, w, xs, ns=tuple(ns), cell_width=cw, tol=cfg.tol, k=cfg.k).items():
        _verdict_assert(out, cfg, v, f"S_Delta at {n}T")
    return out


def _stopping_law(cfg: Config):
    from htl.convolve import StoppingLaw

    kind = cfg.text("law", "kind", None, ("geometric", "poisson"))
    if kind == "geometric":
        p = cfg.number("law", "p")
        if not 0 <= p < 1:
            raise ConfigError("[law] p must lie in [0, 1)")
        return StoppingLaw.geometric(p)
    mu = cfg.number("law", "mu", positive=True)
    return StoppingLaw.poisson(mu, tol=1e-10)


def _half_line_grid(xs, T: float, cw: float) -> GridSpec:
    return GridSpec.covering(0.0, float(np.max(xs)) + (T if math.isfinite(T) else 0.0), cw)


def run_stopped_sum(cfg: Config) -> Outcome:
    from htl.convolve import kesten_check, stopped_sum

    F = cfg.distribution()
    w = cfg.window()
    cw = _grid_width(cfg, F, w)
    xs = cfg.xs(cw)
    spec = _half_line_grid(xs, w.T, cw)
    Fm = discretize(F, spec)
    law = _stopping_law(cfg)
    out = Outcome()
    eps = cfg.section("params").get("kesten_epsilon")
    if eps is not None:
        eps = _as_number(eps, "[params] kesten_epsilon")
        rep = kesten_check(F, Fm, w, eps, 20, float(xs[0]))
        law = law.kesten_n_max(rep.fitted_V, eps)
        out.truncation["kesten_V"] = rep.fitted_V
    S, rem = stopped_sum(Fm, law)
    obs = S.windows(xs, w.T)
    pred = law.mean * np.asarray(F.local_prob(xs, w.T), dtype=np.float64)
    s = RatioSeries.from_observed(xs, obs, pred, 1.0, tol=cfg.tol, k=cfg.k)
    out.add_series("S_tau(x+D) / (E tau F(x+D))", w.T, s)
    out.verdicts.append(_series_summary("stopped sum", w.T, s))
    out.truncation.update({"n_max": law.n_max, "stopping_remainder": rem, "overflow": S.overflow})
    _ratio_assert(out, "stopped sum", s, 1.0, cfg.tol)
    return out


def run_kesten(cfg: Config) -> Outcome:
    from htl.convolve import kesten_check

    F = cfg.distribution()
    w = cfg.window()
    cw = _grid_width(cfg, F, w)
    x_max = cfg.number("grid", "x_max", 400.0, positive=True)
    spec = _half_line_grid([x_max], w.T, cw)
    eps = cfg.number("params", "epsilon", 0.5, positive=True)
    n_max = cfg.number("params", "n_max", 20, positive=True, integer=True)
    x0 = cfg.number("params", "x0", 50.0)
    rep = kesten_check(F, discretize(F, spec), w, eps, n_max, x0)
    ns = np.arange(1, n_max + 1, dtype=np.float64)
    s = RatioSeries.from_observed(ns, rep.ratios_by_n, np.full(n_max, rep.fitted_V), 0.0,
                                  tol=cfg.tol, k=cfg.k)
    out = Outcome()
    out.add_series("sup_x G^n(x+D) / ((1+eps)^n F(x+D)) vs V (x column holds n)", w.T, s)
    out.verdicts.append({"fitted_V": rep.fitted_V, "epsilon": eps, "x0": x0, "n_checked": n_max,
                         "violations": [list(v) for v in rep.violations[:20]],
                         "n_violations": len(rep.violations)})
    out.check("no Kesten bound violations", rep.holds, f"{len(rep.violations)} violation(s)")
    return out


def run_overshoot(cfg: Config) -> Outcome:
    from htl.convolve import overshoot_local

    G = cfg.distribution()
    w = cfg.window()
    cw = _grid_width(cfg, G, w)
    xs = cfg.xs(cw, (5.0, 80.0, 1.5))
    spec = _half_line_grid(2 * xs, w.T, cw)
    Gm = discretize(G, spec)
    law = _stopping_law(cfg)
    obs, trunc = [], 0.0
    for x in xs:
        r = overshoot_local(Gm, float(x), float(x), w, law)
        obs.append(r.value)
        trunc = max(trunc, r.truncation)
    pred = law.mean * np.asarray(G.local_prob(2 * xs, w.T), dtype=np.float64)
    s = RatioSeries.from_observed(xs, np.array(obs), pred, 1.0, tol=cfg.tol, k=cfg.k)
    out = Outcome()
    out.add_series("P(chi(x) in x+D) / (E tau G(2x+D))", w.T, s)
    out.verdicts.append(_series_summary("overshoot", w.T, s))
    out.truncation["max_truncation"] = trunc
    _ratio_assert(out, "overshoot", s, 1.0, cfg.tol)
    return out


def _defective(cfg: Config, spec: GridSpec):
    from htl.renewal import DefectiveMeasure

    G = cfg.distribution()
    theta = cfg.number("params", "theta", 0.5, positive=True)
    if not theta < 1:
        raise ConfigError("[params] theta must lie in (0, 1)")
    Gm = discretize(G, spec)
    if Gm.mass[0] > 0:
        raise ConfigError("the renewal kernel puts mass at 0")
    return G, DefectiveMeasure.scaled(Gm, theta)


def run_renewal(cfg: Config) -> Outcome:
    from htl.renewal import renewal_measure

    w = cfg.window()
    cw = cfg.cell_width
    xs = cfg.xs(cw)
    spec = _half_line_grid(xs, w.T, cw)
    G, D = _defective(cfg, spec)
    U = renewal_measure(D)
    theta = D.theta
    target = (1 - theta) ** -2
    s = RatioSeries.from_observed(xs, U.windows(xs, w.T), D.G.windows(xs, w.T), target,
                                  tol=cfg.tol * target, k=cfg.k)
    out = Outcome()
    out.add_series("U(x+D) / G(x+D)", w.T, s)
    out.verdicts.append(_series_summary("renewal measure", w.T, s))
    mass_err = abs(U.total - 1 / (1 - theta))
    out.truncation.update({"U_total": U.total, "U_overflow": U.overflow, "mass_error": mass_err})
    _ratio_assert(out, "U window ratio", s, target, cfg.tol)
    out.check("U total mass 1/(1-theta) within 1e-9", mass_err <= 1e-9, f"error {mass_err:.3g}")
    return out


def _krt_input(cfg: Config, G: Distribution, theta: float) -> Callable:
    kind = cfg.text("input", "kind", None, ("bump", "scaled_g", "density"))
    if kind == "bump":
        width = cfg.number("input", "width", 1.0, positive=True)
        height = cfg.number("input", "height", 1.0, positive=True)
        return lambda x: np.where(x < width, height * (1 - x / width), 0.0)
    if kind == "scaled_g":
        c = cfg.number("input", "c", positive=True)
        # exact window masses, so z is defined on the whole grid
        return lambda x: c * theta * np.asarray(G.local_prob(x, 1.0), dtype=np.float64)
    dist = cfg.distribution("input_law")
    if not dist.has_density:
        raise ConfigError("[input_law] must have a density")
    I = cfg.number("input", "I", 1.0, positive=True)
    return lambda x: I * np.nan_to_num(np.asarray(dist.density(x), dtype=np.float64))


def run_krt(cfg: Config) -> Outcome:
    from htl.renewal import RegimeUndetermined, krt_regime

    cw = cfg.cell_width
    xs = cfg.xs(cw)
    spec = _half_line_grid(xs, 1.0, cw)
    G, D = _defective(cfg, spec)
    z = _krt_input(cfg, G, D.theta)
    out = Outcome()
    try:
        sol = krt_regime(z, D, xs, tol=cfg.tol, k=cfg.k)
    except RegimeUndetermined as e:
        out.verdicts.append({"regime": "undetermined", "detail": str(e)})
        out.check("regime determined", False, str(e))
        return out
    s = sol.evidence
    out.add_series(f"Z(x) / prediction, regime {sol.regime}", 1.0, s)
    summ = _series_summary("krt", 1.0, s)
    summ.update({"regime": sol.regime, "c": sol.c, "I": sol.I, "theta": D.theta,
                 "preconditions": sol.preconditions})
    out.verdicts.append(summ)
    want = cfg.section("assert").get("regime")
    if want is not None:
        out.check(f"regime == {want}", sol.regime == want, f"classified as {sol.regime}")
    _ratio_assert(out, "Z/prediction", s, 1.0, cfg.tol)
    return out


def run_compound_poisson(cfg: Config) -> Outcome:
    from htl.applications import compound_poisson

    F = cfg.distribution()
    w = cfg.window()
    cw = _grid_width(cfg, F, w)
    xs = cfg.xs(cw)
    mu = cfg.number("params", "mu", positive=True)
    s = compound_poisson(F, mu, None, w, xs, cell_width=cw, tol=cfg.tol, k=cfg.k)
    out = Outcome()
    out.add_series("G(x+D) / (mu F(x+D))", w.T, s)
    out.verdicts.append(_series_summary("compound Poisson", w.T, s))
    _ratio_assert(out, "compound Poisson", s, 1.0, cfg.tol)
    return out


def run_infdiv(cfg: Config) -> Outcome:
    from htl.applications import InfDivSpec, infdiv_local

    G = cfg.distribution()
    w = cfg.window()
    cw = _grid_width(cfg, G, w)
    xs = cfg.xs(cw)
    mu = cfg.number("params", "mu", positive=True)
    eps = cfg.number("params", "epsilon", positive=True)
    spec = _half_line_grid(xs, w.T, cw)
    F1 = discretize(cfg.distribution("light_factor"), spec)
    try:
        ids = InfDivSpec(G, mu, F1, eps)
    except ParameterError as e:
        raise ConfigError(str(e)) from None
    res = infdiv_local(ids, w, xs, grid=spec, tol=cfg.tol, k=cfg.k)
    out = Outcome()
    out.add_series("F(x+D) / nu(x+D)", w.T, res.series)
    summ = _series_summary("infinitely divisible", w.T, res.series)
    summ["precondition_G_in_S_Delta"] = res.precondition
    out.verdicts.append(summ)
    if res.secondary is not None:
        out.add_series("F(x+D) / F2(x+D)", w.T, res.secondary)
        out.verdicts.append(_series_summary("secondary", w.T, res.secondary))
    out.check("G passes the S_Delta precondition", res.precondition == "pass", res.precondition)
    _ratio_assert(out, "F/nu", res.series, 1.0, cfg.tol)
    return out


def run_branching(cfg: Config) -> Outcome:
    from htl.applications import BranchingParams, branching_mean

    F = cfg.distribution()
    w = cfg.window()
    cw = _grid_width(cfg, F, w)
    ts = cfg.xs(cw)
    A = cfg.number("params", "A", positive=True)
    try:
        P = BranchingParams(A, F)
    except ParameterError as e:
        raise ConfigError(str(e)) from None
    res = branching_mean(P, ts, w, cell_width=cw, tol=cfg.tol, k=cfg.k)
    out = Outcome()
    out.add_series("(A(t)-A(t+T))(1-A) / F(t+D)", w.T, res.series)
    out.verdicts.append(_series_summary("branching", w.T, res.series))
    out.truncation["remainder"] = res.remainder
    out.extra["mean_curve"] = (ts, res.mean_curve)
    _ratio_assert(out, "branching", res.series, 1.0, cfg.tol)
    return out


def _increments(cfg: Config):
    from htl.randomwalk import IncrementModel

    eta = cfg.distribution()
    shift = cfg.number("params", "shift")
    try:
        return IncrementModel(eta, shift)
    except ParameterError as e:
        raise ConfigError(str(e)) from None


def _mc_settings(cfg: Config, inc):
    from htl.randomwalk import default_barrier

    n = cfg.number("simulation", "n_paths", positive=True, integer=True)
    B = cfg.number("simulation", "barrier", default_barrier(inc), positive=True)
    return n, B


def run_random_walk(cfg: Config) -> Outcome:
    from htl.randomwalk import (cell_agreement, compound_local_check, estimate_ladder,
                                simulate_supremum)

    inc = _increments(cfg)
    seed = cfg.seed
    n, B = _mc_settings(cfg, inc)
    B_ladder = cfg.number("simulation", "ladder_barrier", B, positive=True)
    w = cfg.window()
    cw = inc.lattice_span or cfg.cell_width
    xs = cfg.xs(cw, (2.0, 1000.0, 1.25))
    x_max = float(xs.max()) * 1.25 + 10
    min_hits = cfg.number("params", "min_hits", 1000, positive=True, integer=True)
    loc_tol = cfg.number("params", "local_tol", 0.1, positive=True)
    R = simulate_supremum(inc, n, B, seed, cell_width=cw, x_max=x_max, window=w, xs=xs)
    tc = R.tail_check(inc, xs, min_hits=min_hits)
    L = estimate_ladder(inc, n, B_ladder, seed + 1, cell_width=cw, x_max=x_max)
    out = Outcome()
    out.add_series("Monte Carlo P(M>x) / ((1/m) integrated tail)", math.inf,
                   RatioSeries.from_observed(xs, tc.observed, tc.predicted, 1.0, tol=cfg.tol, k=cfg.k))
    out.check("Monte Carlo tail within 95% CI of prediction at the final reliable x",
              *_tail_check_result(tc))
    if inc.has_density:
        lc, C = compound_local_check(L, xs, w, tol=loc_tol)
    else:
        from htl.randomwalk import supremum_via_geometric

        C = supremum_via_geometric(L, window=w, xs=xs)
        est, hw = C.window_ci(xs, w.T)
        pred = w.T * np.asarray(inc.tail(xs), dtype=np.float64) / inc.m
        from htl.randomwalk import TailCheck

        lc = TailCheck(xs, est, pred, est / pred, hw / pred, (est > 0) & (hw <= 0.5 * loc_tol * est))
    out.add_series("geometric compound pi(x+D) / ((T/m) tail)", w.T,
                   RatioSeries.from_observed(xs, lc.observed, lc.predicted, 1.0, tol=cfg.tol, k=cfg.k))
    j = lc.final_index
    out.check(f"compound local ratio within {loc_tol:g} of 1 at the final reliable x",
              j >= 0 and abs(lc.ratio[j] - 1) <= loc_tol,
              f"final reliable x {lc.final_x:g}, ratio {lc.ratio[j]:.4f}" if j >= 0 else "no reliable x")
    agree, worst, n_cells = cell_agreement(R, C)
    out.check("Monte Carlo and compound agree on cells with >= 50 hits", agree,
              f"{n_cells} cells, worst |diff|/halfwidth {worst:.3f}")
    out.verdicts.append({"p_hat": L.p_hat, "p_hat_2B": L.p_hat_2B, "ladder_ci": L.ci_halfwidth,
                         "barrier": B, "ladder_barrier": B_ladder, "n_paths": n,
                         "final_reliable_x_tail": tc.final_x, "final_reliable_x_local": lc.final_x})
    out.truncation.update({"mc_overflow": R.pi_hat.overflow, "compound_overflow": C.pi_hat.overflow})
    return out


def _tail_check_result(tc) -> tuple[bool, str]:
    i = tc.final_index
    if i < 0:
        return False, "no reliable x"
    return bool(tc.within_ci()[i]), (f"final reliable x {tc.final_x:g}, "
                                     f"ratio {tc.ratio[i]:.4f} +- {tc.halfwidth[i]:.4f}")


def run_ladder(cfg: Config) -> Outcome:
    from htl.randomwalk import estimate_ladder

    inc = _increments(cfg)
    n, B = _mc_settings(cfg, inc)
    cw = inc.lattice_span or cfg.cell_width
    xs = cfg.xs(cw, (2.0, 1000.0, 1.25))
    L = estimate_ladder(inc, n, B, cfg.seed, cell_width=cw, x_max=float(xs.max()) + 10)
    min_hits = cfg.number("params", "min_hits", 1000, positive=True, integer=True)
    tc = L.tail_check(xs, min_hits=min_hits)
    s = RatioSeries.build(xs, tc.ratio, 1.0, cfg.tol, cfg.k, tc.observed, tc.predicted)
    out = Outcome()
    out.add_series("G_hat tail / ((1-p)/(p m) integrated tail)", math.inf, s)
    out.check("ladder tail ratio within CI of 1 at the final reliable x", *_tail_check_result(tc))
    out.check("barrier-doubling flag not raised", not L.biased,
              f"p_hat {L.p_hat:.6f}, with 2B {L.p_hat_2B:.6f}, CI +-{L.ci_halfwidth:.2g}")
    out.verdicts.append({"p_hat": L.p_hat, "p_hat_2B": L.p_hat_2B, "ci_halfwidth": L.ci_halfwidth,
                         "biased": L.biased, "barrier": B, "n_paths": n,
                         "final_reliable_x": tc.final_x})
    return out


def run_rw_density(cfg: Config) -> Outcome:
    from htl.diagnostics import check_sstar
    from htl.randomwalk import estimate_ladder, supremum_density_check

    inc = _increments(cfg)
    if not inc.has_density:
        raise ConfigError("the supremum density check needs increments with a density")
    n, B = _mc_settings(cfg, inc)
    cw = cfg.cell_width
    xs = cfg.xs(cw, (5.0, 200.0, 1.5))
    L = estimate_ladder(inc, n, B, cfg.seed, cell_width=cw, x_max=float(xs.max()) + 10)
    # S* is a property of the law alone and converges slowly; it gets its own range
    s_max = cfg.number("params", "sstar_x_max", 1e5, positive=True)
    sstar = check_sstar(_XiLaw(inc), geometric_schedule(10.0, max(s_max, 10.0), 2.0, 0.05),
                        tol=cfg.tol, k=cfg.k)
    res = supremum_density_check(inc, xs, L, tol=cfg.number("params", "density_tol", 0.1),
                                 k=cfg.k, sstar_verdict=sstar.verdict)
    out = Outcome()
    out.add_series("compound ladder density / (tail / m)", None, res.series)
    out.verdicts.append(_series_summary("supremum density", None, res.series))
    out.verdicts.append(sstar.to_dict())
    out.truncation["geometric_remainder"] = res.truncation
    _ratio_assert(out, "density ratio", res.series, 1.0, cfg.number("params", "density_tol", 0.1))
    return out


class _XiLaw:
    """Tail-only view of the increment law for the S* check."""

    def __init__(self, inc):
        self.inc = inc

    def tail(self, x):
        return self.inc.tail(x)

    def positive_mean(self):
        return self.inc.positive_mean()


@dataclass(frozen=True)
class Experiment:
    name: str
    citation: str
    runner: Callable[[Config], Outcome]
    stochastic: bool = False


EXPERIMENTS: dict[str, Experiment] = {e.name: e for e in [
    Experiment("long-tailed", "long-tailed windows: F(x+t+D) ~ F(x+D) uniformly in t in [0,1]",
               run_long_tailed),
    Experiment("delta-subexp", "Delta-subexponentiality: (F*F)(x+D) ~ 2F(x+D)", run_delta_subexp),
    Experiment("density-subexp", "subexponential densities: f*f(x) ~ 2f(x)", run_density_subexp),
    Experiment("sstar", "class S*: int_0^x F(x-y)F(y)dy ~ 2 E(xi+) tail(x)", run_sstar),
    Experiment("suff-ratio", "sufficient condition: window ratios bounded below", run_suff_ratio),
    Experiment("suff-concave", "sufficient condition for Weibull-type windows: -log F(x+D) concave",
               run_suff_concave),
    Experiment("closure", "closure: convolution additivity and S_D => S_nD", run_closure),
    Experiment("stopped-sum", "randomly stopped sums: S_tau(x+D) ~ E tau F(x+D)",
               run_stopped_sum),
    Experiment("kesten", "Kesten majorant: F^n(x+D) <= V (1+eps)^n F(x+D)", run_kesten),
    Experiment("overshoot", "overshoot corollary: P(chi(x) in y+D) ~ E tau G(x+y+D)", run_overshoot),
    Experiment("renewal", "transient renewal measure: U(x+D) ~ G(x+D) / (1-theta)^2", run_renewal),
    Experiment("krt", "key renewal theorem for defective renewal equations, regimes (i)-(iii)",
               run_krt),
    Experiment("compound-poisson", "compound Poisson laws: G(x+D) ~ mu F(x+D)", run_compound_poisson),
    Experiment("infdiv", "infinitely divisible laws: F(x+D) ~ nu(x+D)", run_infdiv),
    Experiment("branching", "subcritical branching: A(t) - A(t+T) ~ F(t+D) / (1-A)", run_branching),
    Experiment("random-walk", "random walk supremum: tail (1/m) F^I(x), local (T/m) F(x)",
               run_random_walk, True),
    Experiment("ladder", "ladder heights: p G(x, inf) ~ (1-p)/m F^I(x)", run_ladder, True),
    Experiment("rw-density", "supremum density ~ tail(x)/m for S* increments", run_rw_density, True),
]}


# --------------------------------------------------------------------------
# output


def config_hash(data: dict) -> str:
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _num(v):
    """JSON-safe number: non-finite floats become strings."""
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, dict):
        return {str(k): _num(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_num(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_num(x) for x in v.tolist()]
    return v


def _fmt(v) -> str:
    v = float(v)
    return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")


def write_outputs(out_dir: Path, exp: Experiment, cfg_data: dict, h: str, outcome: Outcome | None,
                  status: str, code: int, errors: list[str] | None = None,
                  tolerances: dict | None = None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    if outcome is not None:
        with open(out_dir / "ratios.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "observed", "predicted", "ratio", "config_hash", "series", "T"])
            for label, T, s in outcome.series:
                obs = s.observed if s.observed is not None else np.full(len(s), np.nan)
                pred = s.predicted if s.predicted is not None else np.full(len(s), np.nan)
                for x, o, p, r in zip(s.xs, obs, pred, s.ratios):
                    w.writerow([_fmt(x), _fmt(o), _fmt(p), _fmt(r), h, label,
                                "" if T is None else _fmt(T)])
        with open(out_dir / "plotdata.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "log10_x", "ratio", "config_hash", "series"])
            for label, T, s in outcome.series:
                for x, r in zip(s.xs, s.ratios):
                    lx = math.log10(x) if x > 0 else math.nan
                    w.writerow([_fmt(x), _fmt(lx), _fmt(r), h, label])
            if "mean_curve" in outcome.extra:
                ts, curve = outcome.extra["mean_curve"]
                for t, a in zip(ts, curve):
                    w.writerow([_fmt(t), _fmt(math.log10(t) if t > 0 else math.nan), _fmt(a), h,
                                "mean curve A(t)"])
    doc = {
        "experiment": exp.name if exp else cfg_data.get("experiment"),
        "citation": exp.citation if exp else None,
        "config_hash": h,
        "seed": cfg_data.get("seed"),
        "status": status,
        "exit_code": code,
        "tolerances": tolerances or {},
        "errors": errors or [],
    }
    if outcome is not None:
        doc.update({
            "verdicts": outcome.verdicts,
            "series": [_series_summary(lbl, T, s) for lbl, T, s in outcome.series],
            "assertions": [{"name": n, "passed": ok, "detail": d} for n, ok, d in outcome.assertions],
            "truncation": outcome.truncation,
        })
    with open(out_dir / "verdict.json", "w", encoding="utf-8") as fh:
        json.dump(_num(doc), fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


# --------------------------------------------------------------------------
# commands


def load_config(path: str | Path, seed: int | None = None, tol: float | None = None) -> Config:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    if seed is not None:
        data["seed"] = seed
    if tol is not None:
        data.setdefault("tolerance", {})
        if not isinstance(data["tolerance"], dict):
            raise ConfigError("[tolerance] must be a table")
        data["tolerance"]["tol"] = tol
    return Config(data, str(path))


def run(config_path: str | Path, out_dir: str | Path | None = None, seed: int | None = None,
        tol: float | None = None) -> int:
    """Run one experiment; returns the exit status."""
    data: dict = {}
    exp = None
    try:
        cfg = load_config(config_path, seed, tol)
        data = cfg.data
        exp = EXPERIMENTS[cfg.experiment]
        if exp.stochastic and cfg.seed is None:
            raise ConfigError(f"experiment {exp.name!r} is stochastic and needs a seed")
        cfg.tol, cfg.k  # validate early
        target = Path(out_dir or cfg.section("output").get("dir") or f"htl-out/{exp.name}")
        h = config_hash(data)
        outcome = exp.runner(cfg)
    except (ConfigError, ParameterError) as e:
        print(f"config error: {e}", file=sys.stderr)
        if out_dir is not None:
            write_outputs(Path(out_dir), exp, data, config_hash(data), None, "config_error",
                          EXIT_CONFIG, [str(e)])
        return EXIT_CONFIG
    code = EXIT_OK if outcome.passed else EXIT_ASSERT
    write_outputs(target, exp, data, h, outcome, "pass" if code == EXIT_OK else "fail", code,
                  tolerances={"tol": cfg.tol, "k": cfg.k})
    for name, ok, detail in outcome.assertions:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
    print(f"outputs in {target}")
    return code


def list_experiments(pattern: str | None = None) -> list[tuple[str, str]]:
    rows = [(e.name, e.citation) for e in EXPERIMENTS.values()]
    if pattern:
        p = pattern.lower()
        rows = [r for r in rows if p in r[0].lower() or p in r[1].lower()]
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="htl", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a TOML config")
    r.add_argument("config")
    r.add_argument("--out-dir", help="output directory (overrides [output] dir)")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--tol", type=float, help="override [tolerance] tol")
    ls = sub.add_parser("list", help="list experiments with the result each one checks")
    ls.add_argument("--filter", dest="pattern", help="substring of the name or description")
    args = ap.parse_args(argv)
    if args.command == "list":
        for name, cite in list_experiments(args.pattern):
            print(f"{name:18s} {cite}")
        return EXIT_OK
    if args.seed is not None and args.seed < 0:
        print("config error: --seed must be nonnegative", file=sys.stderr)
        return EXIT_CONFIG
    if args.tol is not None and not args.tol > 0:
        print("config error: --tol must be > 0", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.config, args.out_dir, args.seed, args.tol)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
