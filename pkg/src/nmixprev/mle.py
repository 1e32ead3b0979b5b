"""Maximum-likelihood fitting of (s, p, n_max) and parametric bootstrap.

``n_max`` is integer valued and enters through a discrete normaliser, so it is
profiled over an explicit grid. At each grid value ``(s, p)`` is maximised by
Nelder-Mead from several starts; the box constraints are removed with a
scaled logistic transform of each coordinate.
"""

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit

from ._random import make_rng
from .errors import (
    EmptyDataError,
    InfeasibleSupportError,
    NMixError,
    NonConvergenceError,
    UnreliableBootstrapWarning,
)
from .nmixture import MixtureLikelihood, ModelParams, ReportHistogram, log_prob_reported
from .powerlaw import pl_cdf_table, pl_sample
from .prevalence import PrevalenceEstimate, estimate_prevalence

# lattice starts are spread over this range of the unbounded coordinates
_LATTICE_HALF_WIDTH = 4.0
_SIMPLEX_STEP = 0.5
_WARM_SIMPLEX_STEP = 0.25


def default_n_max_grid(m: int, ceiling: int = 50_000, factor: float = 2.0) -> tuple:
    """``M, 2M, 4M, ...`` below ``ceiling``, then ``ceiling`` itself."""
    m = max(int(m), 1)
    if m >= ceiling:
        return (m,)
    grid = []
    value = float(m)
    while value < ceiling:
        n = int(round(value))
        if not grid or n > grid[-1]:
            grid.append(n)
        value *= factor
    grid.append(int(ceiling))
    return tuple(grid)


@dataclass(frozen=True)
class FitConfig:
    s_bounds: tuple = (0.05, 6.0)
    p_bounds: tuple = (1e-6, 1.0)
    n_max_grid: Optional[tuple] = None
    n_max_ceiling: int = 50_000
    grid_factor: float = 2.0
    multistart_points: int = 8
    rel_tol: float = 1e-8
    max_iters: int = 1000
    truncated: bool = True

    def __post_init__(self):
        for name in ("s_bounds", "p_bounds"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must satisfy lower < upper")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.s_bounds[0] < 0:
            raise ValueError("s_bounds must be non-negative")
        if self.p_bounds[0] < 0 or self.p_bounds[1] > 1:
            raise ValueError("p_bounds must lie within [0, 1]")
        if self.n_max_grid is not None:
            grid = tuple(sorted({int(n) for n in self.n_max_grid}))
            if not grid or grid[0] < 1:
                raise ValueError("n_max_grid needs positive entries")
            object.__setattr__(self, "n_max_grid", grid)
        if self.multistart_points < 0 or self.max_iters < 1 or self.rel_tol <= 0:
            raise ValueError("invalid optimizer settings")
        if self.grid_factor <= 1:
            raise ValueError("grid_factor must exceed 1")

    def grid_for(self, m: int) -> tuple:
        if self.n_max_grid is None:
            return default_n_max_grid(m, self.n_max_ceiling, self.grid_factor)
        bad = [n for n in self.n_max_grid if n < m]
        if bad:
            raise InfeasibleSupportError(
                f"n_max grid entries {bad} are below the largest observed count {m}"
            )
        return self.n_max_grid

    def to_dict(self):
        return asdict(self)


class ProfilePoint(NamedTuple):
    n_max: int
    s: float
    p: float
    loglik: float
    converged: bool


@dataclass
class FitResult:
    """MLE with diagnostics.

    ``boundary`` is set when the best ``n_max`` is the largest grid entry;
    ``flat`` when the likelihood did not vary across the starts at the chosen
    ``n_max`` (the data carry no information on ``(s, p)``).
    """

    params: ModelParams
    loglik: float
    converged: bool
    profile: list
    n_evaluations: int
    boundary: bool = False
    flat: bool = False
    truncated: bool = True

    @property
    def s(self):
        return self.params.s

    @property
    def p(self):
        return self.params.p

    @property
    def n_max(self):
        return self.params.n_max

    def to_dict(self):
        return {
            "s": self.s,
            "p": self.p,
            "n_max": self.n_max,
            "loglik": self.loglik,
            "converged": self.converged,
            "n_evaluations": self.n_evaluations,
            "boundary": self.boundary,
            "flat": self.flat,
            "truncated": self.truncated,
            "profile": [pt._asdict() for pt in self.profile],
        }


class _Box:
    """Maps unbounded ``u`` to ``(s, p)`` inside the configured box."""

    def __init__(self, s_bounds, p_bounds):
        self.s_lo, self.s_hi = s_bounds
        self.p_lo, self.p_hi = p_bounds

    def params(self, u):
        s = self.s_lo + (self.s_hi - self.s_lo) * expit(u[0])
        p = self.p_lo + (self.p_hi - self.p_lo) * expit(u[1])
        return float(s), float(p)

    def unbounded(self, s, p):
        fs = (s - self.s_lo) / (self.s_hi - self.s_lo)
        fp = (p - self.p_lo) / (self.p_hi - self.p_lo)
        eps = 1e-9
        return np.array([logit(np.clip(fs, eps, 1 - eps)), logit(np.clip(fp, eps, 1 - eps))])

    def snap(self, s, p, frac=1e-6):
        def clamp(v, lo, hi):
            tol = frac * (hi - lo)
            if v - lo <= tol:
                return lo
            if hi - v <= tol:
                return hi
            return v

        return clamp(s, self.s_lo, self.s_hi), clamp(p, self.p_lo, self.p_hi)

    @staticmethod
    def lattice(m):
        if m == 0:
            return []
        n_s = math.ceil(math.sqrt(m))
        n_p = math.ceil(m / n_s)
        w = _LATTICE_HALF_WIDTH
        us = [-w + 2 * w * (i + 0.5) / n_s for i in range(n_s)]
        up = [-w + 2 * w * (j + 0.5) / n_p for j in range(n_p)]
        return [np.array([a, b]) for a in us for b in up][:m]


def _nelder_mead(objective, x0, step, config, f0):
    simplex = np.array([x0, x0 + [step, 0.0], x0 + [0.0, step]])
    xatol = math.sqrt(config.rel_tol)
    fatol = config.rel_tol * (1.0 + abs(f0)) if np.isfinite(f0) else config.rel_tol
    return minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "xatol": xatol,
            "fatol": fatol,
            "maxiter": config.max_iters,
            "maxfev": 4 * config.max_iters,
        },
    )


def _fit_one_n_max(kernel, box, starts, config):
    """Best (s, p) at fixed n_max. Returns (s, p, loglik, converged, start_values)."""

    def objective(u):
        ll = kernel(*box.params(u), truncated=config.truncated)
        return -ll if np.isfinite(ll) else np.inf

    best = None
    start_values = []
    for x0, step in starts:
        f0 = objective(x0)
        start_values.append(-f0)
        res = _nelder_mead(objective, x0, step, config, f0)
        x, fx = res.x, float(res.fun)
        if f0 < fx:  # never return worse than the start
            x, fx = x0, f0
        if best is None or fx < best[1]:
            best = (x, fx, bool(res.success))
    x, fx, ok = best
    s, p = box.params(x)
    ll = -fx
    # the logistic map only reaches a bound asymptotically; try the bound itself
    snapped = box.snap(s, p)
    if snapped != (s, p):
        ll_snap = kernel(*snapped, truncated=config.truncated)
        slack = 1e-12 * (1.0 + abs(ll))
        if ll_snap >= ll - slack and ll_snap >= max(start_values):
            (s, p), ll = snapped, ll_snap
    return s, p, ll, ok, start_values


def fit(hist: ReportHistogram, config: FitConfig = None, starts: Sequence = ()) -> FitResult:
    """Maximise the observed-data likelihood over ``(s, p)`` and the ``n_max`` grid.

    Parameters
    ----------
    hist : ReportHistogram
    config : FitConfig, optional
    starts : sequence of (s, p), optional
        Extra starting points tried before the lattice, e.g. a previous fit.

    Returns
    -------
    FitResult
        The grid entry with the largest maximised likelihood; exact ties go to
        the smaller ``n_max``.

    Raises
    ------
    EmptyDataError
        When no offender was reported.
    NonConvergenceError
        When no optimizer run converged at any ``n_max``.
    """
    config = config or FitConfig()
    if hist.R < 1:
        raise EmptyDataError("histogram has no reported offenders")
    grid = config.grid_for(hist.M)
    box = _Box(config.s_bounds, config.p_bounds)
    runs = [(box.unbounded(s, p), _WARM_SIMPLEX_STEP) for s, p in starts]
    runs += [(u, _SIMPLEX_STEP) for u in box.lattice(config.multistart_points)]
    if not runs:
        raise ValueError("no starting points: set multistart_points or pass starts")

    profile = []
    n_evals = 0
    best = None
    flat = False
    for n_max in grid:
        kernel = MixtureLikelihood(hist, n_max)
        s, p, ll, ok, start_values = _fit_one_n_max(kernel, box, runs, config)
        n_evals += kernel.n_evaluations
        profile.append(ProfilePoint(n_max, s, p, ll, ok))
        if best is None or ll > best.loglik:
            best = profile[-1]
            spread = max(start_values + [ll]) - min(start_values + [ll])
            flat = bool(spread <= config.rel_tol * (1.0 + abs(ll)))

    result = FitResult(
        params=ModelParams.of(best.s, best.n_max, best.p),
        loglik=best.loglik,
        converged=best.converged,
        profile=profile,
        n_evaluations=n_evals,
        boundary=len(grid) > 1 and best.n_max == grid[-1],
        flat=flat,
        truncated=config.truncated,
    )
    if not any(pt.converged for pt in profile):
        raise NonConvergenceError("no optimizer run converged at any n_max", best=result)
    return result


def profile_n_max(hist: ReportHistogram, config: FitConfig = None) -> list:
    """``[(n_max, maximised loglik), ...]`` in grid order."""
    return [(pt.n_max, pt.loglik) for pt in fit(hist, config).profile]


def simulate_conditioned(params: ModelParams, r: int, rng, cdf=None) -> ReportHistogram:
    """Draw offenders from the model until ``r`` of them have been reported.

    Offenders are generated in batches and kept in draw order, so the result
    depends only on the random stream.
    """
    rng = make_rng(rng)
    if r <= 0:
        return ReportHistogram({})
    hit = float(np.exp(log_prob_reported(params)))
    if hit <= 0:
        raise NMixError("model never produces reports")
    if cdf is None:
        cdf = pl_cdf_table(params.pl)
    kept = []
    need = r
    while need > 0:
        batch = min(int(math.ceil(need / hit * 1.1)) + 16, 5_000_000)
        targets = pl_sample(params.pl, rng, batch, cdf=cdf)
        reports = rng.binomial(targets, params.p)
        reports = reports[reports > 0][:need]
        kept.append(reports)
        need -= reports.size
    return ReportHistogram.from_reports(np.concatenate(kept))


@dataclass
class Replicate:
    index: int
    fit: Optional[FitResult] = None
    prevalence: Optional[PrevalenceEstimate] = None
    error: Optional[str] = None

    @property
    def ok(self):
        return self.fit is not None and self.fit.converged and self.prevalence is not None


BOOTSTRAP_QUANTITIES = ("s", "p", "n_max", "p_zero", "o_hat", "t_hat")


@dataclass
class BootstrapResult:
    replicates: list
    intervals: dict
    level: float
    n_failed: int
    seed: int
    warning: Optional[str] = None

    @property
    def B(self):
        return len(self.replicates)

    def values(self, name):
        """Replicate values of one quantity over successful replicates."""
        out = []
        for rep in self.replicates:
            if not rep.ok:
                continue
            src = rep.prevalence if name in ("p_zero", "o_hat", "t_hat") else rep.fit
            out.append(float(getattr(src, name)))
        return np.array(out)

    def to_dict(self, include_replicates=True):
        doc = {
            "B": self.B,
            "level": self.level,
            "seed": self.seed,
            "n_failed": self.n_failed,
            "warning": self.warning,
            "intervals": {k: list(v) for k, v in self.intervals.items()},
        }
        if include_replicates:
            rows = []
            for rep in self.replicates:
                row = {"index": rep.index, "converged": rep.ok, "error": rep.error}
                for name in ("s", "p", "n_max"):
                    row[name] = getattr(rep.fit, name) if rep.fit else None
                for name in ("p_zero", "o_hat", "t_hat"):
                    row[name] = getattr(rep.prevalence, name) if rep.prevalence else None
                rows.append(row)
            doc["replicates"] = rows
        return doc


def _replicate_config(config, m):
    if config.n_max_grid is None:
        return config
    return replace(config, n_max_grid=tuple(n for n in config.n_max_grid if n >= m) or None)


def _run_replicate(args):
    index, r, params, config, seed, cdf = args
    rng = make_rng(seed, index)
    rep = Replicate(index)
    try:
        sim = simulate_conditioned(params, r, rng, cdf=cdf)
        cfg = _replicate_config(config, sim.M)
        rep.fit = fit(sim, cfg, starts=[(params.s, params.p)])
        rep.prevalence = estimate_prevalence(sim, rep.fit)
    except NMixError as exc:
        rep.error = f"{type(exc).__name__}: {exc}"
        best = getattr(exc, "best", None)
        if best is not None:
            rep.fit = best
    except ValueError as exc:
        rep.error = f"{type(exc).__name__}: {exc}"
    return rep


def bootstrap(
    hist: ReportHistogram,
    fitted: FitResult,
    config: FitConfig = None,
    B: int = 200,
    seed: int = 0,
    level: float = 0.95,
    workers: int = 1,
) -> BootstrapResult:
    """Parametric bootstrap conditioned on the observed number of reported offenders.

    Each replicate simulates a histogram with exactly ``hist.R`` reported
    offenders from the fitted model, re-fits it (warm-started at the fitted
    ``(s, p)``) and recomputes the prevalence estimates. Replicate ``i`` uses
    the stream keyed by ``(seed, i)``, so results do not depend on
    ``workers``. Percentile intervals are taken over converged replicates.
    """
    if not fitted.converged:
        raise ValueError("bootstrap requires a converged fit")
    if B < 1:
        raise ValueError("B must be >= 1")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    config = config or FitConfig(truncated=fitted.truncated)
    params = fitted.params
    cdf = pl_cdf_table(params.pl)
    jobs = [(i, hist.R, params, config, seed, cdf) for i in range(B)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            replicates = list(pool.map(_run_replicate, jobs))
    else:
        replicates = [_run_replicate(job) for job in jobs]

    n_failed = sum(not rep.ok for rep in replicates)
    result = BootstrapResult(replicates, {}, level, n_failed, seed)
    alpha = (1.0 - level) / 2.0
    for name in BOOTSTRAP_QUANTITIES:
        vals = result.values(name)
        if vals.size == 0:
            result.intervals[name] = (math.nan, math.nan)
        else:
            lo, hi = np.quantile(vals, [alpha, 1.0 - alpha])
            result.intervals[name] = (float(lo), float(hi))
    if n_failed > 0.2 * B:
        result.warning = f"{n_failed} of {B} replicates failed to converge"
        warnings.warn(result.warning, UnreliableBootstrapWarning, stacklevel=2)
    return result
