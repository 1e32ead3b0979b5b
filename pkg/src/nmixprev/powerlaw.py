"""Bounded discrete power law on the integers 1..n_max.

Sign convention: the mass function is proportional to ``n ** (-s)`` with
``s >= 0``; larger ``s`` means faster decay. A figure labelled "s = -2.5"
under the opposite convention corresponds to ``s = 2.5`` here.
"""

from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from ._random import make_rng
from .errors import DomainError, InsufficientDataError


@dataclass(frozen=True)
class PowerLawParams:
    """Exponent ``s`` and support bound ``n_max`` of the targets-per-offender law."""

    s: float
    n_max: int

    def __post_init__(self):
        s = float(self.s)
        if not np.isfinite(s) or s < 0:
            raise DomainError(f"exponent s must be finite and >= 0, got {self.s!r}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise DomainError(f"n_max must be an integer >= 1, got {self.n_max!r}")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "n_max", int(self.n_max))

    @property
    def support(self):
        return np.arange(1, self.n_max + 1)


def _log_weights(params):
    return -params.s * np.log(np.arange(1, params.n_max + 1, dtype=float))


def pl_log_normalizer(params: PowerLawParams) -> float:
    """log of sum_{i=1}^{n_max} i^(-s), via log-sum-exp of ``-s log i``."""
    if params.n_max == 1:
        return 0.0
    return float(logsumexp(_log_weights(params)))


def _check_support(n, params):
    n = np.asarray(n)
    if n.dtype.kind not in "iu":
        if not np.all(np.equal(np.mod(n, 1), 0)):
            raise DomainError("power-law support is integer valued")
        n = n.astype(np.int64)
    if np.any(n < 1) or np.any(n > params.n_max):
        raise DomainError(f"n outside support [1, {params.n_max}]")
    return n


def pl_log_pmf(n, params: PowerLawParams):
    """Log mass at ``n`` (scalar or array). Raises DomainError off-support."""
    n = _check_support(n, params)
    out = -params.s * np.log(n.astype(float)) - pl_log_normalizer(params)
    return float(out) if out.ndim == 0 else out


def pl_pmf(n, params: PowerLawParams):
    out = np.exp(pl_log_pmf(n, params))
    return float(out) if np.ndim(out) == 0 else out


def pl_log_pmf_table(params: PowerLawParams) -> np.ndarray:
    """Log mass for the whole support, index ``j`` holding ``n = j + 1``."""
    lw = _log_weights(params)
    return lw - pl_log_normalizer(params)


def pl_mean(params: PowerLawParams) -> float:
    """E[N] = sum n g(n); clamped to [1, n_max] against rounding."""
    if params.n_max == 1:
        return 1.0
    lw = _log_weights(params)
    log_n = np.log(np.arange(1, params.n_max + 1, dtype=float))
    mean = float(np.exp(logsumexp(lw + log_n) - logsumexp(lw)))
    return min(max(mean, 1.0), float(params.n_max))


def pl_cdf_table(params: PowerLawParams) -> np.ndarray:
    cdf = np.cumsum(np.exp(pl_log_pmf_table(params)))
    cdf /= cdf[-1]
    return cdf


def pl_sample(params: PowerLawParams, rng, count: int, cdf=None) -> np.ndarray:
    """Draw ``count`` iid values by inverse-CDF lookup.

    Parameters
    ----------
    params : PowerLawParams
    rng : numpy.random.Generator or int
        Random source; an int is treated as a seed.
    count : int
    cdf : ndarray, optional
        Precomputed ``pl_cdf_table(params)`` to skip the O(n_max) setup when
        sampling repeatedly from the same law.

    Returns
    -------
    ndarray of int64 in [1, n_max]
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    rng = make_rng(rng)
    if count == 0:
        return np.empty(0, dtype=np.int64)
    if params.n_max == 1:
        return np.ones(count, dtype=np.int64)
    if cdf is None:
        cdf = pl_cdf_table(params)
    u = rng.random(count)
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, params.n_max - 1).astype(np.int64) + 1


class LogLogFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float


def loglog_points(histogram: Mapping) -> tuple[np.ndarray, np.ndarray]:
    """Natural-log coordinates of the bins with positive count, sorted by value."""
    if hasattr(histogram, "as_dict"):
        histogram = histogram.as_dict()
    items = sorted((float(v), float(c)) for v, c in histogram.items() if c > 0)
    if any(v <= 0 for v, _ in items):
        raise DomainError("log-log points need positive values")
    values = np.array([v for v, _ in items])
    counts = np.array([c for _, c in items])
    return np.log(values), np.log(counts)


def loglog_slope(histogram: Mapping) -> LogLogFit:
    """OLS of log(count) on log(value) over bins with count > 0.

    The slope is the same in any log base; the intercept is in natural log.
    """
    x, y = loglog_points(histogram)
    if len(x) < 2:
        raise InsufficientDataError("need at least 2 bins with positive count")
    fit = stats.linregress(x, y)
    r2 = 1.0 if np.ptp(y) == 0 else float(fit.rvalue) ** 2
    return LogLogFit(float(fit.slope), float(fit.intercept), r2)
