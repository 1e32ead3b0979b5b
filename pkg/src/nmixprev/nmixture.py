"""Power-law / Binomial N-mixture for per-offender report counts.

An offender with ``n`` targets (``n ~ PL(s, n_max)``) receives
``k ~ Binomial(n, p)`` reports. Offenders with ``k = 0`` are never seen, so
observed data follow the zero-truncated law ``f(k) / (1 - f(0))``.

All mixture sums are taken in log space; with ``n_max`` in the tens of
thousands and small ``p`` individual terms underflow double precision.
"""

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .errors import DegenerateModelError, DomainError, InfeasibleSupportError
from .powerlaw import PowerLawParams, pl_log_normalizer

# 1 - f(0) at or below this is treated as "nobody reports"
DEGENERACY_TOL = 1e-12

# log-space margin below the row maximum at which tail terms are dropped
_TAIL_MARGIN = 40.0

# above this many table cells log-binomial coefficients are rebuilt per call
_TABLE_BUDGET = 12_000_000


@dataclass(frozen=True)
class ModelParams:
    """Full N-mixture parameterisation: power law ``pl`` and reporting rate ``p``."""

    pl: PowerLawParams
    p: float

    def __post_init__(self):
        p = float(self.p)
        if not 0.0 <= p <= 1.0:
            raise DomainError(f"reporting rate p must lie in [0, 1], got {self.p!r}")
        object.__setattr__(self, "p", p)

    @classmethod
    def of(cls, s, n_max, p):
        return cls(PowerLawParams(s, n_max), p)

    @property
    def s(self):
        return self.pl.s

    @property
    def n_max(self):
        return self.pl.n_max


class ReportHistogram:
    """Observed counts ``k_i``: number of offenders reported exactly ``i`` times.

    Bins with ``k_i = 0`` carry no information and are dropped. ``R`` (distinct
    reported offenders) and ``M`` (largest observed report count) are derived.
    """

    __slots__ = ("values", "counts")

    def __init__(self, counts: Mapping[int, int]):
        pairs = []
        for i, k in counts.items():
            if int(i) != i or int(k) != k:
                raise DomainError("histogram keys and counts must be integers")
            i, k = int(i), int(k)
            if i < 1:
                raise DomainError(f"report value {i} < 1; observed data is zero-truncated")
            if k < 0:
                raise DomainError(f"negative offender count {k} for value {i}")
            if k > 0:
                pairs.append((i, k))
        pairs.sort()
        self.values = np.array([i for i, _ in pairs], dtype=np.int64)
        self.counts = np.array([k for _, k in pairs], dtype=np.int64)
        self.values.flags.writeable = False
        self.counts.flags.writeable = False

    @classmethod
    def from_reports(cls, reports):
        """Build from per-offender report counts; zeros (unobserved) are ignored."""
        reports = np.asarray(reports, dtype=np.int64)
        if np.any(reports < 0):
            raise DomainError("report counts must be >= 0")
        reports = reports[reports > 0]
        if reports.size == 0:
            return cls({})
        values, counts = np.unique(reports, return_counts=True)
        return cls(dict(zip(values.tolist(), counts.tolist())))

    @property
    def R(self) -> int:
        return int(self.counts.sum())

    @property
    def M(self) -> int:
        return int(self.values[-1]) if self.values.size else 0

    def as_dict(self) -> dict:
        return dict(zip(self.values.tolist(), self.counts.tolist()))

    def __len__(self):
        return int(self.values.size)

    def __eq__(self, other):
        if not isinstance(other, ReportHistogram):
            return NotImplemented
        return np.array_equal(self.values, other.values) and np.array_equal(
            self.counts, other.counts
        )

    def __hash__(self):
        return hash((self.values.tobytes(), self.counts.tobytes()))

    def __repr__(self):
        return f"ReportHistogram(R={self.R}, M={self.M}, bins={len(self)})"


def _lse(x, axis=None):
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis) if axis is not None else float(out.ravel()[0])


def binom_log_pmf(k: int, n: int, p: float) -> float:
    """log Binomial(k; n, p), exact at p = 0 and p = 1."""
    if int(k) != k or int(n) != n:
        raise DomainError("k and n must be integers")
    if not 0 <= k <= n:
        raise DomainError(f"need 0 <= k <= n, got k={k}, n={n}")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p}")
    coef = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    return float(coef + xlogy(k, p) + xlog1py(n - k, -p))


def _log_zero_parts(log_w, n, p):
    """(log f(0), log(1 - f(0))) before subtracting the normaliser.

    ``1 - f(0)`` is summed as ``sum g(n) (1 - (1-p)^n)`` so it stays accurate
    when ``p`` is tiny and ``f(0)`` is close to 1.
    """
    if p == 0.0:
        return _lse(log_w), -np.inf
    if p == 1.0:
        return -np.inf, _lse(log_w)
    n_log_q = n * np.log1p(-p)
    with np.errstate(divide="ignore"):
        log_hit = np.log(-np.expm1(n_log_q))
    return _lse(log_w + n_log_q), _lse(log_w + log_hit)


class MixtureLikelihood:
    """Observed-data log-likelihood of one histogram at a fixed ``n_max``.

    Log-binomial coefficients for the observed report values are tabulated
    once per instance, so repeated evaluations over ``(s, p)`` only pay for
    the exponentials. Instances are cheap to build and are not shared between
    fits.
    """

    def __init__(self, hist: ReportHistogram, n_max: int):
        n_max = int(n_max)
        if n_max < 1:
            raise DomainError("n_max must be >= 1")
        if hist.M > n_max:
            raise InfeasibleSupportError(
                f"observed {hist.M} reports for one offender but n_max = {n_max}"
            )
        self.n_max = n_max
        self.values = np.asarray(hist.values, dtype=np.int64)
        self.weights = np.asarray(hist.counts, dtype=float)
        self.R = hist.R
        self.n = np.arange(1, n_max + 1, dtype=float)
        self.log_n = np.log(self.n)
        self._lgamma = gammaln(np.arange(n_max + 2, dtype=float))
        self._k = self.values.astype(float)[:, None]
        self._table = np.empty((self.values.size, 0))
        self._block_list = self._blocks()
        self.n_evaluations = 0

    def _log_coef(self, k, cols):
        n = np.arange(1, cols + 1)[None, :]
        k = k[:, None]
        nk = n - k
        lg = self._lgamma
        out = lg[n + 1] - lg[k + 1] - lg[np.maximum(nk, 0) + 1]
        out[nk < 0] = -np.inf
        return out

    def _coef(self, rows, cols):
        have = self._table.shape[1]
        if cols > have:
            grow = min(self.n_max, max(cols, 2 * have))
            if self.values.size * grow > _TABLE_BUDGET:
                return self._log_coef(self.values[rows], cols)
            self._table = self._log_coef(self.values, grow)
        return self._table[rows, :cols]

    @staticmethod
    def _reach(k):
        # the Binomial-in-n term for row k is spent well before n = reach(k) / p
        return k + 12.0 * np.sqrt(k) + 60.0

    def _blocks(self):
        """Split rows into contiguous blocks whose reach differs by < 1.5x."""
        blocks, start = [], 0
        for j in range(1, self.values.size + 1):
            if j == self.values.size or self._reach(self.values[j]) > 1.5 * self._reach(
                self.values[start]
            ):
                blocks.append((slice(start, j), self._reach(float(self.values[j - 1]))))
                start = j
        return blocks

    def components(self, s, p):
        """Return ``(log f(values), log f(0), log(1 - f(0)))`` at ``(s, p)``."""
        self.n_evaluations += 1
        # n^(-s) <= 1 for s >= 0, so the normaliser is safe in linear space
        w = np.exp(-s * self.log_n)
        log_z = np.log(w.sum())
        log_f0, log_hit = self._zero_parts(w, p)
        if self.values.size == 0:
            return np.empty(0), log_f0 - log_z, log_hit - log_z
        if p == 0.0:
            log_f = np.full(self.values.size, -np.inf)
        elif p == 1.0:
            log_f = -s * self.log_n[self.values - 1]
        else:
            log_f = np.empty(self.values.size)
            for rows, reach in self._block_list:
                log_f[rows] = self._block_lse(rows, reach, s, p)
            log_f += self.values * np.log(p)
        return log_f - log_z, log_f0 - log_z, log_hit - log_z

    def _block_lse(self, rows, reach, s, p):
        cols = int(min(self.n_max, np.ceil(reach / p)))
        terms = self._row_terms(rows, s, p, cols)
        out = _lse(terms, axis=1)
        if cols < self.n_max and not self._tail_negligible(
            self.values[rows], terms[:, -1], out, p, cols
        ):
            out = _lse(self._row_terms(rows, s, p, self.n_max), axis=1)
        return out

    def _zero_parts(self, w, p):
        # beyond n * p > 45 the factor (1-p)^n is below e^-45: 1 - (1-p)^n == 1
        if p == 0.0:
            return np.log(w.sum()), -np.inf
        if p == 1.0:
            return -np.inf, np.log(w.sum())
        cols = int(min(self.n_max, np.ceil(45.0 / p)))
        n_log_q = self.n[:cols] * np.log1p(-p)
        head = w[:cols]
        f0 = np.dot(head, np.exp(n_log_q))
        hit = np.dot(head, -np.expm1(n_log_q)) + w[cols:].sum()
        with np.errstate(divide="ignore"):
            return np.log(f0), np.log(hit)

    def _row_terms(self, rows, s, p, cols):
        log_w = -s * self.log_n[:cols]
        return self._coef(rows, cols) + (self.n[:cols] - self._k[rows]) * np.log1p(-p) + log_w

    @staticmethod
    def _tail_negligible(k, last, rows, p, cols):
        # term ratio t(n+1)/t(n) <= (n+1)/(n+1-k) (1-p) for s >= 0, decreasing in n
        k = k.astype(float)
        ratio = (cols + 1.0) / (cols + 1.0 - k) * (1.0 - p)
        if np.any(ratio >= 1.0):
            return False
        bound = last + np.log(ratio) - np.log1p(-ratio)
        return bool(np.all(bound < rows - _TAIL_MARGIN))

    def __call__(self, s, p, truncated=True):
        log_f, _, log_hit = self.components(s, p)
        if self.values.size == 0:
            return 0.0
        ll = float(np.dot(self.weights, log_f))
        if truncated:
            ll -= self.R * log_hit
        return ll


def _check_k(k, params, lo):
    k = np.asarray(k)
    if k.dtype.kind not in "iu":
        if not np.all(np.equal(np.mod(k, 1), 0)):
            raise DomainError("report counts are integer valued")
        k = k.astype(np.int64)
    if np.any(k < lo) or np.any(k > params.n_max):
        raise DomainError(f"k outside [{lo}, {params.n_max}]")
    return k


def _nmix_log_pmf_array(k, params):
    n_max, s, p = params.n_max, params.s, params.p
    n = np.arange(1, n_max + 1, dtype=float)
    log_w = -s * np.log(n)
    log_z = pl_log_normalizer(params.pl)
    out = np.empty(k.shape, dtype=float)
    flat_k, flat_out = k.ravel(), out.ravel()
    zero = flat_k == 0
    if zero.any():
        if p == 0.0:
            flat_out[zero] = 0.0
        elif p == 1.0:
            flat_out[zero] = -np.inf
        else:
            flat_out[zero] = min(_log_zero_parts(log_w, n, p)[0] - log_z, 0.0)
    pos = np.flatnonzero(~zero)
    if pos.size == 0:
        return out
    if p == 0.0:
        flat_out[pos] = -np.inf
        return out
    if p == 1.0:
        flat_out[pos] = log_w[flat_k[pos] - 1] - log_z
        return out
    lg = gammaln(np.arange(n_max + 2, dtype=float))
    log_q = np.log1p(-p)
    chunk = max(1, 2_000_000 // n_max)
    for start in range(0, pos.size, chunk):
        idx = pos[start:start + chunk]
        kk = flat_k[idx][:, None]
        nn = np.arange(1, n_max + 1)[None, :]
        nk = nn - kk
        terms = lg[nn + 1] - lg[kk + 1] - lg[np.maximum(nk, 0) + 1]
        terms = terms + np.maximum(nk, 0) * log_q + log_w
        terms[nk < 0] = -np.inf
        flat_out[idx] = flat_k[idx] * np.log(p) + _lse(terms, axis=1) - log_z
    return out


def nmix_log_pmf(k, params: ModelParams):
    """log f(k; s, n_max, p) for scalar or array ``k`` in [0, n_max]."""
    k = _check_k(k, params, 0)
    out = _nmix_log_pmf_array(np.atleast_1d(k), params)
    return float(out[0]) if k.ndim == 0 else out


def nmix_pmf(k, params: ModelParams):
    """f(k) = sum_{n=max(k,1)}^{n_max} Binomial(k; n, p) PL(n; s, n_max)."""
    out = np.exp(nmix_log_pmf(k, params))
    return float(out) if np.ndim(out) == 0 else out


def log_prob_reported(params: ModelParams) -> float:
    """log(1 - f(0)), accurate for small ``p``."""
    n = np.arange(1, params.n_max + 1, dtype=float)
    log_w = -params.s * np.log(n)
    return float(_log_zero_parts(log_w, n, params.p)[1] - pl_log_normalizer(params.pl))


def _checked_log_reported(params):
    log_hit = log_prob_reported(params)
    if np.exp(log_hit) <= DEGENERACY_TOL:
        raise DegenerateModelError(
            f"P(K = 0) is numerically 1 at p = {params.p}; truncated model undefined"
        )
    return log_hit


def nmix_log_pmf_truncated(k, params: ModelParams):
    k = _check_k(k, params, 1)
    log_hit = _checked_log_reported(params)
    out = _nmix_log_pmf_array(np.atleast_1d(k), params) - log_hit
    return float(out[0]) if k.ndim == 0 else out


def nmix_pmf_truncated(k, params: ModelParams):
    """f(k | k > 0) = f(k) / (1 - f(0)) for k in [1, n_max]."""
    out = np.exp(nmix_log_pmf_truncated(k, params))
    return float(out) if np.ndim(out) == 0 else out


def log_likelihood(hist: ReportHistogram, params: ModelParams, truncated: bool = True) -> float:
    """sum_i k_i log f(i | i > 0), or sum_i k_i log f(i) when ``truncated`` is False.

    Returns -inf (not an error) when an observed bin has zero probability.
    """
    kernel = MixtureLikelihood(hist, params.n_max)
    if truncated:
        _checked_log_reported(params)
    return kernel(params.s, params.p, truncated=truncated)
