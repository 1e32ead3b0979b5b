"""Never-reported share, total offenders and total targets from a fitted model."""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateModelError
from .nmixture import DEGENERACY_TOL, ModelParams, log_prob_reported, nmix_pmf
from .powerlaw import pl_mean


@dataclass(frozen=True)
class PrevalenceEstimate:
    """Point estimates of P(K=0), O and T.

    ``o_hat`` and ``t_hat`` are kept at full precision; rounding is left to
    whatever displays them.
    """

    p_zero: float
    o_hat: float
    t_hat: float
    r: int

    def to_dict(self):
        return asdict(self)


def p_never_reported(params: ModelParams) -> float:
    """P(K = 0) = f(0): share of offenders with no report."""
    return nmix_pmf(0, params)


def estimate_offenders(r: int, params: ModelParams) -> float:
    """R / (1 - f(0))."""
    if r < 0:
        raise ValueError("r must be >= 0")
    log_hit = log_prob_reported(params)
    if np.exp(log_hit) <= DEGENERACY_TOL:
        raise DegenerateModelError("P(K = 0) is numerically 1; cannot scale up R")
    if r == 0:
        return 0.0
    if log_hit == 0.0:
        return float(r)
    # max() guards against the last ulp dropping o_hat below r
    return max(float(r) * float(np.exp(-log_hit)), float(r))


def estimate_targets(o_hat: float, params: ModelParams) -> float:
    """O_hat times the mean number of targets per offender."""
    if o_hat < 0:
        raise ValueError("o_hat must be >= 0")
    return float(o_hat) * pl_mean(params.pl)


def estimate_prevalence(hist, fitted) -> PrevalenceEstimate:
    """Compose the three estimators for a histogram and a fit.

    ``fitted`` may be a ``FitResult`` or bare ``ModelParams``.
    """
    params = getattr(fitted, "params", fitted)
    if getattr(fitted, "converged", True) is False:
        raise ValueError("prevalence requires a converged fit")
    r = hist.R
    o_hat = estimate_offenders(r, params)
    t_hat = max(estimate_targets(o_hat, params), o_hat)
    return PrevalenceEstimate(p_never_reported(params), o_hat, t_hat, r)
