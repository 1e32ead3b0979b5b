import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln, logsumexp, xlog1py, xlogy

from nmixprev.errors import DegenerateModelError, DomainError, InfeasibleSupportError
from nmixprev.nmixture import (
    MixtureLikelihood,
    ModelParams,
    ReportHistogram,
    binom_log_pmf,
    log_likelihood,
    nmix_log_pmf,
    nmix_pmf,
    nmix_pmf_truncated,
)
from nmixprev.powerlaw import pl_pmf

from oracles import F0_WORKED, F1_WORKED, F2_WORKED, nmix_pmf_direct

WORKED = ModelParams.of(1, 3, 0.5)


# --- histogram ----------------------------------------------------------------

def test_histogram_derived_fields():
    h = ReportHistogram({1: 70, 2: 20, 3: 10})
    assert (h.M, h.R) == (3, 100)
    assert h == ReportHistogram.from_reports([1] * 70 + [2] * 20 + [3] * 10 + [0] * 5)


def test_histogram_drops_empty_bins():
    h = ReportHistogram({1: 4, 7: 0})
    assert h.M == 1 and h.as_dict() == {1: 4}


def test_histogram_rejects_zero_reports():
    with pytest.raises(DomainError):
        ReportHistogram({0: 3, 1: 2})
    with pytest.raises(DomainError):
        ReportHistogram({2: -1})


def test_histogram_is_immutable():
    h = ReportHistogram({1: 3})
    with pytest.raises(ValueError):
        h.counts[0] = 9


# --- binomial -----------------------------------------------------------------

def test_binom_edges():
    assert binom_log_pmf(0, 5, 0.0) == 0.0
    assert binom_log_pmf(3, 3, 1.0) == 0.0
    assert binom_log_pmf(1, 5, 0.0) == -math.inf
    assert binom_log_pmf(2, 3, 1.0) == -math.inf
    assert binom_log_pmf(1, 2, 0.5) == pytest.approx(math.log(0.5), rel=1e-15)


@pytest.mark.parametrize("k,n", [(4, 3), (-1, 3)])
def test_binom_domain(k, n):
    with pytest.raises(DomainError):
        binom_log_pmf(k, n, 0.3)


@given(st.integers(0, 200), st.integers(0, 200), st.floats(0.001, 0.999))
@settings(max_examples=100, deadline=None)
def test_binom_matches_comb(k, extra, p):
    n = k + extra
    direct = math.comb(n, k) * p**k * (1 - p) ** (n - k)
    if direct > 1e-300:
        assert math.exp(binom_log_pmf(k, n, p)) == pytest.approx(direct, rel=1e-10)


# --- pmf ----------------------------------------------------------------------

def test_worked_values():
    assert nmix_pmf(0, WORKED) == pytest.approx(float(F0_WORKED), rel=1e-15)
    assert nmix_pmf(1, WORKED) == pytest.approx(float(F1_WORKED), rel=1e-15)
    expected = F1_WORKED / (1 - F0_WORKED)
    assert expected == Fraction(3, 4)
    assert nmix_pmf_truncated(1, WORKED) == pytest.approx(float(expected), rel=1e-14)


def test_single_target():
    params = ModelParams.of(1.7, 1, 0.3)
    assert nmix_pmf(0, params) == pytest.approx(0.7, rel=1e-15)
    assert nmix_pmf(1, params) == pytest.approx(0.3, rel=1e-15)


def test_full_reporting_is_power_law():
    params = ModelParams.of(2.5, 50, 1.0)
    assert nmix_pmf(0, params) == 0.0
    k = np.arange(1, 51)
    np.testing.assert_allclose(nmix_pmf(k, params), pl_pmf(k, params.pl), rtol=1e-13)
    np.testing.assert_allclose(nmix_pmf_truncated(k, params), pl_pmf(k, params.pl), rtol=1e-13)


def test_no_reporting():
    params = ModelParams.of(2.5, 50, 0.0)
    assert nmix_pmf(0, params) == 1.0
    assert nmix_pmf(3, params) == 0.0
    with pytest.raises(DegenerateModelError):
        nmix_pmf_truncated(1, params)


@pytest.mark.parametrize("k", [-1, 4])
def test_pmf_domain(k):
    with pytest.raises(DomainError):
        nmix_pmf(k, WORKED)


def test_truncated_domain():
    with pytest.raises(DomainError):
        nmix_pmf_truncated(0, WORKED)


def test_model_params_validation():
    with pytest.raises(DomainError):
        ModelParams.of(1.0, 10, 1.5)
    with pytest.raises(DomainError):
        ModelParams.of(1.0, 10, -0.1)


@pytest.mark.parametrize(
    "s,p,n_max",
    list(itertools.product([0.5, 1.5, 2.5], [0.01, 0.1, 0.5, 1.0], [1, 5, 100, 2000])),
)
def test_normalization(s, p, n_max):
    params = ModelParams.of(s, n_max, p)
    probs = nmix_pmf(np.arange(0, n_max + 1), params)
    assert abs(math.fsum(probs) - 1.0) <= 1e-9


def test_truncated_sums_to_one():
    params = ModelParams.of(1.2, 300, 0.07)
    assert math.fsum(nmix_pmf_truncated(np.arange(1, 301), params)) == pytest.approx(1.0, abs=1e-10)


@given(
    st.sampled_from([0.0, 0.3, 1.0, 2.5, 4.0]),
    st.integers(1, 10),
    st.floats(0.0, 1.0),
)
@settings(max_examples=80, deadline=None)
def test_matches_direct_enumeration(s, n_max, p):
    params = ModelParams.of(s, n_max, p)
    for k in range(n_max + 1):
        assert nmix_pmf(k, params) == pytest.approx(nmix_pmf_direct(k, s, n_max, p), abs=1e-12)


@given(st.floats(0.1, 4.0), st.integers(2, 60), st.floats(0.01, 0.99))
@settings(max_examples=50, deadline=None)
def test_truncation_raises_mass(s, n_max, p):
    params = ModelParams.of(s, n_max, p)
    k = np.arange(1, n_max + 1)
    assert np.all(nmix_pmf_truncated(k, params) >= nmix_pmf(k, params))


def test_log_pmf_consistent():
    params = ModelParams.of(2.0, 500, 0.02)
    k = np.arange(0, 40)
    np.testing.assert_allclose(np.exp(nmix_log_pmf(k, params)), nmix_pmf(k, params), rtol=1e-13)


# --- likelihood ---------------------------------------------------------------

def test_likelihood_degenerate_support():
    h = ReportHistogram({1: 5})
    params = ModelParams.of(1.0, 1, 0.5)
    assert log_likelihood(h, params, truncated=True) == 0.0
    assert log_likelihood(h, params, truncated=False) == pytest.approx(5 * math.log(0.5), rel=1e-15)


def test_likelihood_worked():
    h = ReportHistogram({1: 2, 2: 1})
    f1 = F1_WORKED / (1 - F0_WORKED)
    f2 = F2_WORKED / (1 - F0_WORKED)
    expected = 2 * math.log(f1) + math.log(f2)
    assert log_likelihood(h, WORKED) == pytest.approx(expected, rel=1e-14)


def test_likelihood_infeasible_support():
    with pytest.raises(InfeasibleSupportError):
        log_likelihood(ReportHistogram({5: 1}), ModelParams.of(1.0, 4, 0.5))


def test_likelihood_zero_probability_bin():
    h = ReportHistogram({1: 3, 2: 1})
    assert log_likelihood(h, ModelParams.of(1.0, 5, 0.0), truncated=False) == -math.inf


@given(st.floats(0.1, 4.0), st.floats(0.005, 1.0))
@settings(max_examples=40, deadline=None)
def test_truncated_minus_untruncated(s, p):
    h = ReportHistogram({1: 40, 2: 9, 3: 4, 5: 2, 11: 1})
    params = ModelParams.of(s, 400, p)
    f0 = nmix_pmf(0, params)
    lt = log_likelihood(h, params, truncated=True)
    lu = log_likelihood(h, params, truncated=False)
    assert lt == pytest.approx(lu - h.R * math.log1p(-f0), rel=1e-10, abs=1e-9)


def _full_sum_loglik(hist, s, n_max, p):
    """Dense reference: every (k, n) term, no truncation of the n range."""
    n = np.arange(1, n_max + 1, dtype=float)
    log_g = -s * np.log(n)
    log_g -= logsumexp(log_g)
    total = 0.0
    for k, count in hist.as_dict().items():
        terms = (
            gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1) + xlogy(k, p) + xlog1py(n - k, -p)
        )
        terms = np.where(n >= k, terms + log_g, -np.inf)
        total += count * logsumexp(terms)
    log_f0 = logsumexp(log_g + n * math.log1p(-p))
    return total - hist.R * math.log(-math.expm1(log_f0))


@pytest.mark.parametrize("s,p", [(2.5, 0.1), (1.2, 0.01), (0.3, 0.001), (3.5, 0.6)])
def test_kernel_matches_dense_sum(s, p):
    rng = np.random.default_rng(5)
    values = np.unique(rng.integers(1, 60, 25))
    hist = ReportHistogram({int(v): int(c) for v, c in zip(values, rng.integers(1, 50, values.size))})
    n_max = 20_000
    kernel = MixtureLikelihood(hist, n_max)
    assert kernel(s, p) == pytest.approx(_full_sum_loglik(hist, s, n_max, p), rel=1e-11)


def test_kernel_counts_evaluations():
    kernel = MixtureLikelihood(ReportHistogram({1: 3, 2: 1}), 10)
    kernel(1.0, 0.5)
    kernel(1.0, 0.4)
    assert kernel.n_evaluations == 2
