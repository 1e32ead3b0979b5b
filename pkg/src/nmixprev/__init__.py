"""Prevalence of unreported offenders from report-count histograms.

A power-law / Binomial N-mixture is fitted by maximum likelihood to the
zero-truncated histogram of reports per offender; the fit yields the share of
offenders never reported and estimates of total offenders and targets.
"""

from .errors import (
    DegenerateModelError,
    DomainError,
    EmptyDataError,
    InfeasibleSupportError,
    InsufficientDataError,
    NMixError,
    NonConvergenceError,
    ParseError,
    UnreliableBootstrapWarning,
)
from .genprocess import (
    CrpConfig,
    StudyRow,
    SyntheticTruth,
    generate_model_truth,
    run_study,
    simulate_attachment,
    simulate_reports,
)
from .mle import (
    BootstrapResult,
    FitConfig,
    FitResult,
    bootstrap,
    default_n_max_grid,
    fit,
    profile_n_max,
    simulate_conditioned,
)
from .nmixture import (
    MixtureLikelihood,
    ModelParams,
    ReportHistogram,
    binom_log_pmf,
    log_likelihood,
    nmix_log_pmf,
    nmix_pmf,
    nmix_pmf_truncated,
)
from .powerlaw import (
    LogLogFit,
    PowerLawParams,
    loglog_slope,
    pl_log_normalizer,
    pl_log_pmf,
    pl_mean,
    pl_pmf,
    pl_sample,
)
from .prevalence import (
    PrevalenceEstimate,
    estimate_offenders,
    estimate_prevalence,
    estimate_targets,
    p_never_reported,
)

__version__ = "0.1.0"
