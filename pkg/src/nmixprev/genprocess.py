"""Generative simulators and the parameter-recovery study harness.

``simulate_attachment`` grows an offender-target pair list: each step adds a
brand-new offender with probability ``q``, otherwise it copies the offender of
a uniformly chosen existing pair (a size-biased pick). ``simulate_reports``
thins target counts into report counts with a Binomial draw per offender.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from ._random import make_rng
from .errors import NMixError
from .mle import FitConfig, fit
from .nmixture import ModelParams, ReportHistogram
from .powerlaw import pl_sample
from .prevalence import estimate_prevalence

STUDY_COLUMNS = (
    "s_true",
    "p_true",
    "replica",
    "s_hat",
    "p_hat",
    "nmax_hat",
    "o_ratio",
    "t_ratio",
    "converged",
)


@dataclass(frozen=True)
class CrpConfig:
    q: float
    steps: int

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise ValueError(f"q must lie in (0, 1], got {self.q}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    """Per-offender target counts of one simulated population."""

    target_counts: np.ndarray
    params: Optional[ModelParams] = None

    @property
    def o_true(self) -> int:
        return int(self.target_counts.size)

    @property
    def t_true(self) -> int:
        return int(self.target_counts.sum())

    def histogram(self) -> dict:
        """{targets per offender: number of offenders}."""
        values, counts = np.unique(self.target_counts, return_counts=True)
        return dict(zip(values.tolist(), counts.tolist()))

    def summary(self) -> dict:
        out = {"o_true": self.o_true, "t_true": self.t_true}
        if self.params is not None:
            out.update(s=self.params.s, n_max=self.params.n_max, p=self.params.p)
        return out


def simulate_attachment(config: CrpConfig, seed) -> SyntheticTruth:
    """Run the pair-list preferential-attachment process for ``config.steps`` steps."""
    rng = make_rng(seed)
    steps = int(config.steps)
    is_new = rng.random(steps) < config.q
    is_new[0] = True  # nothing to copy from on the first step
    pick = rng.random(steps)
    owner = np.empty(steps, dtype=np.int64)
    n_offenders = 0
    for i in range(steps):
        if is_new[i]:
            owner[i] = n_offenders
            n_offenders += 1
        else:
            owner[i] = owner[int(pick[i] * i)]
    return SyntheticTruth(np.bincount(owner, minlength=n_offenders))


def simulate_reports(truth: SyntheticTruth, p: float, seed):
    """Binomial(n, p) reports per offender.

    Returns
    -------
    hist : ReportHistogram
        Offenders with at least one report.
    zero_count : int
        Offenders never reported (removed by truncation).
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    rng = make_rng(seed)
    reports = rng.binomial(truth.target_counts, p)
    zero_count = int(np.count_nonzero(reports == 0))
    return ReportHistogram.from_reports(reports), zero_count


def generate_model_truth(params: ModelParams, o_true: int, seed) -> SyntheticTruth:
    """Draw ``o_true`` target counts iid from the power law in ``params``."""
    if o_true < 1:
        raise ValueError("o_true must be >= 1")
    return SyntheticTruth(pl_sample(params.pl, make_rng(seed), int(o_true)), params)


@dataclass
class StudyRow:
    s_true: float
    p_true: float
    replica: int
    s_hat: float = float("nan")
    p_hat: float = float("nan")
    nmax_hat: float = float("nan")
    o_ratio: float = float("nan")
    t_ratio: float = float("nan")
    converged: bool = False
    error: Optional[str] = None

    def to_dict(self):
        return asdict(self)


def _study_replica(job):
    k, r, s, p, n_max, o_true, seed, config = job
    row = StudyRow(s, p, r)
    try:
        params = ModelParams.of(s, n_max, p)
        truth = generate_model_truth(params, o_true, make_rng(seed, k, r, 0))
        hist, _ = simulate_reports(truth, p, make_rng(seed, k, r, 1))
        result = fit(hist, config)
        prev = estimate_prevalence(hist, result)
        row.s_hat, row.p_hat, row.nmax_hat = result.s, result.p, result.n_max
        row.o_ratio = prev.o_hat / truth.o_true
        row.t_ratio = prev.t_hat / truth.t_true
        row.converged = result.converged
    except (NMixError, ValueError) as exc:
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def run_study(
    settings: Sequence,
    n_max: int,
    o_true: int,
    replicas: int,
    seed: int,
    config: FitConfig = None,
    workers: int = 1,
) -> list:
    """Simulate, fit and score ``replicas`` datasets per ``(s, p)`` setting.

    Replica ``r`` of setting ``k`` draws from streams keyed by ``(seed, k, r)``;
    rows come back ordered by ``(k, r)`` whatever ``workers`` is. Failures are
    recorded on the row (``converged=False``, ``error`` set) and never abort
    the study.
    """
    config = config or FitConfig()
    jobs = [
        (k, r, float(s), float(p), int(n_max), int(o_true), seed, config)
        for k, (s, p) in enumerate(settings)
        for r in range(replicas)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_study_replica, jobs))
    return [_study_replica(job) for job in jobs]
