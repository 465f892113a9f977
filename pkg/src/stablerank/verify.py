"""Retrospective rank verification for attribution estimates.

Sorts the estimates, then walks down the ranking performing one-sided Welch
tests between consecutive entries at level alpha/2, stopping at the first
non-rejection. The number K of rejections bounds the family-wise error rate
of the top-K ordering at alpha without any multiplicity correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DegenerateVariance
from .sampling import MeanVarEstimate

SQRT2 = math.sqrt(2.0)


def _as_triplet(entry):
    """Normalize an estimate to (mean, variance_of_mean, n)."""
    if isinstance(entry, MeanVarEstimate):
        if entry.n < 2:
            raise DegenerateVariance(f"need n >= 2 draws, got {entry.n}")
        return entry.mean, entry.variance_of_mean, entry.n
    mean, var_mean, n = entry
    return float(mean), float(var_mean), int(n)


def welch_statistic(a, b, cov: float = 0.0, mode: str = "inference") -> tuple[float, float]:
    """Welch T statistic and degrees of freedom for H0: mean_a <= mean_b.

    ``a`` and ``b`` are MeanVarEstimate objects or (mean, variance_of_mean, n)
    triplets; ``cov`` is the covariance of the two *estimates* (0 when their
    samples are independent). In reproducibility mode the standard error is
    inflated by sqrt(2), targeting agreement with an identically-distributed
    rerun rather than with the infinite-sample ranking.

    Degrees of freedom: n - 1 when both sides use the same n, otherwise
    Welch-Satterthwaite on the variances of the means. Zero standard error
    returns T = 0 for a zero gap and +/-inf for a nonzero one.
    """
    if mode not in ("inference", "reproducibility"):
        raise ValueError(f"unknown mode {mode!r}")
    mean_a, var_a, n_a = _as_triplet(a)
    mean_b, var_b, n_b = _as_triplet(b)
    for v in (var_a, var_b):
        if not np.isfinite(v) or v < 0:
            raise DegenerateVariance(f"invalid variance {v}")
    delta = mean_a - mean_b
    s2 = var_a + var_b - 2.0 * cov
    s2 = max(s2, 0.0)  # guard tiny negatives from covariance estimates
    if mode == "reproducibility":
        s2 *= 2.0

    if n_a == n_b:
        df = float(max(n_a - 1, 1))
    else:
        denom = var_a ** 2 / (n_a - 1) + var_b ** 2 / (n_b - 1)
        if denom <= 0:
            df = float(max(min(n_a, n_b) - 1, 1))
        else:
            df = (var_a + var_b) ** 2 / denom

    if s2 == 0.0:
        t = 0.0 if delta == 0.0 else math.copysign(math.inf, delta)
        return t, df
    return delta / math.sqrt(s2), df


@dataclass
class TestOutcome:
    """One step of the sequential procedure: rank k versus rank k+1."""

    k: int
    statistic: float
    df: float
    threshold: float
    rejected: bool
    degenerate: bool = False


@dataclass
class VerifiedRanking:
    """K verified ranks, the full descending order, and the per-step tests."""

    K: int
    order: np.ndarray
    steps: list[TestOutcome] = field(default_factory=list)

    def verified_features(self) -> np.ndarray:
        return self.order[: self.K]


@dataclass
class AttributionSet:
    """Per-feature attribution estimates with their uncertainty.

    Exactly one of ``per_feature`` (independent sampling streams; covariance
    zero) or ``covariance`` (joint estimates sharing ``n_shared`` samples,
    e.g. a bootstrap covariance of a regression fit) must be set. In absolute
    ranking mode features are ordered by |estimate|; variances are unchanged
    and covariances pick up the product of the estimate signs.
    """

    estimates: np.ndarray
    per_feature: list[MeanVarEstimate] | None = None
    covariance: np.ndarray | None = None
    n_shared: int | None = None
    ranking_mode: str = "signed"

    def __post_init__(self):
        self.estimates = np.asarray(self.estimates, dtype=np.float64)
        if (self.per_feature is None) == (self.covariance is None):
            raise ValueError("exactly one of per_feature / covariance must be given")
        if self.covariance is not None:
            self.covariance = np.asarray(self.covariance, dtype=np.float64)
            if self.n_shared is None or self.n_shared < 2:
                raise ValueError("covariance mode requires the shared sample count")
        if self.ranking_mode not in ("signed", "absolute"):
            raise ValueError(f"unknown ranking_mode {self.ranking_mode!r}")

    @property
    def d(self) -> int:
        return self.estimates.shape[0]

    def ranking_values(self) -> np.ndarray:
        if self.ranking_mode == "absolute":
            return np.abs(self.estimates)
        return self.estimates

    def order(self) -> np.ndarray:
        """Feature indices sorted by ranking value descending, ties by index."""
        return np.argsort(-self.ranking_values(), kind="stable")

    def entry(self, j: int) -> tuple[float, float, int]:
        """(ranking value, variance of the estimate, sample count) for feature j."""
        value = float(self.ranking_values()[j])
        if self.per_feature is not None:
            est = self.per_feature[j]
            if est.n < 2:
                raise DegenerateVariance(f"feature {j} has n={est.n} < 2 draws")
            return value, est.variance_of_mean, est.n
        return value, float(self.covariance[j, j]), int(self.n_shared)

    def cov(self, i: int, j: int) -> float:
        """Covariance of the two ranking values (sign-adjusted in absolute mode)."""
        if self.per_feature is not None:
            return 0.0
        c = float(self.covariance[i, j])
        if self.ranking_mode == "absolute":
            c *= float(np.sign(self.estimates[i]) * np.sign(self.estimates[j]) or 1.0)
        return c


def verify_ranks(attrs: AttributionSet, alpha: float, mode: str = "inference") -> VerifiedRanking:
    """Sequentially verify the ranking of ``attrs`` at FWER level ``alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    order = attrs.order()
    steps: list[TestOutcome] = []
    k_verified = 0
    for k in range(1, attrs.d):
        a, b = order[k - 1], order[k]
        t, df = welch_statistic(attrs.entry(a), attrs.entry(b), cov=attrs.cov(a, b), mode=mode)
        threshold = float(stats.t.ppf(1.0 - alpha / 2.0, df))
        rejected = t >= threshold
        steps.append(TestOutcome(k=k, statistic=t, df=df, threshold=threshold,
                                 rejected=rejected, degenerate=math.isinf(t)))
        if not rejected:
            break
        k_verified = k
    return VerifiedRanking(K=k_verified, order=order, steps=steps)
