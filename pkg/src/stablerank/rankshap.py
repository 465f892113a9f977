"""Adaptive top-K Shapley Sampling with a family-wise error-rate guarantee.

All features start with n0 permutations. While any of the K consecutive rank
tests fails, the two features at the failing boundary are resampled from
scratch at the sample sizes the current gap and variances suggest (times a
small buffer), capped at a per-feature maximum. Discarding the old draws
avoids the optional-stopping bias of topping up a sample until it passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import NonPositiveGap
from .models import ModelHandle, TabularDataset
from .sampling import MeanVarEstimate, shapley_sampling
from .verify import AttributionSet, VerifiedRanking, verify_ranks


@dataclass
class SamplingBudget:
    """Sampling plan for the adaptive loop.

    ``scheme`` picks between equal per-feature sample sizes and sizes scaled
    by each feature's variance; reproducibility mode doubles every planned
    size (matching the sqrt(2)-inflated test it must satisfy).
    """

    n0: int = 100
    max_n: int = 10_000
    buffer_c: float = 1.1
    scheme: str = "variance-proportional"
    mode: str = "inference"

    def __post_init__(self):
        if not 2 <= self.n0 <= self.max_n:
            raise ValueError(f"need 2 <= n0 <= max_n, got n0={self.n0}, max_n={self.max_n}")
        if not 1.0 <= self.buffer_c <= 2.0:
            raise ValueError(f"buffer_c must be in [1, 2], got {self.buffer_c}")
        if self.scheme not in ("equal", "variance-proportional"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.mode not in ("inference", "reproducibility"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class StableAttribution:
    """Output of an adaptive run: estimates, their verified ranking, and cost."""

    attrs: AttributionSet
    ranking: VerifiedRanking
    total_permutations: int
    per_feature_permutations: np.ndarray
    converged: bool
    requested_k: int = 0


def _ceil(value: float) -> int:
    # guard against float noise pushing an exact integer to the next one
    return math.ceil(value - 1e-9 * max(1.0, abs(value)))


def plan_sample_sizes(delta: float, var_a: float, var_b: float, df: float,
                      alpha: float, scheme: str = "variance-proportional",
                      mode: str = "inference") -> tuple[int, int]:
    """Sample sizes that would make the rank test reject at the observed gap.

    ``var_a``/``var_b`` are the per-draw contribution variances (not variances
    of means). Equal scheme: n = (t/delta)^2 (var_a + var_b) for both features.
    Proportional scheme: n_a = 2 (t/delta)^2 var_a and likewise for b, so the
    budget scales with each feature's variance. Values are rounded up; in
    reproducibility mode the rounded sizes are doubled.
    """
    if delta <= 0:
        raise NonPositiveGap(f"planning requires delta > 0, got {delta}")
    t = float(stats.t.ppf(1.0 - alpha / 2.0, df))
    ratio2 = (t / delta) ** 2
    if scheme == "equal":
        n = _ceil(ratio2 * (var_a + var_b))
        n_a = n_b = n
    elif scheme == "variance-proportional":
        n_a = _ceil(2.0 * ratio2 * var_a)
        n_b = _ceil(2.0 * ratio2 * var_b)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    if mode == "reproducibility":
        n_a, n_b = 2 * n_a, 2 * n_b
    return max(n_a, 2), max(n_b, 2)


def rankshap(model: ModelHandle, x, K: int, alpha: float,
             budget: SamplingBudget | None = None,
             background: TabularDataset | None = None, m: int = 10,
             rng: np.random.Generator | None = None,
             ranking_mode: str = "signed") -> StableAttribution:
    """Estimate Shapley values whose top-K order holds with probability >= 1-alpha.

    Returns converged=False (never raises) when the budget cap is hit with a
    test still failing; the caller can lower K, raise alpha, or raise max_n.
    """
    if background is None:
        raise ValueError("background dataset is required")
    d = background.n_features
    if not 1 <= K <= d - 1:
        raise ValueError(f"need 1 <= K <= d-1={d - 1}, got K={K}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if budget is None:
        budget = SamplingBudget()
    if rng is None:
        rng = np.random.default_rng()

    def sample(j: int, n: int) -> MeanVarEstimate:
        return shapley_sampling(model, x, j, n, background, m, rng.spawn(1)[0])

    estimates = [sample(j, budget.n0) for j in range(d)]
    counts = np.full(d, budget.n0, dtype=np.int64)
    total = int(d) * budget.n0

    while True:
        attrs = AttributionSet(
            estimates=np.array([e.mean for e in estimates]),
            per_feature=list(estimates),
            ranking_mode=ranking_mode,
        )
        ranking = verify_ranks(attrs, alpha, budget.mode)
        if ranking.K >= K:
            converged = True
            break

        k_fail = ranking.K + 1
        step = ranking.steps[k_fail - 1]
        a = int(ranking.order[k_fail - 1])
        b = int(ranking.order[k_fail])
        if counts[a] >= budget.max_n and counts[b] >= budget.max_n:
            converged = False
            break

        values = attrs.ranking_values()
        delta = float(values[a] - values[b])
        try:
            plan_a, plan_b = plan_sample_sizes(
                delta, estimates[a].variance, estimates[b].variance,
                step.df, alpha, budget.scheme, budget.mode)
        except NonPositiveGap:
            # exact tie in the estimates: no finite plan, jump to the cap
            plan_a = plan_b = budget.max_n
        target_a = min(budget.max_n, max(math.ceil(budget.buffer_c * plan_a), int(counts[a])))
        target_b = min(budget.max_n, max(math.ceil(budget.buffer_c * plan_b), int(counts[b])))

        # fresh resample from scratch for both boundary features
        estimates[a] = sample(a, target_a)
        estimates[b] = sample(b, target_b)
        total += target_a + target_b
        counts[a], counts[b] = target_a, target_b

    return StableAttribution(
        attrs=attrs,
        ranking=ranking,
        total_permutations=total,
        per_feature_permutations=counts,
        converged=converged,
        requested_k=K,
    )
