"""Global feature importance from per-input local attributions.

Global scores are column means of a matrix of local attributions. Because
the compared features share the same inputs, verification uses paired tests;
with unequal per-feature input counts the covariance over the shared prefix
of inputs scales by one over the larger count. The adaptive top-K procedures
grow input counts the way their local counterparts grow permutation counts.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .errors import NonPositiveGap, ParseError
from .models import ModelHandle, TabularDataset
from .sampling import MeanVarEstimate, shapley_sampling
from .sprt import (SprtBoundaries, SprtState, _state_ranking,
                   sprt_likelihood_ratio, sprt_step)
from .verify import TestOutcome, VerifiedRanking, welch_statistic


@dataclass
class LocalAttributionMatrix:
    """(n, d) local attributions; NaN suffixes mark unequal per-feature counts.

    Column j must be fully observed on its first ``counts[j]`` rows and NaN
    after that (features share a common prefix of inputs).
    """

    psi: np.ndarray
    source: str = "estimated"

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=np.float64)
        if self.psi.ndim != 2:
            raise ValueError("psi must be a 2-D matrix")
        if self.source not in ("exact", "estimated"):
            raise ValueError(f"unknown source {self.source!r}")
        observed = ~np.isnan(self.psi)
        counts = observed.sum(axis=0)
        # NaNs may only form a suffix in each column
        expected = np.arange(self.psi.shape[0])[:, None] < counts[None, :]
        if not np.array_equal(observed, expected):
            raise ValueError("missing entries must form a per-column suffix")
        if counts.min() < 2:
            raise ValueError("each feature needs local attributions on >= 2 inputs")
        self.counts = counts.astype(np.int64)

    @property
    def d(self) -> int:
        return self.psi.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.psi[: self.counts[j], j]

    def pairwise_cov(self, i: int, j: int) -> float:
        """Sample covariance of the two columns over their shared input prefix."""
        m = int(min(self.counts[i], self.counts[j]))
        a, b = self.psi[:m, i], self.psi[:m, j]
        return float(((a - a.mean()) * (b - b.mean())).sum() / (m - 1))


@dataclass
class GlobalScores:
    """Mean local attribution per feature with the input counts behind it."""

    theta: np.ndarray
    counts: np.ndarray

    @property
    def d(self) -> int:
        return self.theta.shape[0]


def global_scores(psi: LocalAttributionMatrix | np.ndarray) -> GlobalScores:
    """Column means of the local attributions (over each feature's own inputs)."""
    if not isinstance(psi, LocalAttributionMatrix):
        psi = LocalAttributionMatrix(psi)
    theta = np.array([psi.column(j).mean() for j in range(psi.d)])
    return GlobalScores(theta=theta, counts=psi.counts.copy())


def _ranked_values(theta: np.ndarray, ranking_mode: str) -> np.ndarray:
    return np.abs(theta) if ranking_mode == "absolute" else theta


def _global_test(psi: LocalAttributionMatrix, theta, a: int, b: int,
                 ranking_mode: str, mode: str) -> tuple[float, float]:
    values = _ranked_values(theta, ranking_mode)
    col_a, col_b = psi.column(a), psi.column(b)
    n_a, n_b = len(col_a), len(col_b)
    var_a, var_b = col_a.var(ddof=1), col_b.var(ddof=1)
    cov_psi = psi.pairwise_cov(a, b)
    if ranking_mode == "absolute":
        cov_psi *= float(np.sign(theta[a]) * np.sign(theta[b]) or 1.0)
    cov_est = cov_psi / max(n_a, n_b)
    return welch_statistic((values[a], var_a / n_a, n_a),
                           (values[b], var_b / n_b, n_b),
                           cov=cov_est, mode=mode)


def verify_global_ranks(scores: GlobalScores | None, psi: LocalAttributionMatrix,
                        alpha: float, mode: str = "inference",
                        ranking_mode: str = "signed") -> VerifiedRanking:
    """Sequential paired verification of the global importance ranking.

    Equal input counts give the paired t-test with df = n - 1; unequal counts
    use the shared-prefix covariance Cov(theta_a, theta_b) = Cov(psi_a, psi_b)
    over the larger count, with Welch-Satterthwaite degrees of freedom.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if scores is None:
        scores = global_scores(psi)
    theta = scores.theta
    order = np.argsort(-_ranked_values(theta, ranking_mode), kind="stable")
    steps: list[TestOutcome] = []
    k_verified = 0
    for k in range(1, psi.d):
        a, b = int(order[k - 1]), int(order[k])
        t, df = _global_test(psi, theta, a, b, ranking_mode, mode)
        threshold = float(stats.t.ppf(1.0 - alpha / 2.0, df))
        rejected = t >= threshold
        steps.append(TestOutcome(k=k, statistic=t, df=df, threshold=threshold,
                                 rejected=rejected, degenerate=math.isinf(t)))
        if not rejected:
            break
        k_verified = k
    return VerifiedRanking(K=k_verified, order=order, steps=steps)


@dataclass
class GlobalTopKResult:
    """Adaptive global run: scores, the ranking evidence, and the input budget."""

    scores: GlobalScores
    ranking: VerifiedRanking
    per_feature_inputs: np.ndarray
    total_inputs: int
    converged: bool
    strategy: str


AttributionSource = Callable[[np.random.Generator, int], np.ndarray]


def global_topk(source: AttributionSource, d: int, K: int, alpha: float,
                budget=None, strategy: str = "resample", beta: float = 0.2,
                rng: np.random.Generator | None = None,
                ranking_mode: str = "signed") -> GlobalTopKResult:
    """Certify the K globally most important features from streamed inputs.

    ``source(rng, count)`` returns a (count, d) block of local attributions on
    freshly drawn inputs. The resample strategy grows the two features at a
    failing boundary following the sample-size formulas; the sprt strategy
    draws joint batches for all features and latches per-rank SPRT decisions.
    """
    from .rankshap import SamplingBudget, plan_sample_sizes

    if budget is None:
        budget = SamplingBudget(n0=100, max_n=10_000)
    if not 1 <= K <= d - 1:
        raise ValueError(f"need 1 <= K <= d-1={d - 1}, got K={K}")
    if rng is None:
        rng = np.random.default_rng()

    psi = np.asarray(source(rng, budget.n0), dtype=np.float64)
    if psi.shape != (budget.n0, d):
        raise ValueError(f"source returned shape {psi.shape}, expected {(budget.n0, d)}")
    counts = np.full(d, budget.n0, dtype=np.int64)

    if strategy == "resample":
        return _global_resample(source, psi, counts, d, K, alpha, budget, rng,
                                ranking_mode, plan_sample_sizes)
    if strategy == "sprt":
        return _global_sprt(source, psi, d, K, alpha, beta, budget, rng, ranking_mode)
    raise ValueError(f"unknown strategy {strategy!r}")


def _masked_matrix(psi: np.ndarray, counts: np.ndarray) -> LocalAttributionMatrix:
    out = psi.copy()
    for j in range(psi.shape[1]):
        out[counts[j]:, j] = np.nan
    return LocalAttributionMatrix(out)


def _global_resample(source, psi, counts, d, K, alpha, budget, rng,
                     ranking_mode, plan_sample_sizes) -> GlobalTopKResult:
    while True:
        mat = _masked_matrix(psi[: counts.max()], counts)
        scores = global_scores(mat)
        ranking = verify_global_ranks(scores, mat, alpha, budget.mode, ranking_mode)
        if ranking.K >= K:
            converged = True
            break
        k_fail = ranking.K + 1
        step = ranking.steps[k_fail - 1]
        a, b = int(ranking.order[k_fail - 1]), int(ranking.order[k_fail])
        if counts[a] >= budget.max_n and counts[b] >= budget.max_n:
            converged = False
            break
        values = _ranked_values(scores.theta, ranking_mode)
        delta = float(values[a] - values[b])
        try:
            plan_a, plan_b = plan_sample_sizes(
                delta, mat.column(a).var(ddof=1), mat.column(b).var(ddof=1),
                step.df, alpha, budget.scheme, budget.mode)
        except NonPositiveGap:
            plan_a = plan_b = budget.max_n
        target_a = min(budget.max_n, max(math.ceil(budget.buffer_c * plan_a), int(counts[a])))
        target_b = min(budget.max_n, max(math.ceil(budget.buffer_c * plan_b), int(counts[b])))
        if target_a == counts[a] and target_b == counts[b]:
            # the paired variance can exceed what the independence-based plans
            # anticipate (negative covariance); without fresh draws the state
            # would repeat forever, so force geometric growth on the pair
            target_a = min(budget.max_n, max(target_a, math.ceil(1.5 * counts[a])))
            target_b = min(budget.max_n, max(target_b, math.ceil(1.5 * counts[b])))
        # inputs are shared: extend the common stream far enough for both
        needed = max(target_a, target_b)
        if needed > psi.shape[0]:
            extra = np.asarray(source(rng, needed - psi.shape[0]), dtype=np.float64)
            psi = np.vstack([psi, extra])
        counts[a], counts[b] = target_a, target_b

    return GlobalTopKResult(scores=scores, ranking=ranking,
                            per_feature_inputs=counts.copy(),
                            total_inputs=int(psi.shape[0]),
                            converged=converged, strategy="resample")


def _global_sprt(source, psi, d, K, alpha, beta, budget, rng,
                 ranking_mode) -> GlobalTopKResult:
    bounds = SprtBoundaries(alpha=alpha, beta=beta)
    state = SprtState.fresh(K)
    while True:
        mat = LocalAttributionMatrix(psi)
        scores = global_scores(mat)
        order = np.argsort(-_ranked_values(scores.theta, ranking_mode), kind="stable")
        ratios, dfs = [], []
        for k in range(1, K + 1):
            a, b = int(order[k - 1]), int(order[k])
            t, df = _global_test(mat, scores.theta, a, b, ranking_mode, "inference")
            ratios.append(sprt_likelihood_ratio(t, df))
            dfs.append(df)
        state = sprt_step(state, ratios, bounds, dfs=dfs)
        state.total_samples = psi.shape[0]
        if state.all_rejected:
            converged = True
            break
        if state.any_accepted or psi.shape[0] >= budget.max_n:
            converged = False
            break
        n_new = min(budget.n0, budget.max_n - psi.shape[0])
        psi = np.vstack([psi, np.asarray(source(rng, n_new), dtype=np.float64)])

    counts = np.full(d, psi.shape[0], dtype=np.int64)
    return GlobalTopKResult(scores=scores, ranking=_state_ranking(state, order, bounds),
                            per_feature_inputs=counts, total_inputs=int(psi.shape[0]),
                            converged=converged, strategy="sprt")


def unbiased_abs_contribution(model: ModelHandle, x, j: int, n: int,
                              background: TabularDataset, m: int = 10,
                              rng: np.random.Generator | None = None) -> MeanVarEstimate:
    """Permutation average of |v(S u {j}) - v(S)|.

    Not a Shapley value, but unbiasedly estimable, which makes means of these
    scores over inputs a sound target for global absolute importance (unlike
    means of |estimated Shapley value|, which are biased toward zero noise).
    """
    return shapley_sampling(model, x, j, n, background, m, rng, absolute=True)


# ---------------------------------------------------------------------------
# CSV interface for precomputed local attributions
# ---------------------------------------------------------------------------

def load_attributions(path, source: str = "estimated") -> LocalAttributionMatrix:
    """Read a local-attribution CSV: header input_id,feature_0,...,feature_{d-1}."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file", line=1) from None
        if len(header) < 2 or header[0].strip() != "input_id":
            raise ParseError(f"{path}: header must start with input_id", line=1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: expected {len(header)} fields, found {len(row)}",
                                 line=lineno)
            try:
                rows.append([float(c) if c.strip() != "" else np.nan for c in row[1:]])
            except ValueError:
                raise ParseError(f"{path}: non-numeric attribution", line=lineno) from None
    if not rows:
        raise ParseError(f"{path}: no data rows", line=2)
    return LocalAttributionMatrix(np.array(rows), source=source)


def save_attributions(psi: LocalAttributionMatrix, path) -> None:
    """Write the CSV form; floats use repr so a reload reproduces them bit-exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["input_id"] + [f"feature_{j}" for j in range(psi.d)])
        for i in range(psi.psi.shape[0]):
            cells = [repr(float(v)) if not np.isnan(v) else "" for v in psi.psi[i]]
            writer.writerow([str(i)] + cells)
