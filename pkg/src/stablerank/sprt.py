"""Sequential top-K verification with a studentized probability ratio test.

Unlike the resample-from-scratch loop, the SPRT allows continual sampling on
top of existing draws: after each batch the per-rank likelihood ratios are
compared against fixed boundaries beta/(1-alpha) and (1-beta)/alpha, and each
rank's decision latches once made. The likelihood ratio studentizes away the
nuisance scale: the observed Welch statistic is scored under a noncentral t
with the plug-in noncentrality against a central t for the null at zero gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats
from scipy.special import gammaln

from .errors import InvalidBudget
from .kernelshap import (_draw_coalition_masks, bootstrap_covariance,
                         evaluate_coalitions)
from .models import ModelHandle, TabularDataset, eval_model
from .sampling import MeanVarEstimate, marginal_contributions
from .verify import (AttributionSet, TestOutcome, VerifiedRanking,
                     welch_statistic)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_T_OVERFLOW = 50.0

CONTINUE = "continue"
REJECT_NULL = "reject_null"
ACCEPT_NULL = "accept_null"


@dataclass(frozen=True)
class SprtBoundaries:
    """Wald decision boundaries for type I level alpha and type II level beta."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0 and 0.0 < self.beta < 1.0):
            raise ValueError("alpha and beta must lie in (0, 1)")
        if not self.lower < 1.0 < self.upper:
            raise ValueError("boundaries must straddle 1; lower alpha or beta")

    @property
    def lower(self) -> float:
        return self.beta / (1.0 - self.alpha)

    @property
    def upper(self) -> float:
        return (1.0 - self.beta) / self.alpha


def _log_integrand(u: np.ndarray, t: float, df: float, ncp: float) -> np.ndarray:
    """log of the chi-square mixture integrand for the noncentral t density."""
    z = u * t - ncp
    log_norm = -0.5 * z * z - _LOG_SQRT_2PI
    x = df * u * u
    log_chi2 = (0.5 * df - 1.0) * np.log(x) - 0.5 * x - 0.5 * df * math.log(2.0) \
        - gammaln(0.5 * df)
    return math.log(2.0 * df) + 2.0 * np.log(u) + log_norm + log_chi2


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def _panel_integral(lo, hi, t, df, ncp, log_max, panels):
    edges = np.linspace(lo, hi, panels + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    nodes = (mids[:, None] + half * _GL_NODES[None, :]).ravel()
    logs = _log_integrand(nodes, t, df, ncp) - log_max
    weights = np.broadcast_to(half * _GL_WEIGHTS[None, :], (panels, _GL_NODES.size)).ravel()
    return float(np.dot(weights, np.exp(logs)))


def noncentral_t_logpdf(t: float, df: float, ncp: float) -> float:
    """Noncentral t log-density by quadrature of its chi-square scale mixture.

    Works in log-space around the integrand's peak so large degrees of freedom
    and noncentralities stay well conditioned; the bracketed peak is integrated
    with a composite Gauss-Legendre rule, doubled for verification, with an
    adaptive-quadrature fallback if the two resolutions disagree.
    """
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    grid = np.exp(np.linspace(math.log(1e-4), math.log(1e4), 600))
    logs = _log_integrand(grid, t, df, ncp)
    peak = int(np.argmax(logs))
    log_max = logs[peak]
    keep = logs > log_max - 60.0
    lo = grid[max(0, int(np.argmax(keep)) - 1)]
    hi = grid[min(len(grid) - 1, len(keep) - int(np.argmax(keep[::-1])))]

    coarse = _panel_integral(lo, hi, t, df, ncp, log_max, panels=6)
    fine = _panel_integral(lo, hi, t, df, ncp, log_max, panels=12)
    if not math.isfinite(fine) or abs(fine - coarse) > 1e-9 * abs(fine):
        def integrand(u):
            return math.exp(_log_integrand(np.array([u]), t, df, ncp)[0] - log_max)

        fine, _ = integrate.quad(integrand, lo, hi, points=[grid[peak]],
                                 epsabs=0.0, epsrel=1e-10, limit=200)
    return log_max + math.log(fine)


def sprt_likelihood_ratio(T: float, df: float) -> float:
    """Likelihood ratio of the best-fitting alternative against the null.

    For T >= 0 the alternative's plug-in noncentrality is T itself and the
    null sits at the boundary gap of zero, giving
    f_nct(T; df, T) / f_t(T; df). For T < 0 the roles flip: the alternative's
    supremum is at the zero-gap boundary while the null's plug-in is T, so the
    ratio drops below 1. |T| > 50 short-circuits to +inf (resp. 0).
    """
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    if math.isnan(T):
        raise ValueError("statistic must not be NaN")
    if T > _T_OVERFLOW:
        return math.inf
    if T < -_T_OVERFLOW:
        return 0.0
    if T == 0.0:
        return 1.0
    log_nct = noncentral_t_logpdf(T, df, T)
    log_central = float(stats.t.logpdf(T, df))
    log_ratio = (log_nct - log_central) if T > 0 else (log_central - log_nct)
    if log_ratio > 700.0:  # beyond float range; only ever crosses upward
        return math.inf
    return math.exp(log_ratio)


@dataclass
class SprtState:
    """Per-rank latched decisions plus the ratio and df frozen at decision time."""

    decisions: list[str]
    last_ratios: list[float] = field(default_factory=list)
    last_dfs: list[float] = field(default_factory=list)
    total_samples: int = 0

    @classmethod
    def fresh(cls, k: int) -> "SprtState":
        return cls(decisions=[CONTINUE] * k,
                   last_ratios=[1.0] * k,
                   last_dfs=[1.0] * k)

    @property
    def all_rejected(self) -> bool:
        return all(dec == REJECT_NULL for dec in self.decisions)

    @property
    def any_accepted(self) -> bool:
        return any(dec == ACCEPT_NULL for dec in self.decisions)

    def leading_rejections(self) -> int:
        k = 0
        for dec in self.decisions:
            if dec != REJECT_NULL:
                break
            k += 1
        return k


def sprt_step(state: SprtState, ratios, bounds: SprtBoundaries,
              dfs=None) -> SprtState:
    """Apply one round of boundary comparisons; settled ranks never change."""
    if len(ratios) != len(state.decisions):
        raise ValueError("one ratio per tracked rank is required")
    for i, ratio in enumerate(ratios):
        if state.decisions[i] != CONTINUE:
            continue
        if math.isnan(ratio):
            raise ValueError("likelihood ratios must be finite or +inf")
        state.last_ratios[i] = float(ratio)
        if dfs is not None:
            state.last_dfs[i] = float(dfs[i])
        if ratio >= bounds.upper:
            state.decisions[i] = REJECT_NULL
        elif ratio <= bounds.lower:
            state.decisions[i] = ACCEPT_NULL
    return state


def _state_ranking(state: SprtState, order: np.ndarray,
                   bounds: SprtBoundaries) -> VerifiedRanking:
    steps = [
        TestOutcome(k=i + 1, statistic=state.last_ratios[i], df=state.last_dfs[i],
                    threshold=bounds.upper,
                    rejected=state.decisions[i] == REJECT_NULL)
        for i in range(len(state.decisions))
    ]
    return VerifiedRanking(K=state.leading_rejections(), order=order, steps=steps)


def sprt_shap(model: ModelHandle, x, K: int, alpha: float, beta: float = 0.2,
              batch_size: int = 500, max_total: int = 50_000,
              estimator: str = "kernelshap",
              background: TabularDataset | None = None, m: int = 10,
              n_bootstrap: int = 250, rng: np.random.Generator | None = None,
              ranking_mode: str = "signed"):
    """Sequentially certify the top-K Shapley ranking, sampling in batches.

    ``estimator="kernelshap"`` grows one shared pool of weighted coalitions and
    refits after each batch (with a bootstrap covariance); ``"shapley-sampling"``
    appends ``batch_size`` permutations per feature instead. Stops when all K
    rank tests reject (converged), any rank accepts the null, or the total
    sample budget ``max_total`` is spent.
    """
    from .rankshap import StableAttribution

    if background is None:
        raise ValueError("background dataset is required")
    d = background.n_features
    if not 1 <= K <= d - 1:
        raise ValueError(f"need 1 <= K <= d-1={d - 1}, got K={K}")
    if batch_size < 1:
        raise InvalidBudget(f"batch_size must be >= 1, got {batch_size}")
    if estimator not in ("kernelshap", "shapley-sampling"):
        raise ValueError(f"unknown estimator {estimator!r}")
    if rng is None:
        rng = np.random.default_rng()

    bounds = SprtBoundaries(alpha=alpha, beta=beta)
    state = SprtState.fresh(K)
    x = np.asarray(x, dtype=np.float64)

    if estimator == "kernelshap":
        v_empty = float(eval_model(model, background.values).mean())
        v_full = float(eval_model(model, x[None, :])[0])
        masks = np.empty((0, d), dtype=bool)
        values = np.empty(0)
    else:
        feature_rngs = rng.spawn(d)
        estimates = [MeanVarEstimate() for _ in range(d)]

    while True:
        if estimator == "kernelshap":
            # the first fit needs enough coalitions to identify d-1 coefficients
            n_new = max(batch_size, d + 2) if masks.shape[0] == 0 else batch_size
            new_masks = _draw_coalition_masks(d, n_new, rng)
            new_values = evaluate_coalitions(model, x, new_masks, background, m, rng)
            masks = np.vstack([masks, new_masks])
            values = np.concatenate([values, new_values])
            phi = _fit(masks, values, v_empty, v_full)
            cov = bootstrap_covariance((masks, values), v_empty, v_full,
                                       B=n_bootstrap, rng=rng)
            attrs = AttributionSet(estimates=phi, covariance=cov,
                                   n_shared=masks.shape[0], ranking_mode=ranking_mode)
            state.total_samples = masks.shape[0]
            per_feature = np.full(d, masks.shape[0], dtype=np.int64)
        else:
            for j in range(d):
                draws = marginal_contributions(model, x, j, batch_size, background,
                                               m, feature_rngs[j])
                estimates[j].push_many(draws)
            attrs = AttributionSet(
                estimates=np.array([e.mean for e in estimates]),
                per_feature=list(estimates), ranking_mode=ranking_mode)
            state.total_samples = sum(e.n for e in estimates)
            per_feature = np.array([e.n for e in estimates], dtype=np.int64)

        order = attrs.order()
        ratios = []
        dfs = []
        for k in range(1, K + 1):
            a, b = int(order[k - 1]), int(order[k])
            t, df = welch_statistic(attrs.entry(a), attrs.entry(b), cov=attrs.cov(a, b))
            ratios.append(sprt_likelihood_ratio(t, df))
            dfs.append(df)
        state = sprt_step(state, ratios, bounds, dfs=dfs)

        if state.all_rejected:
            converged = True
            break
        if state.any_accepted or state.total_samples >= max_total:
            converged = False
            break

    return StableAttribution(
        attrs=attrs,
        ranking=_state_ranking(state, order, bounds),
        total_permutations=state.total_samples,
        per_feature_permutations=per_feature,
        converged=converged,
        requested_k=K,
    ), state


def _fit(masks, values, v_empty, v_full):
    from .kernelshap import kernelshap_fit

    return kernelshap_fit((masks, values), v_empty, v_full)
