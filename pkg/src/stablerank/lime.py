"""LIME perturbation sampling, a LARS/LASSO path, and tested K-feature selection.

The selection procedure grows one common pool of perturbation samples. At
each step of the LASSO path it tests whether the entering feature's residual
correlation significantly beats the runner-up's at level alpha/(2K); the
Bonferroni factor over the K sequential selections bounds the probability of
any mis-ordered selection by alpha. When a test is inconclusive the pool is
enlarged and the path re-run from the start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DegenerateDesign
from .models import ModelHandle, TabularDataset, eval_model

_CORR_EPS = 1e-10


def lime_kernel_width(d: int) -> float:
    return 0.75 * math.sqrt(d)


@dataclass
class LimeSample:
    """One perturbed sample: interpretable mask, proximity weight, model label."""

    mask: np.ndarray
    weight: float
    label: float
    point: np.ndarray | None = None


def _perturb_arrays(model: ModelHandle, x, n: int, background: TabularDataset,
                    rng: np.random.Generator, kernel_width: float | None = None):
    """Masks, proximity weights, and labels for n perturbations around x."""
    x = np.asarray(x, dtype=np.float64)
    d = background.n_features
    if kernel_width is None:
        kernel_width = lime_kernel_width(d)
    masks = rng.integers(0, 2, size=(n, d)).astype(bool)
    fills = background.values[rng.integers(0, background.n_rows, size=n)]
    points = np.where(masks, x[None, :], fills)
    hamming = 1.0 - masks.mean(axis=1)  # distance to the all-ones mask, / d
    weights = np.exp(-(hamming ** 2) / kernel_width ** 2)
    labels = eval_model(model, points)
    return masks, weights, labels, points


def lime_perturb(model: ModelHandle, x, n: int, background: TabularDataset,
                 rng: np.random.Generator | None = None,
                 kernel_width: float | None = None) -> list[LimeSample]:
    """Draw n LIME samples: masks i.i.d. Bernoulli(1/2) per bit, masked-off
    features replaced by background draws, exponential proximity weights."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if rng is None:
        rng = np.random.default_rng()
    masks, weights, labels, points = _perturb_arrays(model, x, n, background, rng, kernel_width)
    return [LimeSample(mask=masks[i].astype(np.int8), weight=float(weights[i]),
                       label=float(labels[i]), point=points[i])
            for i in range(n)]


def _standardize(masks, weights, labels):
    """Kernel-weighted, column-standardized design and centered response."""
    w = weights / weights.mean()
    sw = np.sqrt(w)
    z = masks.astype(np.float64)
    mu = np.average(z, axis=0, weights=w)
    var = np.average((z - mu) ** 2, axis=0, weights=w)
    sd = np.sqrt(var)
    sd[sd == 0.0] = np.inf  # constant columns can never be selected
    design = sw[:, None] * (z - mu) / sd
    y_mu = np.average(labels, weights=w)
    response = sw * (labels - y_mu)
    return design, response


def _lasso_entry_events(X, y, max_entries):
    """Walk the LASSO path via least angle steps, yielding each first entry.

    Yields (j, correlations, residual, active_before) at the moment feature j
    first enters. Handles the lasso modification: a coefficient crossing zero
    leaves the active set and the path continues without a new entry.
    """
    n, d = X.shape
    coef = np.zeros(d)
    active: list[int] = []
    residual = np.asarray(y, dtype=np.float64).copy()
    entered: set[int] = set()
    n_entries = 0
    add_next = True
    scale0 = None

    while n_entries < max_entries and len(active) < d:
        c = X.T @ residual
        if scale0 is None:
            scale0 = max(float(np.abs(c).max()), 1.0)
        if add_next:
            inactive = np.array([j for j in range(d) if j not in active])
            j_new = int(inactive[np.argmax(np.abs(c[inactive]))])
            if abs(c[j_new]) <= _CORR_EPS * scale0:
                raise DegenerateDesign("all residual correlations are (numerically) zero")
            if j_new not in entered:
                yield j_new, c, residual.copy(), list(active)
                entered.add(j_new)
                n_entries += 1
            active.append(j_new)

        signs = np.sign(c[active])
        signs[signs == 0.0] = 1.0
        xa = X[:, active] * signs
        gram = xa.T @ xa
        try:
            ginv_ones = np.linalg.solve(gram, np.ones(len(active)))
        except np.linalg.LinAlgError:
            raise DegenerateDesign("active design became collinear") from None
        total = float(ginv_ones.sum())
        if total <= 0:
            raise DegenerateDesign("active design became collinear")
        norm = 1.0 / math.sqrt(total)
        w = norm * ginv_ones
        u = xa @ w
        a = X.T @ u
        c_max = float(np.abs(c[active]).max())

        gamma = c_max / norm  # full least-squares step
        if len(active) < d:
            for j in range(d):
                if j in active:
                    continue
                for g in ((c_max - c[j]) / (norm - a[j]), (c_max + c[j]) / (norm + a[j])):
                    if _CORR_EPS * scale0 < g < gamma:
                        gamma = float(g)

        # lasso modification: drop a coefficient that would cross zero first
        directions = signs * w
        gamma_drop = math.inf
        drop_pos = None
        for pos, j in enumerate(active):
            if directions[pos] != 0.0:
                g = -coef[j] / directions[pos]
                if _CORR_EPS * scale0 < g < gamma_drop:
                    gamma_drop = g
                    drop_pos = pos

        if drop_pos is not None and gamma_drop < gamma:
            coef[active] += gamma_drop * directions
            residual -= gamma_drop * u
            dropped = active.pop(drop_pos)
            coef[dropped] = 0.0
            add_next = False
        else:
            coef[active] += gamma * directions
            residual -= gamma * u
            add_next = True


def lasso_entry_order(X, y, k: int) -> list[int]:
    """Indices of the first k distinct features entering the LASSO path."""
    return [j for j, _, _, _ in _lasso_entry_events(X, y, k)]


def lars_next_feature(Z, y, active) -> int:
    """Next feature to enter the LASSO path, given the entries so far in order.

    ``active`` must be the prefix of the path's entry order (possibly empty).
    Raises DegenerateDesign when no residual correlation remains.
    """
    Z = np.asarray(Z, dtype=np.float64)
    active = list(active)
    if len(active) >= Z.shape[1]:
        raise ValueError("at least one inactive feature is required")
    seen = 0
    for j, _, _, _ in _lasso_entry_events(Z, y, len(active) + 1):
        if seen == len(active):
            return j
        if j != active[seen]:
            raise ValueError(f"active is not a prefix of the entry order "
                             f"(expected {active[seen]}, path chose {j})")
        seen += 1
    raise DegenerateDesign("path exhausted before a new feature could enter")


@dataclass
class SelectionStep:
    """Outcome of the winner-vs-runner-up test at one selection step."""

    feature: int
    statistic: float
    threshold: float
    n_samples: int
    by_tolerance: bool = False


@dataclass
class SelectionTrace:
    """Ordered selections with their per-step tests; K selections iff converged."""

    ordered_features: list[int] = field(default_factory=list)
    per_step: list[SelectionStep] = field(default_factory=list)
    converged: bool = False
    n_samples: int = 0


def _step_test(design, residual, c, winner: int, candidates: list[int]):
    """Normal test statistic for |c_winner| - max |c_runner_up| on shared samples."""
    n = design.shape[0]
    if not candidates:
        return math.inf, 0.0  # nothing left to beat
    runner = candidates[int(np.argmax(np.abs(c[candidates])))]
    s_w = math.copysign(1.0, c[winner]) if c[winner] != 0 else 1.0
    s_r = math.copysign(1.0, c[runner]) if c[runner] != 0 else 1.0
    per_sample = s_w * design[:, winner] * residual - s_r * design[:, runner] * residual
    delta = float(per_sample.mean())
    sd = float(per_sample.std(ddof=1))
    if sd == 0.0:
        return (math.inf if delta > 0 else 0.0), delta
    return delta / (sd / math.sqrt(n)), delta


def slime_select(model: ModelHandle, x, K: int, alpha: float,
                 background: TabularDataset | None = None,
                 n0: int = 1000, max_n: int = 100_000, tol: float = 1e-4,
                 rng: np.random.Generator | None = None,
                 growth: float = 2.0,
                 kernel_width: float | None = None) -> SelectionTrace:
    """Select K features in order, each selection tested at level alpha/(2K).

    Grows one perturbation pool (factor ``growth`` per retry, capped at
    ``max_n``) until every selection's test is significant. A step whose
    correlation gap falls within ``tol`` is accepted without significance;
    tol=0 is the conservative choice. Returns converged=False when the pool
    cap is reached with a test still inconclusive.
    """
    if background is None:
        raise ValueError("background dataset is required")
    d = background.n_features
    if not 1 <= K <= d:
        raise ValueError(f"need 1 <= K <= d={d}, got K={K}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if not 2 <= n0 <= max_n:
        raise ValueError("need 2 <= n0 <= max_n")
    if rng is None:
        rng = np.random.default_rng()

    threshold = float(stats.norm.ppf(1.0 - alpha / (2.0 * K)))
    masks, weights, labels, _ = _perturb_arrays(model, x, n0, background, rng, kernel_width)

    while True:
        n = masks.shape[0]
        design, response = _standardize(masks, weights, labels)
        steps: list[SelectionStep] = []
        selected: list[int] = []
        inconclusive = False
        for j, c, residual, active in _lasso_entry_events(design, response, K):
            others = [i for i in range(d) if i not in active and i != j]
            statistic, delta = _step_test(design, residual, c, j, others)
            if statistic >= threshold:
                steps.append(SelectionStep(j, statistic, threshold, n))
            elif delta <= tol:
                steps.append(SelectionStep(j, statistic, threshold, n, by_tolerance=True))
            else:
                inconclusive = True
                break
            selected.append(j)
            if len(selected) == K:
                break

        if not inconclusive and len(selected) == K:
            return SelectionTrace(selected, steps, converged=True, n_samples=n)
        if not inconclusive and len(selected) < K:
            raise DegenerateDesign("path exhausted before K features entered")
        if n >= max_n:
            return SelectionTrace(selected, steps, converged=False, n_samples=n)

        n_new = min(max_n, int(math.ceil(n * growth))) - n
        more = _perturb_arrays(model, x, n_new, background, rng, kernel_width)
        masks = np.vstack([masks, more[0]])
        weights = np.concatenate([weights, more[1]])
        labels = np.concatenate([labels, more[2]])
