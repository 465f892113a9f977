"""Independent oracles used by the tests.

Everything here recomputes quantities from first principles (plain loops,
closed forms, or a third-party estimator) so the package code paths under
test never check themselves.
"""

import itertools
from math import comb

import numpy as np


def value_exhaustive(model_fn, x, mask, background_values):
    """v(S) with every background row used once, computed with plain numpy."""
    filled = np.where(np.asarray(mask, dtype=bool)[None, :], x[None, :], background_values)
    return float(np.mean(model_fn(filled)))


def shapley_by_permutations(model_fn, x, background_values):
    """Permutation-form Shapley values: explicit average over all d! orders."""
    d = x.shape[0]
    values = {}

    def v(subset):
        key = frozenset(subset)
        if key not in values:
            mask = np.zeros(d, dtype=bool)
            mask[list(key)] = True
            values[key] = value_exhaustive(model_fn, x, mask, background_values)
        return values[key]

    phi = np.zeros(d)
    count = 0
    for perm in itertools.permutations(range(d)):
        count += 1
        before = []
        for j in perm:
            phi[j] += v(before + [j]) - v(before)
            before.append(j)
    return phi / count


def shapley_by_subsets(model_fn, x, background_values):
    """Subset-weighted form with explicit binomial coefficients."""
    d = x.shape[0]
    phi = np.zeros(d)
    others = list(range(d))
    for j in range(d):
        rest = [i for i in others if i != j]
        for r in range(d):
            for subset in itertools.combinations(rest, r):
                mask = np.zeros(d, dtype=bool)
                mask[list(subset)] = True
                v_without = value_exhaustive(model_fn, x, mask, background_values)
                mask[j] = True
                v_with = value_exhaustive(model_fn, x, mask, background_values)
                phi[j] += (v_with - v_without) / (d * comb(d - 1, r))
    return phi


def linear_shapley(weights, x, background_values):
    """Closed form for a linear model under marginal imputation: w_j (x_j - mu_j)."""
    mu = background_values.mean(axis=0)
    return np.asarray(weights) * (np.asarray(x) - mu)


def lasso_entry_order_cd(X, y, k):
    """First-entry order along a coordinate-descent LASSO path (sklearn).

    The grid must be fine enough to separate features entering at nearby
    penalties, so it is refined locally around every new entry.
    """
    from sklearn.linear_model import lasso_path

    n = X.shape[0]
    alpha_max = np.max(np.abs(X.T @ y)) / n

    def entries_on(alphas):
        _, coefs, _ = lasso_path(X, y, alphas=alphas, tol=1e-12, max_iter=1_000_000)
        order, where = [], []
        for col in range(coefs.shape[1]):
            for j in np.flatnonzero(np.abs(coefs[:, col]) > 1e-12):
                if j not in order:
                    order.append(int(j))
                    where.append(col)
        return order, where

    alphas = alpha_max * np.logspace(0, -6, 1200)
    order, where = entries_on(alphas)
    # refine any window where two entries landed on adjacent grid points
    for _ in range(3):
        tight = [i for i in range(1, len(order)) if where[i] - where[i - 1] <= 1]
        if not tight or len(order) >= k and all(where[i] - where[i - 1] > 1
                                                for i in range(1, min(k, len(order)))):
            break
        lo = max(where[min(tight)] - 2, 0)
        hi = min(where[max(tight)] + 2, len(alphas) - 1)
        fine = np.geomspace(alphas[lo], alphas[hi], 4000)
        alphas = np.unique(np.concatenate([alphas, fine]))[::-1]
        order, where = entries_on(alphas)
    return order[:k]


def mlp_forward_by_hand(layers, x, sigmoid=False):
    """Scalar MLP output via explicit loops (no numpy matmul)."""
    h = list(x)
    for li, (w, b) in enumerate(layers):
        out = []
        for o in range(len(b)):
            acc = b[o]
            for i in range(len(h)):
                acc += h[i] * w[i][o]
            if li < len(layers) - 1:
                acc = max(acc, 0.0)
            out.append(acc)
        h = out
    y = h[0]
    if sigmoid:
        import math

        y = 1.0 / (1.0 + math.exp(-y))
    return y


def welch_from_stats(mean_a, sd_a, n_a, mean_b, sd_b, n_b):
    """Reference Welch statistic via scipy's from-stats implementation."""
    from scipy import stats

    res = stats.ttest_ind_from_stats(mean_a, sd_a, n_a, mean_b, sd_b, n_b,
                                     equal_var=False)
    return float(res.statistic)
