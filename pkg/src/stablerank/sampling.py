"""Monte Carlo Shapley estimation from random permutations, plus an exact oracle.

Each draw picks a uniform random permutation, takes the coalition of features
preceding feature j, and evaluates the change in the value function when j
joins. Draws for different features use independent RNG streams; the two
value-function calls inside one draw share their imputation rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import InvalidBudget, TooManyFeatures
from .models import ModelHandle, TabularDataset, marginal_values_batch

_DRAW_CHUNK = 1 << 16  # permutations per vectorized block


@dataclass
class MeanVarEstimate:
    """Streaming mean and variance (Welford) of one feature's contributions."""

    mean: float = 0.0
    m2: float = 0.0
    n: int = 0

    @property
    def variance(self) -> float:
        """Sample variance of the individual draws (needs n >= 2)."""
        if self.n < 2:
            return float("nan")
        return self.m2 / (self.n - 1)

    @property
    def variance_of_mean(self) -> float:
        return self.variance / self.n

    def push(self, value: float) -> None:
        self.n += 1
        delta = value - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (value - self.mean)

    def push_many(self, values) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            return
        batch = MeanVarEstimate(
            mean=float(values.mean()),
            m2=float(((values - values.mean()) ** 2).sum()),
            n=values.size,
        )
        merged = self.merge(batch)
        self.mean, self.m2, self.n = merged.mean, merged.m2, merged.n

    def merge(self, other: "MeanVarEstimate") -> "MeanVarEstimate":
        """Combine two disjoint streams (parallel-variance update)."""
        if self.n == 0:
            return MeanVarEstimate(other.mean, other.m2, other.n)
        if other.n == 0:
            return MeanVarEstimate(self.mean, self.m2, self.n)
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return MeanVarEstimate(mean, m2, n)

    @classmethod
    def from_values(cls, values) -> "MeanVarEstimate":
        est = cls()
        est.push_many(values)
        return est


def _prefix_masks(d: int, j: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Coalitions of features preceding j in n independent uniform permutations."""
    perms = rng.permuted(np.tile(np.arange(d), (n, 1)), axis=1)
    pos = np.empty_like(perms)
    np.put_along_axis(pos, perms, np.broadcast_to(np.arange(d), (n, d)), axis=1)
    return pos < pos[:, j:j + 1]


def marginal_contributions(model: ModelHandle, x, j: int, n: int,
                           background: TabularDataset, m: int,
                           rng: np.random.Generator,
                           absolute: bool = False,
                           exhaustive: bool = False) -> np.ndarray:
    """n i.i.d. draws of v(S u {j}) - v(S) with S a random permutation prefix.

    ``exhaustive=True`` evaluates both coalitions with every background row
    used exactly once instead of m random fills, making the value function
    deterministic (only the permutation stays random).
    """
    from .models import exhaustive_values_batch

    d = background.n_features
    if not 0 <= j < d:
        raise ValueError(f"feature index {j} out of range for d={d}")
    out = np.empty(n)
    for lo in range(0, n, _DRAW_CHUNK):
        size = min(_DRAW_CHUNK, n - lo)
        masks = _prefix_masks(d, j, size, rng)
        masks_with = masks.copy()
        masks_with[:, j] = True
        if exhaustive:
            v_with = exhaustive_values_batch(model, x, masks_with, background)
            v_without = exhaustive_values_batch(model, x, masks, background)
        else:
            rows = rng.integers(0, background.n_rows, size=(size, m))
            v_with = marginal_values_batch(model, x, masks_with, background, m,
                                           rng, row_draws=rows)
            v_without = marginal_values_batch(model, x, masks, background, m,
                                              rng, row_draws=rows)
        out[lo:lo + size] = v_with - v_without
    return np.abs(out) if absolute else out


def marginal_contribution(model: ModelHandle, x, j: int, background: TabularDataset,
                          m: int, rng: np.random.Generator) -> float:
    """One draw of the permutation marginal contribution of feature j."""
    return float(marginal_contributions(model, x, j, 1, background, m, rng)[0])


def shapley_sampling(model: ModelHandle, x, j: int, n: int, background: TabularDataset,
                     m: int = 10, rng: np.random.Generator | None = None,
                     absolute: bool = False, exhaustive: bool = False) -> MeanVarEstimate:
    """Unbiased Monte Carlo Shapley estimate for feature j from n permutations.

    ``absolute=True`` averages |v(S u {j}) - v(S)| instead, the unbiased
    absolute-contribution estimand used for global importance; ``exhaustive``
    switches to the deterministic every-row-once value function.
    """
    if n < 2:
        raise InvalidBudget(f"shapley_sampling needs n >= 2, got {n}")
    if rng is None:
        rng = np.random.default_rng()
    draws = marginal_contributions(model, x, j, n, background, m, rng,
                                   absolute=absolute, exhaustive=exhaustive)
    return MeanVarEstimate.from_values(draws)


def shapley_sampling_all(model: ModelHandle, x, n: int, background: TabularDataset,
                         m: int = 10, rng: np.random.Generator | None = None) -> list[MeanVarEstimate]:
    """Shapley Sampling for every feature, one independent RNG stream each."""
    if rng is None:
        rng = np.random.default_rng()
    streams = rng.spawn(background.n_features)
    return [shapley_sampling(model, x, j, n, background, m, streams[j])
            for j in range(background.n_features)]


def all_coalition_masks(d: int) -> np.ndarray:
    """All 2^d coalition masks; row index equals the mask's bit pattern."""
    codes = np.arange(1 << d, dtype=np.uint32)
    return (codes[:, None] >> np.arange(d)) & 1 == 1


def exact_shapley(model: ModelHandle, x, background: TabularDataset,
                  values_by_mask: np.ndarray | None = None) -> np.ndarray:
    """Exact Shapley values by full subset enumeration (d <= 12).

    Uses the deterministic exhaustive-background value function, with subset
    weights 1 / (d * C(d-1, |S|)) accumulated from log-space binomials.
    ``values_by_mask`` may supply precomputed v(S) for all 2^d masks.
    """
    from .models import exhaustive_values_batch

    d = background.n_features
    if d > 12:
        raise TooManyFeatures(f"exact enumeration supports d <= 12, got d={d}")
    masks = all_coalition_masks(d)
    if values_by_mask is None:
        values_by_mask = exhaustive_values_batch(model, x, masks, background)
    sizes = masks.sum(axis=1)
    # log 1/(d * C(d-1, s)) for s = 0..d-1
    s = np.arange(d)
    log_w = -(np.log(d) + gammaln(d) - gammaln(s + 1) - gammaln(d - s))
    weights = np.exp(log_w)

    codes = np.arange(1 << d, dtype=np.uint32)
    phi = np.empty(d)
    for j in range(d):
        without = codes[(codes >> j) & 1 == 0]
        with_j = without | (1 << j)
        gains = values_by_mask[with_j] - values_by_mask[without]
        phi[j] = float(np.dot(weights[sizes[without]], gains))
    return phi
