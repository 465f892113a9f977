"""KernelSHAP: all d Shapley values from one set of weighted coalition samples.

Coalition sizes follow the Shapley kernel law p(s) proportional to
(d-1) / (s (d-s)); the fit is a weighted least squares constrained to the
efficiency identity sum(phi) = v(full) - v(empty), solved by eliminating the
last coefficient. Estimate uncertainty comes from a paired bootstrap over the
(mask, value) samples, reusing the cached value-function evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

from .errors import InvalidBudget, SingularDesign
from .models import ModelHandle, TabularDataset, marginal_values_batch

_COND_LIMIT = 1e12
DEFAULT_BOOTSTRAP = 250


def default_coalition_budget(d: int) -> int:
    return 2 * d + 2048


@dataclass
class CoalitionSample:
    """One coalition mask with its value-function evaluation and kernel weight."""

    mask: np.ndarray
    value: float
    kernel_weight: float = 0.0

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        s = int(self.mask.sum())
        d = self.mask.shape[0]
        if s == 0 or s == d:
            raise ValueError("kernel weight is undefined for empty/full coalitions")
        if self.kernel_weight == 0.0:
            self.kernel_weight = kernel_weight(d, s)


def kernel_weight(d: int, s: int) -> float:
    """Shapley kernel weight for a size-s coalition of d features."""
    return (d - 1) / (comb(d, s) * s * (d - s))


def coalition_size_probs(d: int) -> np.ndarray:
    """Sampling law over sizes 1..d-1, proportional to 1/(s(d-s))."""
    s = np.arange(1, d)
    p = 1.0 / (s * (d - s))
    return p / p.sum()


def _draw_coalition_masks(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    sizes = rng.choice(np.arange(1, d), size=n, p=coalition_size_probs(d))
    # the s smallest of d i.i.d. uniforms index a uniform size-s subset
    u = rng.random((n, d))
    rank = np.argsort(np.argsort(u, axis=1), axis=1)
    return rank < sizes[:, None]


def sample_coalitions(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n coalition masks (n, d): size from the kernel law, members uniform."""
    if n < d + 2:
        raise InvalidBudget(f"need at least d+2={d + 2} coalitions, got {n}")
    return _draw_coalition_masks(d, n, rng)


def evaluate_coalitions(model: ModelHandle, x, masks: np.ndarray,
                        background: TabularDataset, m: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Marginal-imputation v(S) for each sampled coalition."""
    return marginal_values_batch(model, x, masks, background, m, rng)


def _as_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(samples, tuple) and len(samples) == 2:
        masks, values = samples
        return np.asarray(masks, dtype=bool), np.asarray(values, dtype=np.float64)
    masks = np.array([s.mask for s in samples], dtype=bool)
    values = np.array([s.value for s in samples], dtype=np.float64)
    return masks, values


def _design(masks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reduced design (last coefficient eliminated) and per-row kernel weights."""
    d = masks.shape[1]
    sizes = masks.sum(axis=1)
    w_by_size = np.array([kernel_weight(d, s) for s in range(1, d)])
    weights = w_by_size[sizes - 1]
    z = masks.astype(np.float64)
    design = z[:, :-1] - z[:, -1:]
    return design, weights


def kernelshap_fit(samples: Sequence[CoalitionSample] | tuple, v_empty: float,
                   v_full: float) -> np.ndarray:
    """Constrained weighted-least-squares Shapley estimate.

    ``samples`` is a list of CoalitionSample or a (masks, values) pair. The
    efficiency constraint sum(phi) = v_full - v_empty holds exactly; raises
    SingularDesign when the centered coalition design has rank below d-1.
    """
    masks, values = _as_arrays(samples)
    d = masks.shape[1]
    total = v_full - v_empty
    design, weights = _design(masks)
    y = values - v_empty - masks[:, -1] * total
    wd = design * weights[:, None]
    gram = wd.T @ design
    rhs = wd.T @ y
    if not np.all(np.isfinite(gram)) or np.linalg.cond(gram) > _COND_LIMIT:
        raise SingularDesign("coalition design matrix is rank-deficient")
    head = np.linalg.solve(gram, rhs)
    return np.concatenate([head, [total - head.sum()]])


def bootstrap_covariance(samples: Sequence[CoalitionSample] | tuple, v_empty: float,
                         v_full: float, B: int = DEFAULT_BOOTSTRAP,
                         rng: np.random.Generator | None = None) -> np.ndarray:
    """Covariance of the fitted Shapley vector across B coalition resamples.

    Value-function evaluations are reused; only the (mask, value) pairs are
    resampled with replacement. Singular resamples are redrawn; B consecutive
    failures raise SingularDesign.
    """
    if B < 2:
        raise InvalidBudget(f"bootstrap needs B >= 2 resamples, got {B}")
    if rng is None:
        rng = np.random.default_rng()
    masks, values = _as_arrays(samples)
    n, d = masks.shape
    total = v_full - v_empty
    design, weights = _design(masks)
    y = values - v_empty - masks[:, -1] * total

    fits = np.empty((B, d))
    done = 0
    consecutive_skips = 0
    while done < B:
        idx = rng.integers(0, n, size=n)
        a = design[idx]
        wa = a * weights[idx][:, None]
        gram = wa.T @ a
        sign, logdet = np.linalg.slogdet(gram)
        if sign <= 0 or np.linalg.cond(gram) > _COND_LIMIT:
            consecutive_skips += 1
            if consecutive_skips >= B:
                raise SingularDesign(f"{B} consecutive singular bootstrap resamples")
            continue
        consecutive_skips = 0
        head = np.linalg.solve(gram, wa.T @ y[idx])
        fits[done, :-1] = head
        fits[done, -1] = total - head.sum()
        done += 1

    cov = np.cov(fits, rowvar=False, ddof=1)
    return (cov + cov.T) / 2.0
