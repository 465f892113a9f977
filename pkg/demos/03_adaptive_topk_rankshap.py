"""Adaptive top-K sampling: spend permutations only where ranks are contested.

All features start with n0 permutations. Whenever one of the first K rank
tests fails, just the two features at the failing boundary are re-drawn from
scratch at sizes the observed gap and variances call for. Features far down
the ranking keep their initial n0 draws, which is where the efficiency over
uniform budgets comes from.
"""

import numpy as np

from stablerank import LinearModel, SamplingBudget, TabularDataset, rankshap

rng = np.random.default_rng(23)
background = TabularDataset(rng.normal(size=(60, 10)))
weights = np.array([5.0, -3.5, 3.4, -1.8, 1.0, -0.6, 0.4, -0.25, 0.15, -0.1])
model = LinearModel(weights).as_handle()
x = np.ones(10)

budget = SamplingBudget(n0=100, max_n=10_000, buffer_c=1.1,
                        scheme="variance-proportional")
result = rankshap(model, x, K=3, alpha=0.1, budget=budget, background=background,
                  m=10, rng=np.random.default_rng(1), ranking_mode="absolute")

print(f"converged: {result.converged}   verified K: {result.ranking.K}")
print(f"total permutations drawn (incl. discarded): {result.total_permutations}")
print("\nrank  feature  |estimate|  permutations kept")
values = np.abs(result.attrs.estimates)
for rank, j in enumerate(result.ranking.order, start=1):
    marker = "  <- contested pair re-sampled" if result.per_feature_permutations[j] > 100 else ""
    print(f"{rank:>4}  x{j:<6} {values[j]:9.3f}  {result.per_feature_permutations[j]:>6}{marker}")
