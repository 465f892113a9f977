"""Exact Shapley attributions versus Monte Carlo estimates.

For small d the attribution can be enumerated exactly; the permutation
sampler should land within a few standard errors of it, and the efficiency
identity (attributions summing to f(x) minus the average prediction) holds
for both.
"""

import numpy as np

from stablerank import (LinearModel, TabularDataset, eval_model, exact_shapley,
                        shapley_sampling)

rng = np.random.default_rng(7)
background = TabularDataset(rng.normal(size=(50, 6)),
                            feature_names=[f"x{j}" for j in range(6)])
model = LinearModel(np.array([3.0, -2.5, 2.0, -1.4, 0.8, -0.3]), bias=0.5).as_handle()
x = background.values[0]

phi = exact_shapley(model, x, background)
v_full = eval_model(model, x[None])[0]
v_empty = eval_model(model, background.values).mean()
print("exact attributions:", np.round(phi, 4))
print(f"efficiency: sum(phi)={phi.sum():.6f}  vs  f(x)-mean f={v_full - v_empty:.6f}")

print("\nfeature   exact     sampled   draws  standard error")
for j in range(6):
    est = shapley_sampling(model, x, j, n=5000, background=background, m=10,
                           rng=rng.spawn(1)[0])
    se = np.sqrt(est.variance_of_mean)
    print(f"x{j}      {phi[j]:8.4f}  {est.mean:8.4f}   5000  {se:.4f}")
