"""Local linear explanations whose feature selections are themselves tested.

A K-sparse linear explanation is fit on perturbations of the input; at each
step of the selection path the entering feature must beat the runner-up's
residual correlation at level alpha/(2K). When the test is inconclusive, the
perturbation pool doubles and the path restarts on the bigger pool; the
Bonferroni factor across the K steps caps the chance of any wrong ordered
selection at alpha.
"""

import numpy as np

from stablerank import LinearModel, TabularDataset, slime_select

rng = np.random.default_rng(19)
background = TabularDataset(rng.normal(size=(80, 6)))
model = LinearModel(np.array([10.0, 5.0, 2.5, 1.0, 0.5, 0.25])).as_handle()
x = np.ones(6)

trace = slime_select(model, x, K=3, alpha=0.1, background=background,
                     n0=1000, max_n=100_000, tol=1e-4,
                     rng=np.random.default_rng(0))

print(f"converged: {trace.converged} with a pool of {trace.n_samples} perturbations")
print("\nstep  selected  statistic  threshold  pool size")
for i, step in enumerate(trace.per_step, start=1):
    note = "  (within tolerance)" if step.by_tolerance else ""
    print(f"{i:>4}  x{step.feature:<7} {step.statistic:9.2f}  {step.threshold:9.2f}"
          f"  {step.n_samples:>9}{note}")
print("\nordered selection:", [f"x{j}" for j in trace.ordered_features])
