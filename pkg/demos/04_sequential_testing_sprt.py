"""Sequential testing that tolerates continual sampling.

KernelSHAP refits all attributions from one shared coalition pool, so
throwing draws away per feature would be wasteful. The sequential probability
ratio test instead compares each rank's studentized likelihood ratio against
fixed boundaries after every batch; decisions latch, and sampling just
continues until all K ranks reject, one accepts, or the budget runs out.
"""

import numpy as np

from stablerank import LinearModel, SprtBoundaries, TabularDataset, sprt_shap

bounds = SprtBoundaries(alpha=0.1, beta=0.2)
print(f"boundaries at alpha=0.1, beta=0.2: accept below {bounds.lower:.4f}, "
      f"reject above {bounds.upper:.1f}")

rng = np.random.default_rng(5)
background = TabularDataset(rng.normal(size=(60, 8)))
model = LinearModel(np.array([4.5, -3.0, 2.0, -1.2, 0.8, -0.5, 0.3, -0.2])).as_handle()
x = background.values[7]

result, state = sprt_shap(model, x, K=2, alpha=0.1, batch_size=500,
                          max_total=50_000, estimator="kernelshap",
                          background=background, m=10,
                          rng=np.random.default_rng(2), ranking_mode="absolute")

print(f"\nconverged: {result.converged} after {state.total_samples} coalitions")
print("per-rank decisions:", state.decisions)
print("ratios at decision time:", [f"{r:.3g}" for r in state.last_ratios])
print("top of the ranking:", [f"x{j}" for j in result.ranking.order[:3]])
