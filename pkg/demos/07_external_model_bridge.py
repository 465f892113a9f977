"""Attribute a model served by an external process over the line protocol.

The engine only needs something that answers {"op":"predict","x":[[...]]}
with {"y":[...]} on stdio, so models from any runtime can be explained
without linking them in. This demo talks to the bundled TypeScript server
(build it once with `npm install && npm run build` inside bridge/).
"""

import shutil
from pathlib import Path

import numpy as np

from stablerank import connect_bridge, load_dataset, load_model, shapley_sampling

ROOT = Path(__file__).parent.parent
SERVER = ROOT / "bridge" / "dist" / "server.js"

if not SERVER.exists() or shutil.which("node") is None:
    raise SystemExit("bridge not built; run `npm install && npm run build` in bridge/")

background = load_dataset(ROOT / "data" / "synth8.csv")
x = background.values[5]

native = load_model(ROOT / "data" / "linear8.txt")
remote = connect_bridge(f"node {SERVER} {ROOT / 'data' / 'linear8.txt'}",
                        d=background.n_features)

print("feature   native     bridged    |difference|")
for j in range(4):
    a = shapley_sampling(native, x, j, 500, background, 10, np.random.default_rng(j))
    b = shapley_sampling(remote, x, j, 500, background, 10, np.random.default_rng(j))
    print(f"x{j}      {a.mean:9.5f}  {b.mean:9.5f}   {abs(a.mean - b.mean):.2e}")
print("\nsame seed, same draws: the transport changes nothing but the process boundary")
