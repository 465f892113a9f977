"""Black-box model handles, tabular datasets, and the marginal value function.

The value function v(S) fixes the features in coalition S to the explained
input x and fills the remaining features with rows drawn from a background
dataset, averaging the model output over the fills.
"""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import EvaluationFailure, ParseError

# Rows per model call; keeps imputation buffers at a few hundred MB worst case.
_EVAL_CHUNK = 1 << 20


class TabularDataset:
    """Immutable N x d feature matrix with cached column means."""

    def __init__(self, values, feature_names=None):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("dataset values must be a 2-D matrix")
        n, d = values.shape
        if n < 1 or d < 2:
            raise ValueError(f"dataset must have N >= 1 rows and d >= 2 columns, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("dataset contains non-finite entries")
        if feature_names is None:
            feature_names = [f"feature_{j}" for j in range(d)]
        if len(feature_names) != d:
            raise ValueError("feature_names length does not match number of columns")
        self.values = values.copy()
        self.values.flags.writeable = False
        self.feature_names = tuple(str(name) for name in feature_names)
        self.column_means = self.values.mean(axis=0)
        self.column_means.flags.writeable = False

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def __repr__(self):
        return f"TabularDataset(N={self.n_rows}, d={self.n_features})"


class ModelHandle:
    """Wraps an evaluator mapping an (m, d) matrix to an m-vector of outputs.

    ``serialized=True`` declares that the evaluator must not be called from
    several threads at once; evaluation then goes through an internal lock.
    """

    def __init__(self, evaluator: Callable[[np.ndarray], np.ndarray],
                 n_features: int | None = None, output_kind: str = "regression",
                 serialized: bool = False):
        if output_kind not in ("regression", "probability"):
            raise ValueError(f"unknown output_kind {output_kind!r}")
        self._evaluator = evaluator
        self.n_features = n_features
        self.output_kind = output_kind
        self.serialized = serialized
        self._lock = threading.Lock() if serialized else None

    def evaluate(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2:
            raise ValueError("model input must be a 2-D matrix")
        if self.n_features is not None and batch.shape[1] != self.n_features:
            raise ValueError(f"model expects {self.n_features} columns, got {batch.shape[1]}")
        if batch.shape[0] == 0:
            return np.empty(0, dtype=np.float64)
        if self._lock is not None:
            with self._lock:
                out = self._evaluator(batch)
        else:
            out = self._evaluator(batch)
        out = np.asarray(out, dtype=np.float64).reshape(-1)
        if out.shape[0] != batch.shape[0]:
            raise EvaluationFailure(
                f"evaluator returned {out.shape[0]} outputs for {batch.shape[0]} rows")
        return out

    def __call__(self, batch: np.ndarray) -> np.ndarray:
        return self.evaluate(batch)


def eval_model(model: ModelHandle, batch) -> np.ndarray:
    """Evaluate ``model`` on a batch, chunking very large inputs."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[0] <= _EVAL_CHUNK:
        return model.evaluate(batch)
    parts = [model.evaluate(batch[i:i + _EVAL_CHUNK]) for i in range(0, batch.shape[0], _EVAL_CHUNK)]
    return np.concatenate(parts)


@dataclass
class LinearModel:
    """f(x) = w . x + b; evaluator for ModelHandle."""

    weights: np.ndarray
    bias: float = 0.0
    sigmoid: bool = False

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)

    def __call__(self, batch):
        y = batch @ self.weights + self.bias
        return _sigmoid(y) if self.sigmoid else y

    def as_handle(self) -> ModelHandle:
        kind = "probability" if self.sigmoid else "regression"
        return ModelHandle(self, n_features=self.weights.shape[0], output_kind=kind)


@dataclass
class MLPModel:
    """Feed-forward network with ReLU hidden layers and a scalar output."""

    layers: Sequence[tuple[np.ndarray, np.ndarray]]  # [(W: in x out, b: out), ...]
    sigmoid: bool = False

    def __call__(self, batch):
        h = batch
        for i, (w, b) in enumerate(self.layers):
            h = h @ w + b
            if i < len(self.layers) - 1:
                h = np.maximum(h, 0.0)
        y = h[:, 0]
        return _sigmoid(y) if self.sigmoid else y

    def as_handle(self) -> ModelHandle:
        kind = "probability" if self.sigmoid else "regression"
        return ModelHandle(self, n_features=self.layers[0][0].shape[0], output_kind=kind)


def _sigmoid(y):
    out = np.empty_like(y)
    pos = y >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-y[pos]))
    ey = np.exp(y[~pos])
    out[~pos] = ey / (1.0 + ey)
    return out


def full_mask(d: int) -> np.ndarray:
    return np.ones(d, dtype=bool)


def empty_mask(d: int) -> np.ndarray:
    return np.zeros(d, dtype=bool)


def mask_from_indices(d: int, indices) -> np.ndarray:
    mask = np.zeros(d, dtype=bool)
    mask[list(indices)] = True
    return mask


def value_function_marginal(model: ModelHandle, x, mask, background: TabularDataset,
                            m: int = 10, rng: np.random.Generator | None = None) -> float:
    """v(S): mean model output with S fixed to x, the rest imputed marginally.

    Imputation rows are drawn i.i.d. uniformly with replacement from the
    background; ``m`` is the number of fills averaged per coalition.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if rng is None:
        rng = np.random.default_rng()
    x = np.asarray(x, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[0] != background.n_features:
        raise ValueError("coalition mask length does not match dataset dimension")
    if mask.all():
        return float(eval_model(model, x[None, :])[0])
    rows = rng.integers(0, background.n_rows, size=m)
    filled = np.where(mask[None, :], x[None, :], background.values[rows])
    return float(eval_model(model, filled).mean())


def value_function_exhaustive(model: ModelHandle, x, mask, background: TabularDataset) -> float:
    """Deterministic v(S): every background row used exactly once as the fill."""
    x = np.asarray(x, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if mask.all():
        return float(eval_model(model, x[None, :])[0])
    filled = np.where(mask[None, :], x[None, :], background.values)
    return float(eval_model(model, filled).mean())


def marginal_values_batch(model: ModelHandle, x, masks, background: TabularDataset,
                          m: int, rng: np.random.Generator,
                          row_draws: np.ndarray | None = None) -> np.ndarray:
    """Vectorized v(S) for a (q, d) stack of coalition masks.

    ``row_draws`` (q, m int indices) lets two related mask stacks share the
    same imputation rows (common random numbers).
    """
    x = np.asarray(x, dtype=np.float64)
    masks = np.asarray(masks, dtype=bool)
    q, d = masks.shape
    if row_draws is None:
        row_draws = rng.integers(0, background.n_rows, size=(q, m))
    fills = background.values[row_draws]                     # (q, m, d)
    filled = np.where(masks[:, None, :], x[None, None, :], fills)
    values = eval_model(model, filled.reshape(q * m, d))
    return values.reshape(q, m).mean(axis=1)


def exhaustive_values_batch(model: ModelHandle, x, masks, background: TabularDataset) -> np.ndarray:
    """Deterministic v(S) for a (q, d) stack of masks (every row used once)."""
    x = np.asarray(x, dtype=np.float64)
    masks = np.asarray(masks, dtype=bool)
    q, d = masks.shape
    n = background.n_rows
    out = np.empty(q)
    # chunk so the (chunk * n, d) imputation buffer stays bounded
    step = max(1, _EVAL_CHUNK // max(n, 1))
    for lo in range(0, q, step):
        chunk = masks[lo:lo + step]
        filled = np.where(chunk[:, None, :], x[None, None, :],
                          background.values[None, :, :])
        vals = eval_model(model, filled.reshape(-1, d))
        out[lo:lo + step] = vals.reshape(chunk.shape[0], n).mean(axis=1)
    return out


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

_LABEL_NAMES = {"label", "target", "class", "y"}


def load_dataset(path, drop_label: str | bool = "auto") -> TabularDataset:
    """Load a CSV with a header row into a TabularDataset.

    ``drop_label="auto"`` drops the last column when its header looks like a
    label (one of label/target/class/y, case-insensitive); True always drops
    it; False keeps every column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file", line=1) from None
        header = [h.strip() for h in header]
        if drop_label == "auto":
            drop = len(header) >= 3 and header[-1].lower() in _LABEL_NAMES
        else:
            drop = bool(drop_label)
        ncols = len(header) - 1 if drop else len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: expected {len(header)} fields, found {len(row)}",
                                 line=lineno)
            parsed = []
            for col, cell in enumerate(row[:ncols], start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ParseError(f"{path}: non-numeric value {cell!r}",
                                     line=lineno, column=col) from None
            rows.append(parsed)
    if not rows:
        raise ParseError(f"{path}: no data rows", line=2)
    return TabularDataset(np.array(rows), feature_names=header[:ncols])


def split_dataset(dataset: TabularDataset, test_fraction: float = 0.25,
                  seed: int = 0) -> tuple[TabularDataset, TabularDataset]:
    """Shuffle rows with a fixed seed and split train/test."""
    n = dataset.n_rows
    n_test = max(1, int(round(n * test_fraction)))
    if n_test >= n:
        raise ValueError("not enough rows to split")
    perm = np.random.default_rng(seed).permutation(n)
    test_idx, train_idx = perm[:n_test], perm[n_test:]
    return (TabularDataset(dataset.values[train_idx], dataset.feature_names),
            TabularDataset(dataset.values[test_idx], dataset.feature_names))


def load_model(path) -> ModelHandle:
    """Load a plain-text weights file.

    First line: ``linear`` or ``mlp``, optionally followed by ``sigmoid``.
    linear: remaining numbers are d weights followed by the bias.
    mlp: next line holds the layer widths (input ... output, output width 1);
    then, per layer, an in x out weight matrix in row-major order followed by
    its out-vector of biases. Hidden activations are ReLU.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty model file", line=1)
    head = lines[0].split()
    if not head:
        raise ParseError(f"{path}: missing model kind", line=1)
    kind = head[0].lower()
    sigmoid = "sigmoid" in (tok.lower() for tok in head[1:])

    def numbers(from_line):
        out = []
        for lineno, line in enumerate(lines[from_line:], start=from_line + 1):
            for tok in line.split():
                try:
                    out.append(float(tok))
                except ValueError:
                    raise ParseError(f"{path}: bad number {tok!r}", line=lineno) from None
        return out

    if kind == "linear":
        vals = numbers(1)
        if len(vals) < 3:
            raise ParseError(f"{path}: linear model needs >= 2 weights plus a bias", line=2)
        return LinearModel(np.array(vals[:-1]), bias=vals[-1], sigmoid=sigmoid).as_handle()

    if kind == "mlp":
        if len(lines) < 2:
            raise ParseError(f"{path}: mlp model missing layer widths", line=2)
        try:
            dims = [int(tok) for tok in lines[1].split()]
        except ValueError:
            raise ParseError(f"{path}: layer widths must be integers", line=2) from None
        if len(dims) < 2 or any(w < 1 for w in dims) or dims[-1] != 1:
            raise ParseError(f"{path}: layer widths must be >= 1 and end in 1", line=2)
        vals = numbers(2)
        need = sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))
        if len(vals) != need:
            raise ParseError(f"{path}: expected {need} mlp parameters, found {len(vals)}", line=3)
        layers = []
        pos = 0
        flat = np.array(vals)
        for i in range(len(dims) - 1):
            w = flat[pos:pos + dims[i] * dims[i + 1]].reshape(dims[i], dims[i + 1])
            pos += dims[i] * dims[i + 1]
            b = flat[pos:pos + dims[i + 1]]
            pos += dims[i + 1]
            layers.append((w, b))
        return MLPModel(layers, sigmoid=sigmoid).as_handle()

    raise ParseError(f"{path}: unknown model kind {kind!r}", line=1)
