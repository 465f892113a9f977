"""Monte Carlo experiment harness: repeated runs, error counting, reports.

For each selected input the configured procedure is repeated R times with
derived seeds; a repetition errs when the ranks it certifies disagree with
the ground-truth ordering (exact enumeration when feasible, otherwise a
high-budget reference run). Non-converged repetitions are reported as NA and
excluded from both sides of the FWER ratio; inputs whose convergence rate
falls below a threshold are flagged and left out of the aggregate row.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .globalrank import LocalAttributionMatrix, verify_global_ranks
from .kernelshap import (bootstrap_covariance, default_coalition_budget,
                         evaluate_coalitions, kernelshap_fit, sample_coalitions)
from .lime import _perturb_arrays, _standardize, lasso_entry_order, slime_select
from .models import (ModelHandle, TabularDataset, eval_model, load_dataset,
                     load_model)
from .rankshap import SamplingBudget, rankshap
from .sampling import exact_shapley, shapley_sampling, shapley_sampling_all
from .sprt import sprt_shap
from .verify import AttributionSet, verify_ranks

PROCEDURES = ("retro", "rankshap", "sprt", "slime", "global")

WORKERS_ENV = "ATTR_WORKERS"


@dataclass
class ExperimentConfig:
    """Everything a sweep needs; ``seed`` fixes the entire run."""

    procedure: str
    dataset: str
    model: str | None = None
    bridge_cmd: str | None = None
    k: int = 2
    alphas: tuple[float, ...] = (0.1,)
    mode: str = "inference"
    absolute: bool = False
    backend: str = "sampling"  # retro and sprt: sampling | kernelshap
    n: int | None = None       # permutations (sampling) or coalitions (kernelshap)
    n0: int | None = None
    max_n: int | None = None
    buffer_c: float = 1.1
    scheme: str = "variance-proportional"
    batch: int = 500
    beta: float = 0.2
    m: int = 10
    tol: float = 1e-4
    reps: int = 100
    inputs: int | tuple[int, ...] = 1
    seed: int = 0
    na_threshold: float = 0.75

    def validate(self):
        if self.procedure not in PROCEDURES:
            raise ConfigError(f"unknown procedure {self.procedure!r}")
        if self.model is None and self.bridge_cmd is None:
            raise ConfigError("either model or bridge_cmd is required")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if not self.alphas or not all(0.0 < a < 1.0 for a in self.alphas):
            raise ConfigError("alphas must lie in (0, 1)")
        if self.backend not in ("sampling", "kernelshap"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.mode not in ("inference", "reproducibility"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        return self


@dataclass
class ExperimentReport:
    """Machine-readable sweep results plus human-oriented renderings."""

    config: dict
    per_input: list[dict]
    aggregate: list[dict]
    series: dict = field(default_factory=dict)
    exit_status: int = 0

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "per_input": self.per_input,
            "aggregate": self.aggregate,
            "series": self.series,
            "exit_status": self.exit_status,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def to_text(self) -> str:
        lines = [f"procedure={self.config['procedure']} reps={self.config['reps']} "
                 f"seed={self.config['seed']}"]
        lines.append(f"{'input':>8} {'alpha':>7} {'fwer':>8} {'errors':>7} "
                     f"{'used':>5} {'na':>4} {'excluded':>9}")
        for row in self.per_input:
            fwer = "NA" if row["fwer"] is None else f"{row['fwer']:.4f}"
            lines.append(f"{row['input_row']:>8} {row['alpha']:>7.3g} {fwer:>8} "
                         f"{row['errors']:>7} {row['used_reps']:>5} {row['na_reps']:>4} "
                         f"{str(row['excluded']):>9}")
        for row in self.aggregate:
            fwer = "NA" if row["fwer_mean"] is None else f"{row['fwer_mean']:.4f}"
            lines.append(f"aggregate alpha={row['alpha']:.3g} fwer_mean={fwer} "
                         f"inputs_used={row['inputs_used']}")
        return "\n".join(lines) + "\n"

    def series_csv(self) -> str:
        lines = ["series,key,index,value"]
        for name in sorted(self.series):
            table = self.series[name]
            for key in sorted(table):
                for i, value in enumerate(table[key]):
                    lines.append(f"{name},{key},{i},{value}")
        return "\n".join(lines) + "\n"


def _rng_for(seed: int, input_pos: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(input_pos, rep)))


def _order_of(values: np.ndarray, absolute: bool) -> np.ndarray:
    ranked = np.abs(values) if absolute else values
    return np.argsort(-ranked, kind="stable")


def _prefix_error(order: np.ndarray, truth: np.ndarray, k: int) -> bool:
    return bool(np.any(order[:k] != truth[:k]))


def load_config_model(config: ExperimentConfig, dataset: TabularDataset) -> ModelHandle:
    if config.bridge_cmd is not None:
        from .bridge import connect_bridge

        return connect_bridge(config.bridge_cmd, dataset.n_features)
    return load_model(config.model)


def truth_shapley_order(model: ModelHandle, x, background: TabularDataset,
                        absolute: bool, reference_n: int = 100_000,
                        seed: int = 0) -> tuple[np.ndarray, bool]:
    """Ground-truth ordering; exact for d <= 12, else a high-budget reference."""
    d = background.n_features
    if d <= 12:
        phi = exact_shapley(model, x, background)
        return _order_of(phi, absolute), True
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7_777,)))
    ests = [shapley_sampling(model, x, j, reference_n, background, 10, rng.spawn(1)[0])
            for j in range(d)]
    phi = np.array([e.mean for e in ests])
    return _order_of(phi, absolute), False


def _truth_slime_order(model: ModelHandle, x, k: int, background: TabularDataset,
                       max_n: int, seed: int) -> list[int]:
    """Reference selection order from one pool ten times the procedure cap."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(8_888,)))
    n_ref = min(10 * max_n, 1_000_000)
    masks, weights, labels, _ = _perturb_arrays(model, x, n_ref, background, rng)
    design, response = _standardize(masks, weights, labels)
    return lasso_entry_order(design, response, k)


def _retro_rep(config, model, background, x, rng):
    d = background.n_features
    if config.backend == "sampling":
        n = config.n or 2048
        ests = shapley_sampling_all(model, x, n, background, config.m, rng)
        attrs = AttributionSet(
            estimates=np.array([e.mean for e in ests]), per_feature=ests,
            ranking_mode="absolute" if config.absolute else "signed")
    else:
        n = config.n or default_coalition_budget(d)
        masks = sample_coalitions(d, n, rng)
        values = evaluate_coalitions(model, x, masks, background, config.m, rng)
        v_empty = float(eval_model(model, background.values).mean())
        v_full = float(eval_model(model, np.asarray(x)[None, :])[0])
        phi = kernelshap_fit((masks, values), v_empty, v_full)
        cov = bootstrap_covariance((masks, values), v_empty, v_full, rng=rng)
        attrs = AttributionSet(estimates=phi, covariance=cov, n_shared=n,
                               ranking_mode="absolute" if config.absolute else "signed")
    return attrs


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run the configured sweep and assemble the deterministic report."""
    config.validate()
    dataset = load_dataset(config.dataset)
    model = load_config_model(config, dataset)
    if config.procedure == "global":
        return _run_global(config, dataset, model)

    if isinstance(config.inputs, int):
        picker = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(9_999,)))
        input_rows = picker.choice(dataset.n_rows, size=min(config.inputs, dataset.n_rows),
                                   replace=False)
    else:
        input_rows = np.asarray(config.inputs, dtype=np.int64)
    background = dataset

    truths = {}
    for pos, row in enumerate(input_rows):
        x = dataset.values[row]
        if config.procedure == "slime":
            truths[pos] = _truth_slime_order(model, x, config.k, background,
                                             config.max_n or 100_000, config.seed)
        else:
            truths[pos], _ = truth_shapley_order(model, x, background, config.absolute,
                                                 seed=config.seed)

    def one_rep(pos: int, rep: int) -> dict:
        rng = _rng_for(config.seed, pos, rep)
        x = dataset.values[input_rows[pos]]
        truth = truths[pos]
        if config.procedure == "retro":
            attrs = _retro_rep(config, model, background, x, rng)
            outcomes = []
            for alpha in config.alphas:
                ranking = verify_ranks(attrs, alpha, config.mode)
                outcomes.append({
                    "alpha": alpha, "converged": True, "k_verified": ranking.K,
                    "error": _prefix_error(ranking.order, truth, ranking.K),
                })
            return {"outcomes": outcomes}
        if config.procedure == "rankshap":
            budget = SamplingBudget(n0=config.n0 or 100, max_n=config.max_n or 10_000,
                                    buffer_c=config.buffer_c, scheme=config.scheme,
                                    mode=config.mode)
            res = rankshap(model, x, config.k, config.alphas[0], budget, background,
                           config.m, rng,
                           ranking_mode="absolute" if config.absolute else "signed")
            return {"outcomes": [{
                "alpha": config.alphas[0], "converged": res.converged,
                "k_verified": res.ranking.K,
                "error": res.converged and _prefix_error(res.ranking.order, truth, config.k),
            }], "counts": res.per_feature_permutations.tolist()}
        if config.procedure == "sprt":
            res, _state = sprt_shap(
                model, x, config.k, config.alphas[0], beta=config.beta,
                batch_size=config.batch, max_total=config.max_n or 50_000,
                estimator="kernelshap" if config.backend == "kernelshap" else "shapley-sampling",
                background=background, m=config.m, rng=rng,
                ranking_mode="absolute" if config.absolute else "signed")
            return {"outcomes": [{
                "alpha": config.alphas[0], "converged": res.converged,
                "k_verified": res.ranking.K,
                "error": res.converged and _prefix_error(res.ranking.order, truth, config.k),
            }], "counts": res.per_feature_permutations.tolist()}
        if config.procedure == "slime":
            trace = slime_select(model, x, config.k, config.alphas[0], background,
                                 n0=config.n0 or 1000, max_n=config.max_n or 100_000,
                                 tol=config.tol, rng=rng)
            return {"outcomes": [{
                "alpha": config.alphas[0], "converged": trace.converged,
                "k_verified": len(trace.ordered_features),
                "error": trace.converged and list(trace.ordered_features) != list(truth[:config.k]),
            }]}
        raise ConfigError(f"unhandled procedure {config.procedure!r}")

    tasks = [(pos, rep) for pos in range(len(input_rows)) for rep in range(config.reps)]
    workers = int(os.environ.get(WORKERS_ENV, "1") or "1")
    results: dict[tuple[int, int], dict] = {}
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for (pos, rep), out in zip(tasks, pool.map(lambda t: one_rep(*t), tasks)):
                results[(pos, rep)] = out
    else:
        for pos, rep in tasks:
            results[(pos, rep)] = one_rep(pos, rep)

    return _assemble_report(config, input_rows, results)


def _assemble_report(config, input_rows, results) -> ExperimentReport:
    per_input = []
    series: dict[str, dict] = {}
    counts_series: dict[str, list] = {}
    k_series: dict[str, list] = {}

    for pos, row in enumerate(input_rows):
        reps = [results[(pos, rep)] for rep in range(config.reps)]
        for a_idx, alpha in enumerate(config.alphas):
            outs = [r["outcomes"][a_idx] for r in reps if a_idx < len(r["outcomes"])]
            used = [o for o in outs if o["converged"]]
            na = len(outs) - len(used)
            errors = sum(1 for o in used if o["error"])
            fwer = errors / len(used) if used else None
            excluded = len(used) < config.na_threshold * len(outs)
            per_input.append({
                "input_row": int(row), "alpha": float(alpha), "errors": int(errors),
                "used_reps": len(used), "na_reps": int(na),
                "fwer": fwer, "excluded": bool(excluded),
                "k_verified_mean": (sum(o["k_verified"] for o in used) / len(used))
                if used else None,
            })
            k_series[f"input{row}_alpha{alpha:g}"] = [o["k_verified"] for o in outs]
        if any("counts" in r for r in reps):
            mat = np.array([r["counts"] for r in reps if "counts" in r])
            for j in range(mat.shape[1]):
                counts_series[f"input{row}_feature{j}"] = mat[:, j].tolist()

    aggregate = []
    for alpha in config.alphas:
        rows = [r for r in per_input if r["alpha"] == float(alpha) and not r["excluded"]
                and r["fwer"] is not None]
        fwer_mean = sum(r["fwer"] for r in rows) / len(rows) if rows else None
        aggregate.append({"alpha": float(alpha), "fwer_mean": fwer_mean,
                          "inputs_used": len(rows)})

    if counts_series:
        series["permutation_counts"] = counts_series
    series["k_verified"] = k_series
    exit_status = 2 if any(r["na_reps"] > 0 for r in per_input) else 0
    return ExperimentReport(config=_config_dict(config), per_input=per_input,
                            aggregate=aggregate, series=series, exit_status=exit_status)


def _run_global(config: ExperimentConfig, dataset: TabularDataset,
                model: ModelHandle) -> ExperimentReport:
    """Global sweep: per rep, estimate local attributions on sampled inputs and
    verify the global ranking against exact per-input enumeration."""
    d = dataset.n_features
    n_inputs = config.inputs if isinstance(config.inputs, int) else len(config.inputs)
    n_inputs = max(2, n_inputs)
    n_perms = config.n or 128

    phi_exact = np.array([exact_shapley(model, dataset.values[i], dataset)
                          for i in range(dataset.n_rows)])
    truth_theta = phi_exact.mean(axis=0)
    truth = _order_of(truth_theta, config.absolute)

    results = {}
    for rep in range(config.reps):
        rng = _rng_for(config.seed, 0, rep)
        rows = rng.integers(0, dataset.n_rows, size=n_inputs)
        psi = np.empty((n_inputs, d))
        for i, row in enumerate(rows):
            streams = rng.spawn(d)
            for j in range(d):
                psi[i, j] = shapley_sampling(model, dataset.values[row], j, n_perms,
                                             dataset, config.m, streams[j]).mean
        mat = LocalAttributionMatrix(psi)
        outcomes = []
        for alpha in config.alphas:
            ranking = verify_global_ranks(None, mat, alpha, config.mode,
                                          "absolute" if config.absolute else "signed")
            outcomes.append({"alpha": alpha, "converged": True,
                             "k_verified": ranking.K,
                             "error": _prefix_error(ranking.order, truth, ranking.K)})
        results[(0, rep)] = {"outcomes": outcomes}

    return _assemble_report(config, np.array([-1]), results)


def _config_dict(config: ExperimentConfig) -> dict:
    out = asdict(config)
    out["alphas"] = [float(a) for a in config.alphas]
    if not isinstance(out["inputs"], int):
        out["inputs"] = [int(i) for i in out["inputs"]]
    return out
