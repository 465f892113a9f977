"""Command-line front end: run one procedure, or a Monte Carlo experiment sweep.

Exit codes: 0 on success, 2 when the only problem is an exhausted sampling
budget (the procedure ran but could not certify all requested ranks), 1 on
errors. Reports written with --out are byte-identical across reruns with the
same seed.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import StableRankError
from .experiments import ExperimentConfig, run_experiment
from .globalrank import load_attributions, verify_global_ranks
from .lime import slime_select
from .models import load_dataset
from .rankshap import SamplingBudget, rankshap
from .sprt import sprt_shap
from .verify import VerifiedRanking

PROG = "attr"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are errors, not budget statuses
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def _dump(payload: dict, out: str | None) -> None:
    text = json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _ranking_payload(ranking: VerifiedRanking) -> dict:
    return {
        "K": ranking.K,
        "order": ranking.order.tolist(),
        "steps": [{"k": s.k, "statistic": s.statistic, "df": s.df,
                   "threshold": s.threshold, "rejected": s.rejected}
                  for s in ranking.steps],
    }


def _add_common(parser):
    parser.add_argument("--dataset", help="background dataset CSV")
    parser.add_argument("--model", help="plain-text weights file (linear or mlp)")
    parser.add_argument("--bridge-cmd", help="external model server command")
    parser.add_argument("--k", type=int, default=2)
    parser.add_argument("--alpha", default="0.1",
                        help="significance level; comma-separated list for sweeps")
    parser.add_argument("--mode", choices=["inference", "reproducibility"],
                        default="inference")
    parser.add_argument("--abs", action="store_true", dest="absolute",
                        help="rank attributions by absolute value")
    parser.add_argument("--n", type=int, help="permutations or coalitions per estimate")
    parser.add_argument("--n0", type=int, help="initial sample count")
    parser.add_argument("--max-n", type=int, dest="max_n", help="per-feature sample cap")
    parser.add_argument("--buffer", type=float, default=1.1, help="planning buffer factor")
    parser.add_argument("--scheme", choices=["equal", "variance-proportional"],
                        default="variance-proportional")
    parser.add_argument("--batch", type=int, default=500, help="samples between tests")
    parser.add_argument("--beta", type=float, default=0.2, help="type II error rate")
    parser.add_argument("--m", type=int, default=10, help="imputation fills per coalition")
    parser.add_argument("--tol", type=float, default=1e-4, help="selection-gap tolerance")
    parser.add_argument("--backend", choices=["sampling", "kernelshap"], default="sampling")
    parser.add_argument("--input-row", type=int, default=0, dest="input_row",
                        help="dataset row to explain (single-run verbs)")
    parser.add_argument("--reps", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", help="write the machine-readable report here")


def build_parser() -> _Parser:
    parser = _Parser(prog=PROG, description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, text in [
        ("retro", "estimate attributions and verify their ranking retrospectively"),
        ("rankshap", "adaptive top-K Shapley sampling with an FWER guarantee"),
        ("sprt", "sequential top-K verification with continual sampling"),
        ("slime", "tested K-feature selection for a local linear explanation"),
        ("global", "verify a global importance ranking from a local-attribution CSV"),
        ("experiment", "Monte Carlo error-rate sweep over inputs and repetitions"),
    ]:
        p = sub.add_parser(verb, help=text)
        _add_common(p)
        if verb == "global":
            p.add_argument("--attributions", required=True,
                           help="local-attribution CSV (input_id,feature_0,...)")
        if verb == "experiment":
            p.add_argument("--procedure", required=True,
                           choices=["retro", "rankshap", "sprt", "slime", "global"])
            p.add_argument("--inputs", default="1",
                           help="input count, or comma-separated row indices")
            p.add_argument("--na-threshold", type=float, default=0.75,
                           dest="na_threshold")
    return parser


def _alphas(arg: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in str(arg).split(","))


def _load_pair(args):
    if not args.dataset:
        raise StableRankError("--dataset is required")
    dataset = load_dataset(args.dataset)
    if args.bridge_cmd:
        from .bridge import connect_bridge

        model = connect_bridge(args.bridge_cmd, dataset.n_features)
    elif args.model:
        from .models import load_model

        model = load_model(args.model)
    else:
        raise StableRankError("either --model or --bridge-cmd is required")
    return dataset, model


def _cmd_retro(args) -> int:
    from .experiments import _retro_rep
    from .verify import verify_ranks

    dataset, model = _load_pair(args)
    x = dataset.values[args.input_row]
    cfg = ExperimentConfig(procedure="retro", dataset=args.dataset, model=args.model,
                           backend=args.backend, n=args.n, m=args.m,
                           absolute=args.absolute)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    attrs = _retro_rep(cfg, model, dataset, x, rng)
    alpha = _alphas(args.alpha)[0]
    ranking = verify_ranks(attrs, alpha, args.mode)
    payload = {"procedure": "retro", "alpha": alpha, "mode": args.mode,
               "estimates": attrs.estimates.tolist(),
               "ranking_mode": attrs.ranking_mode,
               "ranking": _ranking_payload(ranking), "seed": args.seed}
    _dump(payload, args.out)
    print(f"verified K={ranking.K} of {dataset.n_features - 1} possible ranks "
          f"at alpha={alpha}")
    return 0


def _cmd_rankshap(args) -> int:
    dataset, model = _load_pair(args)
    x = dataset.values[args.input_row]
    budget = SamplingBudget(n0=args.n0 or 100, max_n=args.max_n or 10_000,
                            buffer_c=args.buffer, scheme=args.scheme, mode=args.mode)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    alpha = _alphas(args.alpha)[0]
    res = rankshap(model, x, args.k, alpha, budget, dataset, args.m, rng,
                   ranking_mode="absolute" if args.absolute else "signed")
    payload = {"procedure": "rankshap", "alpha": alpha, "k": args.k,
               "estimates": res.attrs.estimates.tolist(),
               "ranking": _ranking_payload(res.ranking),
               "converged": res.converged,
               "per_feature_permutations": res.per_feature_permutations.tolist(),
               "total_permutations": res.total_permutations, "seed": args.seed}
    _dump(payload, args.out)
    status = "converged" if res.converged else "budget exhausted"
    print(f"rankshap {status}: K={res.ranking.K} verified, "
          f"{res.total_permutations} permutations drawn")
    return 0 if res.converged else 2


def _cmd_sprt(args) -> int:
    dataset, model = _load_pair(args)
    x = dataset.values[args.input_row]
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    alpha = _alphas(args.alpha)[0]
    res, state = sprt_shap(
        model, x, args.k, alpha, beta=args.beta, batch_size=args.batch,
        max_total=args.max_n or 50_000,
        estimator="kernelshap" if args.backend == "kernelshap" else "shapley-sampling",
        background=dataset, m=args.m, rng=rng,
        ranking_mode="absolute" if args.absolute else "signed")
    payload = {"procedure": "sprt", "alpha": alpha, "beta": args.beta, "k": args.k,
               "estimates": res.attrs.estimates.tolist(),
               "decisions": state.decisions, "ratios": state.last_ratios,
               "ranking": _ranking_payload(res.ranking),
               "converged": res.converged,
               "total_samples": state.total_samples, "seed": args.seed}
    _dump(payload, args.out)
    status = "converged" if res.converged else "stopped without certifying all ranks"
    print(f"sprt {status}: decisions={state.decisions}, {state.total_samples} samples")
    return 0 if res.converged else 2


def _cmd_slime(args) -> int:
    dataset, model = _load_pair(args)
    x = dataset.values[args.input_row]
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    alpha = _alphas(args.alpha)[0]
    trace = slime_select(model, x, args.k, alpha, dataset,
                         n0=args.n0 or 1000, max_n=args.max_n or 100_000,
                         tol=args.tol, rng=rng)
    payload = {"procedure": "slime", "alpha": alpha, "k": args.k,
               "selected": trace.ordered_features,
               "steps": [{"feature": s.feature, "statistic": s.statistic,
                          "threshold": s.threshold, "n_samples": s.n_samples,
                          "by_tolerance": s.by_tolerance} for s in trace.per_step],
               "converged": trace.converged, "n_samples": trace.n_samples,
               "seed": args.seed}
    _dump(payload, args.out)
    status = "converged" if trace.converged else "budget exhausted"
    print(f"slime {status}: selected {trace.ordered_features} "
          f"with {trace.n_samples} samples")
    return 0 if trace.converged else 2


def _cmd_global(args) -> int:
    psi = load_attributions(args.attributions)
    alpha = _alphas(args.alpha)[0]
    ranking = verify_global_ranks(None, psi, alpha, args.mode,
                                  "absolute" if args.absolute else "signed")
    from .globalrank import global_scores

    scores = global_scores(psi)
    payload = {"procedure": "global", "alpha": alpha, "mode": args.mode,
               "theta": scores.theta.tolist(), "counts": scores.counts.tolist(),
               "ranking": _ranking_payload(ranking)}
    _dump(payload, args.out)
    print(f"verified K={ranking.K} global ranks at alpha={alpha}")
    return 0


def _cmd_experiment(args) -> int:
    inputs: int | tuple[int, ...]
    if "," in args.inputs:
        inputs = tuple(int(tok) for tok in args.inputs.split(","))
    else:
        inputs = int(args.inputs)
    config = ExperimentConfig(
        procedure=args.procedure, dataset=args.dataset, model=args.model,
        bridge_cmd=args.bridge_cmd, k=args.k, alphas=_alphas(args.alpha),
        mode=args.mode, absolute=args.absolute, backend=args.backend,
        n=args.n, n0=args.n0, max_n=args.max_n, buffer_c=args.buffer,
        scheme=args.scheme, batch=args.batch, beta=args.beta, m=args.m,
        tol=args.tol, reps=args.reps, inputs=inputs, seed=args.seed,
        na_threshold=args.na_threshold)
    report = run_experiment(config)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report.to_json() + "\n")
        base = args.out[:-5] if args.out.endswith(".json") else args.out
        with open(base + ".txt", "w") as fh:
            fh.write(report.to_text())
        with open(base + "_series.csv", "w") as fh:
            fh.write(report.series_csv())
    sys.stdout.write(report.to_text())
    return report.exit_status


_COMMANDS = {
    "retro": _cmd_retro,
    "rankshap": _cmd_rankshap,
    "sprt": _cmd_sprt,
    "slime": _cmd_slime,
    "global": _cmd_global,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.verb](args)
    except (StableRankError, OSError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
