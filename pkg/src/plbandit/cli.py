"""Command-line front end: generate, train, sweep, evaluate, verify.

Outputs are machine-readable (JSON reports, CSV sweep tables); plotting is out
of scope. Exit codes: 0 success, 2 validation/usage error, 3 verification
failure, 1 anything else. Sweep rows may be computed concurrently (capped by
the OPO_THREADS environment variable) but are always written in grid order.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import continuous as cont
from . import csc, estimators, simulator, verify
from .model import (
    Context,
    DeterministicPolicy,
    LoggedDataset,
    PolicyClass,
    RowDeterministicPolicy,
    TabularPolicy,
    class_stats,
    deterministic_class,
    load_dataset_jsonl,
    save_dataset_jsonl,
    validate_dataset,
)


class UsageError(Exception):
    pass


BUILTIN_ENVS = ("hard", "demo", "demo-continuous")


def _resolve_env(spec: str, seed: int):
    if spec == "hard":
        return simulator.hard_instance(num_contexts=2, num_actions=3, spurious_propensity=0.01, seed=seed)
    if spec == "demo":
        return simulator.random_environment((seed, 101), num_contexts=4, num_actions=3)
    if spec == "demo-continuous":
        return simulator.random_continuous_environment((seed, 202), num_contexts=3)
    path = Path(spec)
    if not path.exists():
        raise UsageError(f"unknown environment '{spec}' (builtin names: {', '.join(BUILTIN_ENVS)})")
    return simulator.load_environment(path)


def _policy_to_json(policy, dataset: LoggedDataset | None = None) -> dict:
    if isinstance(policy, DeterministicPolicy):
        return {
            "type": "deterministic",
            "assignment": list(policy.assignment),
            "num_actions": policy.num_actions,
        }
    if isinstance(policy, RowDeterministicPolicy):
        return {"type": "row_deterministic", "actions": list(policy.actions), "num_actions": policy.num_actions}
    if isinstance(policy, TabularPolicy):
        return {"type": "tabular", "table": [[float(v) for v in row] for row in policy.table]}
    if dataset is not None:
        # Feature-mode learners are frozen as their per-row action choices.
        rows = policy.pmf_rows(dataset)
        return {
            "type": "row_deterministic",
            "actions": [int(a) for a in np.argmax(rows, axis=1)],
            "num_actions": dataset.num_actions,
        }
    raise UsageError(f"cannot serialize policy of type {type(policy).__name__}")


def _policy_from_json(obj: dict):
    kind = obj["type"]
    if kind == "deterministic":
        return DeterministicPolicy(assignment=tuple(obj["assignment"]), num_actions=int(obj["num_actions"]))
    if kind == "row_deterministic":
        return RowDeterministicPolicy(actions=tuple(obj["actions"]), num_actions=int(obj["num_actions"]))
    if kind == "tabular":
        return TabularPolicy(table=np.array(obj["table"], dtype=float))
    raise UsageError(f"unknown policy type '{kind}'")


def _load_policy_class(spec: str, dataset: LoggedDataset) -> PolicyClass:
    if spec == "all-det":
        if dataset.context_ids is None:
            raise UsageError("--class all-det needs a finite-context dataset")
        num = dataset.num_actions**dataset.num_contexts
        if num > 200_000:
            raise UsageError(f"all-det class would have {num} members; supply an explicit class file")
        return deterministic_class(dataset.num_contexts, dataset.num_actions)
    path = Path(spec)
    if not path.exists():
        raise UsageError(f"policy class '{spec}' is neither 'all-det' nor a file")
    with open(path) as fh:
        obj = json.load(fh)
    return PolicyClass.from_members([_policy_from_json(p) for p in obj["policies"]])


def _make_oracle(name: str, ridge: float, dataset: LoggedDataset):
    if name == "enum":
        return csc.EnumerationOracle()
    if name == "argmin":
        return csc.PointwiseArgminOracle(num_contexts=dataset.num_contexts)
    return csc.RidgeRegressionOracle(ridge=ridge)


def _dataset_metrics(policy, dataset: LoggedDataset, beta: float) -> dict:
    return {
        "beta": beta,
        "ipw_risk": estimators.ipw_risk(policy, dataset),
        "pseudo_loss": estimators.pseudo_loss(policy, dataset),
        "objective": estimators.penalized_objective(policy, dataset, beta),
    }


def _write_json(obj: dict, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def cmd_generate(args) -> int:
    if args.n < 1:
        raise UsageError("n must be >= 1")
    env = _resolve_env(args.env, args.seed)
    data = simulator.generate_logs(env, args.n, seed=args.seed)
    metadata = {"seed": args.seed, "rng": "philox", "env": args.env}
    dataset_path = f"{args.out}.dataset.jsonl"
    env_path = f"{args.out}.env.json"
    if isinstance(data, LoggedDataset):
        save_dataset_jsonl(data, dataset_path, metadata=metadata)
    else:
        cont.save_continuous_dataset_jsonl(data, dataset_path, metadata=metadata)
    simulator.save_environment(env, env_path, metadata=metadata)
    print(dataset_path)
    print(env_path)
    return 0


def _is_continuous_file(path: str) -> bool:
    with open(path) as fh:
        header = json.loads(fh.readline())
    return header.get("header", {}).get("action_space") == "unit_interval"


def cmd_train(args) -> int:
    dataset = load_dataset_jsonl(args.dataset)
    violations = validate_dataset(dataset)
    if violations:
        raise UsageError(f"invalid dataset: {violations[0]} (+{len(violations) - 1} more)")
    pclass = _load_policy_class(args.policy_class, dataset) if args.oracle == "enum" else None
    oracle = _make_oracle(args.oracle, args.ridge, dataset)
    policy, objective = csc.train_ipw_pl(dataset, args.beta, oracle, pclass)
    metrics = _dataset_metrics(policy, dataset, args.beta)
    metrics["oracle"] = args.oracle
    if args.alpha is not None and pclass is not None and dataset.context_ids is not None:
        contexts = [Context(id=x) for x in sorted(set(int(i) for i in dataset.context_ids))]
        stats = class_stats(pclass, _empirical_logging_policy(dataset), contexts)
        slack = estimators.confidence_slack(stats, dataset.n, args.alpha, args.beta)
        metrics["ucb_risk"] = objective + slack.value
        metrics["slack"] = slack.as_dict()
    if args.env is not None:
        metrics["exact_risk"] = simulator.exact_risk(policy, _resolve_env(args.env, args.seed))
    _write_json(_policy_to_json(policy, dataset), f"{args.out}.policy.json")
    _write_json(metrics, f"{args.out}.metrics.json")
    print(f"{args.out}.policy.json")
    print(f"{args.out}.metrics.json")
    return 0


def _empirical_logging_policy(dataset: LoggedDataset) -> TabularPolicy:
    # Logged propensity rows are exact logging pmfs, so any record of a context
    # reproduces its logging row.
    table = np.full((dataset.num_contexts, dataset.num_actions), 1.0 / dataset.num_actions)
    table[dataset.context_ids] = dataset.propensities
    return TabularPolicy(table)


def cmd_evaluate(args) -> int:
    dataset = load_dataset_jsonl(args.dataset)
    with open(args.policy) as fh:
        policy = _policy_from_json(json.load(fh))
    metrics = _dataset_metrics(policy, dataset, args.beta)
    if args.env is not None:
        metrics["exact_risk"] = simulator.exact_risk(policy, _resolve_env(args.env, args.seed))
    if args.out:
        _write_json(metrics, args.out)
    print(json.dumps(metrics, sort_keys=True))
    return 0


SWEEP_COLUMNS = ["beta", "k", "h", "objective", "pl_hat", "ucb_risk", "exact_risk"]


def cmd_sweep(args) -> int:
    threads = max(1, int(os.environ.get("OPO_THREADS", "1")))
    if args.h_grid_m is not None:
        rows = _continuous_sweep(args, threads)
    else:
        rows = _discrete_sweep(args, threads)
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    print(args.out)
    return 0


def _discrete_sweep(args, threads: int) -> list[dict]:
    if args.beta_grid is None:
        raise UsageError("discrete sweep needs --beta-grid")
    dataset = load_dataset_jsonl(args.dataset)
    pclass = _load_policy_class(args.policy_class, dataset) if args.oracle == "enum" else None
    oracle = _make_oracle(args.oracle, args.ridge, dataset)
    env = _resolve_env(args.env, args.seed) if args.env else None
    stats = None
    if args.alpha is not None and pclass is not None and dataset.context_ids is not None:
        contexts = [Context(id=x) for x in sorted(set(int(i) for i in dataset.context_ids))]
        stats = class_stats(pclass, _empirical_logging_policy(dataset), contexts)

    def one(beta: float) -> dict:
        policy, objective = csc.train_ipw_pl(dataset, beta, oracle, pclass)
        row = {
            "beta": beta,
            "k": "",
            "h": "",
            "objective": objective,
            "pl_hat": estimators.pseudo_loss(policy, dataset),
            "ucb_risk": "",
            "exact_risk": "",
        }
        if stats is not None:
            row["ucb_risk"] = objective + estimators.confidence_slack(stats, dataset.n, args.alpha, beta).value
        if env is not None:
            row["exact_risk"] = simulator.exact_risk(policy, env)
        return row

    betas = _parse_grid(args.beta_grid)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, betas))


def _continuous_sweep(args, threads: int) -> list[dict]:
    dataset = cont.load_continuous_dataset_jsonl(args.dataset)
    env = _resolve_env(args.env, args.seed) if args.env else None
    alpha = args.alpha if args.alpha is not None else 0.05
    beta = args.beta
    mu_inf = dataset.min_logging_density

    def one(h: float) -> dict:
        k = args.k if args.k is not None else cont.suggest_k(dataset.n, mu_inf, h, alpha)
        grid = cont.SurrogateGrid(k)
        costs = cont.build_modified_costs_continuous(dataset, grid, h, beta)
        chosen = csc.PointwiseArgminOracle(num_contexts=dataset.num_contexts).solve(costs)
        table = np.eye(k)[np.asarray(chosen.assignment)]
        policy = cont.smooth(cont.GridMassPolicy(grid=grid, table=table), h)
        objective = cont.continuous_penalized_objective(policy, dataset, beta)
        stats_slack = estimators.confidence_slack(
            _smoothed_stats(h, mu_inf, k, dataset.num_contexts), dataset.n, alpha, beta
        )
        row = {
            "beta": beta,
            "k": k,
            "h": h,
            "objective": objective,
            "pl_hat": cont.continuous_pseudo_loss(policy, dataset),
            "ucb_risk": objective + stats_slack.value,
            "exact_risk": "",
        }
        if env is not None:
            row["exact_risk"] = simulator.exact_risk(policy, env)
        return row

    grid_h = cont.h_grid(args.h_grid_m)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, grid_h))


def _smoothed_stats(h: float, mu_inf: float, k: int, num_contexts: int):
    from .model import ClassStats

    return ClassStats(
        pmf_sup=2.0 / h,
        mu_pmf_inf=mu_inf,
        weight_ratio_sup=2.0 / (h * mu_inf),
        class_size=k**num_contexts,
    )


def cmd_verify(args) -> int:
    env = _resolve_env(args.env, args.seed)
    dataset = load_dataset_jsonl(args.dataset) if args.dataset else None
    cfg = verify.VerifyConfig(
        env=env, reps=args.reps, alpha=args.alpha, seed=args.seed, n=args.n, dataset=dataset
    )
    report = verify.run_verification(cfg)
    for check in report["checks"]:
        print(("PASS " if check["passed"] else "FAIL ") + check["name"])
    if args.out:
        _write_json(report, args.out)
    else:
        print(json.dumps(report, sort_keys=True))
    return 0 if report["passed"] else 3


def _parse_grid(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as err:
        raise UsageError(f"bad grid '{text}'") from err
    if not values:
        raise UsageError("grid must be non-empty")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plbandit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="simulate a logged dataset from an environment")
    gen.add_argument("--env", required=True, help="builtin name (hard, demo) or env JSON path")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True, help="output prefix")
    gen.set_defaults(func=cmd_generate)

    train = sub.add_parser("train", help="minimize ipw_risk + beta * pseudo_loss via a CSC oracle")
    train.add_argument("--dataset", required=True)
    train.add_argument("--class", dest="policy_class", default="all-det")
    train.add_argument("--oracle", choices=["enum", "argmin", "regression"], default="enum")
    train.add_argument("--ridge", type=float, default=1e-6)
    train.add_argument("--beta", type=float, required=True)
    train.add_argument("--alpha", type=float, default=None)
    train.add_argument("--env", default=None, help="adds exact risk to the metrics")
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--out", required=True, help="output prefix")
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("evaluate", help="recompute metrics for a saved policy")
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--policy", required=True)
    ev.add_argument("--beta", type=float, required=True)
    ev.add_argument("--env", default=None)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--out", default=None)
    ev.set_defaults(func=cmd_evaluate)

    sweep = sub.add_parser("sweep", help="grid sweep; CSV row per grid point")
    sweep.add_argument("--dataset", required=True)
    sweep.add_argument("--class", dest="policy_class", default="all-det")
    sweep.add_argument("--oracle", choices=["enum", "argmin", "regression"], default="enum")
    sweep.add_argument("--ridge", type=float, default=1e-6)
    sweep.add_argument("--beta-grid", default=None, help="comma-separated betas (discrete mode)")
    sweep.add_argument("--beta", type=float, default=0.1, help="fixed beta (continuous mode)")
    sweep.add_argument("--k", type=int, default=None, help="grid size; default suggests per bandwidth")
    sweep.add_argument("--h-grid-m", type=int, default=None, help="bandwidths 1/1..1/m (continuous mode)")
    sweep.add_argument("--alpha", type=float, default=None)
    sweep.add_argument("--env", default=None)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--out", required=True, help="CSV path")
    sweep.set_defaults(func=cmd_sweep)

    ver = sub.add_parser("verify", help="run the bound/reduction verification suite")
    ver.add_argument("--env", default="demo")
    ver.add_argument("--reps", type=int, default=300)
    ver.add_argument("--alpha", type=float, default=0.05)
    ver.add_argument("--n", type=int, default=500)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--dataset", default=None, help="also validate this dataset file")
    ver.add_argument("--out", default=None, help="report JSON path")
    ver.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
