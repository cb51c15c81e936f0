"""Command-line entry point: ``solve``, ``train``, ``verify-theory`` and ``dump-mdp``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import load_run_config, load_toml
from .errors import ConfigError, IterationError
from .harness import build_env, parse_grid, run, verify_theory, write_rate_table, write_report, write_trace_csv
from .mdp import entropies, optimal_soft_policy, return_J


def _with_seed(cfg, seed: int | None):
    if seed is None:
        return cfg
    params = dict(cfg.env.params)
    if "seed" in params:
        params["seed"] = seed
    return cfg.with_overrides(seed=seed, env=type(cfg.env)(cfg.env.name, params))


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(args) -> int:
    cfg = _with_seed(load_run_config(args.config), args.seed)
    mdp = build_env(cfg)
    tau = 0.0 if cfg.algorithm.auto_tau else float(cfg.algorithm.tau)
    pi, v = optimal_soft_policy(mdp, tau)
    out = _out_dir(args.out)
    result = {
        "run_id": cfg.run_id,
        "tau": tau,
        "v": v.tolist(),
        "policy": pi.tolist(),
        "entropy": entropies(pi).tolist(),
        "J": return_J(mdp, v),
    }
    (out / f"{cfg.run_id}_solution.json").write_text(json.dumps(result, indent=2))
    print(f"J* = {result['J']:.10g} (tau = {tau})")
    return 0


def cmd_train(args) -> int:
    cfg = _with_seed(load_run_config(args.config), args.seed)
    trace = run(cfg)
    out = _out_dir(args.out)
    write_trace_csv([trace], out / f"{cfg.run_id}.csv")
    summary = {
        "run_id": cfg.run_id,
        "mode": trace.mode,
        "K": trace.K,
        "final_greedy_return": trace.final_greedy_return,
        "optimal_return": trace.optimal_return,
        "final_subopt_mixture": trace.subopt_mixture[-1] if trace.subopt_mixture else None,
    }
    (out / f"{cfg.run_id}_summary.json").write_text(json.dumps(summary, indent=2, allow_nan=True))
    print(json.dumps(summary))
    return 0


def cmd_verify(args) -> int:
    grid = parse_grid(load_toml(args.config))
    records, rows = verify_theory(grid, jobs=args.jobs, seed=args.seed or 0)
    out = _out_dir(args.out)
    write_report(records, out / "report.json")
    write_rate_table(rows, out / "rates.csv")
    failed = [r for r in records if r.status == "fail"]
    for r in records:
        print(f"{r.status.upper():>17}  {r.name}  lhs={r.lhs:.6g}  rhs={r.rhs:.6g}")
    print(f"{len(records) - len(failed)}/{len(records)} checks did not fail")
    return 1 if failed else 0


def cmd_dump(args) -> int:
    cfg = _with_seed(load_run_config(args.config), args.seed)
    mdp = build_env(cfg)
    out = _out_dir(args.out)
    path = out / f"{cfg.run_id}_mdp.json"
    mdp.save_json(path)
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tabular-ac", description="Tabular off-policy actor-critic experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "solve": (cmd_solve, "compute the optimal regularized policy of the configured environment"),
        "train": (cmd_train, "run one configured training loop and write its trace"),
        "verify-theory": (cmd_verify, "run a verification grid and write the report"),
        "dump-mdp": (cmd_dump, "export the configured environment as JSON"),
    }
    for name, (fn, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="TOML file")
        p.add_argument("--seed", type=int, default=None, help="override the seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for grids")
        p.set_defaults(func=fn)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be nonnegative", file=sys.stderr)
        return 2
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except (ConfigError, IterationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
