"""Command line entry point: ``fairrl train|eval|sweep|report``.

Failures print one JSON line ``{"error": <kind>, "message": <text>}`` on
stderr and exit with status 2.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np
import yaml

from fairrl import nn
from fairrl.errors import FairRLError
from fairrl.harness import (
    LEARNING_AGENTS,
    emit_outputs,
    load_config,
    make_agent,
    policy_from_file,
    run_evaluation,
    run_training,
)

POLICY_FILE = "policy.txt"


def _log(verbose):
    if not verbose:
        return None

    def progress(row):
        print(f"iter {row['iteration']:4d}  reward {row['mean_reward']:+.4f}  "
              f"short {row['short_term_mean']:.4f}  altered {row['altered']}", file=sys.stderr)
    return progress


def _run_seed(cfg, seed, verbose=False):
    """Train (learning agents) and evaluate one seed."""
    if cfg.agent in LEARNING_AGENTS:
        policy, training = run_training(cfg, seed, progress=_log(verbose))
        return policy, training, run_evaluation(policy, cfg, seed)
    return None, None, run_evaluation(make_agent(cfg), cfg, seed)


def _summary(records):
    st = np.mean([r.short_term for r in records], axis=0)
    return {
        "episodes": len(records),
        "mean_reward": float(np.mean([r.reward.mean() for r in records])),
        "mean_short_term": float(st.mean()),
        "mean_long_term": float(np.mean([r.long_term.mean() for r in records])),
        "final_utility": float(np.mean([r.utility[-1] for r in records])),
        "altered": int(sum(len(r.altered) for r in records)),
    }


def _config(args):
    cfg = load_config(args.config)
    if getattr(args, "agent", None):
        cfg = cfg.replace(agent=args.agent)
    return cfg


def cmd_train(args):
    cfg = _config(args)
    seed = cfg.seeds[0] if args.seed is None else args.seed
    out = args.out or cfg.out
    policy, training, records = _run_seed(cfg, seed, args.verbose)
    emit_outputs(records, out, training, cfg.replace(seeds=[seed]))
    if policy is not None:
        nn.save_params(os.path.join(out, POLICY_FILE), policy.network.spec, policy.network.params)
    print(json.dumps({"out": out, "seed": seed, **_summary(records)}))


def cmd_eval(args):
    cfg = _config(args)
    seed = cfg.seeds[0] if args.seed is None else args.seed
    if cfg.agent in LEARNING_AGENTS:
        if not args.policy:
            raise FairRLError(f"agent {cfg.agent!r} needs --policy")
        agent = policy_from_file(cfg, args.policy)
    else:
        agent = make_agent(cfg)
    records = run_evaluation(agent, cfg, seed)
    out = args.out or os.path.join(cfg.out, "eval")
    emit_outputs(records, out, None, cfg.replace(seeds=[seed]))
    print(json.dumps({"out": out, "seed": seed, **_summary(records)}))


def _parse_seeds(text):
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise FairRLError(f"bad seed list {text!r}") from None
    if not seeds:
        raise FairRLError("empty seed list")
    return seeds


def cmd_sweep(args):
    cfg = _config(args)
    seeds = _parse_seeds(args.seeds) if args.seeds else cfg.seeds
    out = args.out or cfg.out
    all_records, trainings = [], []
    for seed in seeds:
        policy, training, records = _run_seed(cfg, seed, args.verbose)
        sub = os.path.join(out, f"seed_{seed}")
        emit_outputs(records, sub, training, cfg.replace(seeds=[seed]))
        if policy is not None:
            nn.save_params(os.path.join(sub, POLICY_FILE), policy.network.spec, policy.network.params)
            trainings.append(training)
        all_records.extend(records)
        print(json.dumps({"out": sub, "seed": seed, **_summary(records)}))
    emit_outputs(all_records, out, trainings, cfg.replace(seeds=seeds))
    print(json.dumps({"out": out, "seeds": seeds, **_summary(all_records)}))


def _read_columns(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise FairRLError(f"{path}: no data rows")
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def cmd_report(args):
    manifest_path = os.path.join(args.input, "manifest.json")
    if not os.path.exists(manifest_path):
        raise FairRLError(f"{args.input}: no manifest.json (not an output directory)")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    agg = _read_columns(os.path.join(args.input, "aggregate.csv"))
    st = agg["short_term_mean"]
    lt = agg["long_term_mean"]
    report = {
        "agent": manifest.get("agent"),
        "env": manifest.get("env"),
        "config_hash": manifest.get("config_hash"),
        "episodes": len(manifest.get("seeds", [])),
        "steps": int(st.size),
        "mean_reward": float(agg["reward_mean"].mean()),
        "mean_short_term": float(st.mean()),
        "short_term_below_0.1": float(np.mean(st < 0.1)),
        "mean_long_term": float(lt.mean()),
        "long_term_slope": float(np.polyfit(agg["t"], lt, 1)[0]) if lt.size > 1 else 0.0,
        "final_utility": float(agg["utility_mean"][-1]),
    }
    # only trust files this run wrote; the directory may hold older outputs
    if "plot_training_short_term.csv" in manifest.get("files", []):
        training = os.path.join(args.input, "plot_training_short_term.csv")
        y = _read_columns(training)["y"]
        q = max(1, len(y) // 4)
        report["training_short_term_last_quarter"] = float(y[-q:].mean())
    if args.json:
        print(json.dumps(report))
    else:
        width = max(len(k) for k in report)
        for k, v in report.items():
            print(f"{k:<{width}}  {v:.6g}" if isinstance(v, float) else f"{k:<{width}}  {v}")


def _fail(kind, message):
    print(json.dumps({"error": kind, "message": " ".join(str(message).split())}), file=sys.stderr)
    return 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.exit(_fail("UsageError", f"{self.prog}: {message}"))


def build_parser():
    p = _Parser(prog="fairrl", description="Fairness-aware PPO experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train one seed, evaluate it and write outputs")
    t.add_argument("--config", required=True)
    t.add_argument("--agent", help="override the config's agent id")
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.add_argument("-v", "--verbose", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a saved policy (or a baseline agent)")
    e.add_argument("--config", required=True)
    e.add_argument("--agent", help="override the config's agent id")
    e.add_argument("--policy")
    e.add_argument("--seed", type=int)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="train and evaluate several seeds")
    s.add_argument("--config", required=True)
    s.add_argument("--agent", help="override the config's agent id")
    s.add_argument("--seeds", help="comma-separated, e.g. 0,1,2")
    s.add_argument("--out")
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="summarize an output directory")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--json", action="store_true")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (FairRLError, OSError, yaml.YAMLError) as exc:
        return _fail(type(exc).__name__, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
