"""Command line entry point: ``etgoa {config,train,exp1,exp2,assess}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgio
from . import policy as qpolicy
from .assessment import (ConfidenceReport, TriggerConfig, default_thresholds, et_goa_session,
                         semantic_label)
from .experiments import analysis, records
from .experiments.harness import (CONDITIONS, ENVIRONMENTS, SCHEDULES,
                                  episode_streams, load_policies, run_experiment_1,
                                  run_experiment_2, select_goal, train_policies)
from .gridworld import DeliveryEnv, ResampleAll, spawn_obstacles
from .rollout import WorldModel

log = logging.getLogger("etgoa")


def _choices(value: str, allowed, name: str) -> list[str]:
    if value == "all":
        return list(allowed)
    if value not in allowed:
        raise argparse.ArgumentTypeError(f"{name} must be one of {allowed} or 'all'")
    return [value]


def cmd_config(args) -> int:
    print(json.dumps(cfgio.to_dict(cfgio.load(args.config)), indent=2))
    return 0


def cmd_train(args) -> int:
    xcfg = cfgio.load(args.config)
    if args.goal is None:
        train_policies(args.policies, xcfg.env, xcfg.training, seed=args.seed,
                       overwrite=args.overwrite)
        return 0
    if not 0 <= args.goal < len(xcfg.env.goals):
        raise ValueError(f"--goal must be in [0, {len(xcfg.env.goals) - 1}]")
    out = Path(args.out) if args.out else Path(args.policies) / f"goal{args.goal}.qtable"
    out.parent.mkdir(parents=True, exist_ok=True)
    q = qpolicy.train(xcfg.env.goals[args.goal], xcfg.training,
                      np.random.default_rng([args.seed, args.goal]),
                      xcfg.env.width, xcfg.env.height)
    qpolicy.save(q, out)
    print(f"wrote {out}")
    return 0


def cmd_exp1(args) -> int:
    xcfg = cfgio.load(args.config)
    policies = load_policies(args.policies, xcfg.env)
    envs = _choices(args.env, ENVIRONMENTS, "--env")
    conds = _choices(args.condition, CONDITIONS, "--condition")
    out = run_experiment_1(xcfg, policies, args.episodes, args.seed, envs, conds)
    trials = [r for results, _ in out.values() for r in results]
    reports = []
    for cond, (_, reps) in out.items():
        reports.extend(reps)
    outdir = Path(args.out)
    records.write_trials(trials, outdir / "trials.csv")
    records.write_reports(reports, outdir / "reports.csv")
    by_env: dict = {}
    for cond, (results, _) in out.items():
        by_env.setdefault(cond.environment, {})[cond.kind] = results
    print(analysis.format_exp1(analysis.summarize_exp1(by_env)))
    return 0


def cmd_exp2(args) -> int:
    xcfg = cfgio.load(args.config)
    policies = load_policies(args.policies, xcfg.env)
    schedules = _choices(args.schedule, SCHEDULES, "--schedule")
    out = run_experiment_2(xcfg, policies, args.episodes, args.seed, schedules)
    outdir = Path(args.out)
    traces = [tr for s in schedules for tr in out[s]]
    records.write_traces(traces, outdir / "traces.csv")
    records.write_reports(((tr.episode, r) for tr in traces for r in tr.reports),
                          outdir / "reports.csv")
    if len(schedules) == 2:
        print(analysis.format_exp2(analysis.summarize_exp2(out)))
    return 0


def _describe(rep: ConfidenceReport) -> str:
    conf = "  ".join(f"g{g}={c:.2f} ({semantic_label(c)})" for g, c in sorted(rep.per_goal.items()))
    why = "initial" if not rep.triggered else f"{rep.marginal} SI={rep.si_min:.3f}"
    return f"t={rep.t:3d} [{why}] {conf}"


def cmd_assess(args) -> int:
    xcfg = cfgio.load(args.config)
    cfg = xcfg.env
    policies = load_policies(args.policies, cfg)
    rng = episode_streams(args.seed, args.episode)
    truth = spawn_obstacles(cfg, rng["world"], exclude=cfg.start)
    schedule = {xcfg.change_time: ResampleAll()} if args.env == "dynamic" else {}
    env = DeliveryEnv(cfg, truth, rng["env"], rng["world"], schedule)
    env.reset()

    def choose(report, state, current):
        g = select_goal(dict(report.per_goal), state.pos, cfg.goals)
        print(_describe(report) + f"  -> goal {g} at {tuple(state.pos)}")
        return g

    record, reports = et_goa_session(
        WorldModel(cfg, truth, policies), env, 0, default_thresholds(cfg),
        TriggerConfig(xcfg.delta), rng["model"], n_rollouts=xcfg.n_rollouts, select=choose)
    final = record.final
    print(f"world {truth.digest()}: delivered={final.delivered} broken={final.broken} "
          f"hits={final.hits} steps={final.t} reports={len(reports)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="etgoa", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, policies=True):
        sp.add_argument("--config", help="JSON config file (see `etgoa config`)")
        sp.add_argument("--seed", type=int, default=0)
        if policies:
            sp.add_argument("--policies", default="policies", help="policy directory")

    sp = sub.add_parser("config", help="print the effective configuration")
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_config)

    sp = sub.add_parser("train", help="train goal policies with Q-learning")
    common(sp)
    sp.add_argument("--goal", type=int, help="goal index; omit to train all goals")
    sp.add_argument("--out", help="output file for a single goal")
    sp.add_argument("--overwrite", action="store_true")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("exp1", help="delivery performance per assessment condition")
    common(sp)
    sp.add_argument("--env", default="all", help="static, dynamic or all")
    sp.add_argument("--condition", default="all", help="none, goa, etgoa or all")
    sp.add_argument("--episodes", type=int, default=100)
    sp.add_argument("--out", default="results/exp1")
    sp.set_defaults(func=cmd_exp1)

    sp = sub.add_parser("exp2", help="confidence through difficulty changes")
    common(sp)
    sp.add_argument("--schedule", default="all", help="ehe, heh or all")
    sp.add_argument("--episodes", type=int, default=100)
    sp.add_argument("--out", default="results/exp2")
    sp.set_defaults(func=cmd_exp2)

    sp = sub.add_parser("assess", help="verbose trace of one ET-GOA episode")
    common(sp)
    sp.add_argument("--env", default="dynamic", choices=ENVIRONMENTS)
    sp.add_argument("--episode", type=int, default=0)
    sp.set_defaults(func=cmd_assess)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError, argparse.ArgumentTypeError) as exc:
        print(f"etgoa: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
