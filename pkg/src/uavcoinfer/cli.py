"""Command-line harness: ``train``, ``eval`` and ``sweep``.

Every command reads one YAML experiment file. Outputs land in the run
directory (``output_dir`` from the config, or ``--out``):

* ``metrics.csv``     one row per training episode, deterministic under a fixed seed
* ``timing.csv``      wall-clock seconds per episode, kept apart so metrics stay reproducible
* ``checkpoint.json`` all networks, optimizer moments and the annealing counter
* ``eval.json``       evaluation summary; ``trajectory.csv`` holds the first evaluation episode
* ``sweep.csv``       one row per swept value
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from .agent import HdrlAgent, ReplayBuffer, episode_seeds, train_episode
from .baselines import RandomPolicy
from .config import ConfigError, ExperimentConfig, dump_experiment, load_experiment
from .env import UavEdgeEnv
from .rollout import EvalReport, evaluate

log = logging.getLogger("uavcoinfer")

METRIC_COLUMNS = ("episode", "reward", "accuracy", "d_dev", "offload_ratio", "critic_loss", "actor_objective")
TRAJECTORY_COLUMNS = ("episode", "slot", "x", "y", "theta", "reward", "deviation")
SWEEP_COLUMNS = ("parameter", "value", "policy", "accuracy_mean", "accuracy_std", "d_dev_mean",
                 "d_dev_std", "reward_mean", "success_ratio_mean", "dev_threshold_met")
# command-line spelling -> config field
SWEEP_PARAMETERS = {
    "devWeight": "dev_weight",
    "gdCount": "gd_count",
    "offloadCap": "offload_cap",
    "seed": "seed",
    "ratioSet": "ratio_set",
}
_PER_GD_FIELDS = ("gd_positions", "tx_power", "feat_dim", "bits_per_dim", "ratio_set")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def make_env(cfg: ExperimentConfig) -> UavEdgeEnv:
    return UavEdgeEnv(cfg.sim, cfg.task)


def make_controller(cfg: ExperimentConfig):
    if cfg.policy == "random":
        return RandomPolicy(cfg.sim, cfg.seed)
    return HdrlAgent(cfg.sim, cfg.train, cfg.policy, seed=cfg.seed)


def save_checkpoint(agent: HdrlAgent, path: Path) -> None:
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(agent.to_dict()))
    tmp.replace(path)


def load_checkpoint(agent: HdrlAgent, path) -> None:
    agent.load_dict(json.loads(Path(path).read_text()))


# ------------------------------------------------------------------- train

def run_train(cfg: ExperimentConfig, out: Path):
    """Train ``cfg.policy`` and write metrics, timing and the final checkpoint."""
    out.mkdir(parents=True, exist_ok=True)
    dump_experiment(cfg, out / "config.yaml")
    env = make_env(cfg)
    controller = make_controller(cfg)
    ckpt = out / "checkpoint.json"
    with open(out / "metrics.csv", "w", newline="") as mf, open(out / "timing.csv", "w", newline="") as tf:
        mw = csv.writer(mf, lineterminator="\n")
        tw = csv.writer(tf, lineterminator="\n")
        mw.writerow(METRIC_COLUMNS)
        tw.writerow(("episode", "wall_clock"))
        if not isinstance(controller, HdrlAgent):
            log.info("policy %s has nothing to train", cfg.policy)
            return controller
        buffer = ReplayBuffer(cfg.train.buffer_capacity)
        try:
            for i, s in enumerate(episode_seeds(cfg.seed, cfg.train.episodes)):
                t0 = time.perf_counter()
                row = train_episode(controller, env, buffer, int(s), i)
                mw.writerow([_fmt(getattr(row, c)) for c in METRIC_COLUMNS])
                tw.writerow((i, f"{time.perf_counter() - t0:.6f}"))
                if (i + 1) % 100 == 0:
                    log.info("episode %d reward %.3f accuracy %.3f d_dev %.1f",
                             i + 1, row.reward, row.accuracy, row.d_dev)
        except FloatingPointError as exc:
            # the non-finite guards fire before any parameter is touched,
            # so the networks still hold the last good state
            save_checkpoint(controller, ckpt)
            raise FloatingPointError(f"{exc}; last good state saved to {ckpt}") from exc
    save_checkpoint(controller, ckpt)
    return controller


# -------------------------------------------------------------------- eval

def write_trajectory(report: EvalReport, env: UavEdgeEnv, path: Path) -> None:
    m = report.first_episode
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for i, (q, theta, r) in enumerate(zip(m.trajectory, m.headings, m.rewards)):
            dev = float(np.linalg.norm(q - env.ref[i + 1]))
            w.writerow([0, i + 1, _fmt(q[0]), _fmt(q[1]), _fmt(theta), _fmt(r), _fmt(dev)])


def run_eval(cfg: ExperimentConfig, out: Path, checkpoint=None, controller=None) -> EvalReport:
    out.mkdir(parents=True, exist_ok=True)
    env = make_env(cfg)
    if controller is None:
        controller = make_controller(cfg)
        if isinstance(controller, HdrlAgent):
            path = Path(checkpoint) if checkpoint else out / "checkpoint.json"
            load_checkpoint(controller, path)
    report = evaluate(env, controller, cfg.eval_episodes, cfg.seed)
    summary = report.as_dict()
    summary["policy"] = cfg.policy
    summary["dev_threshold"] = cfg.sim.dev_threshold
    summary["dev_threshold_met"] = report.d_dev_mean <= cfg.sim.dev_threshold
    (out / "eval.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    write_trajectory(report, env, out / "trajectory.csv")
    return report


# ------------------------------------------------------------------- sweep

def parse_sweep_value(parameter: str, text: str):
    if parameter == "devWeight":
        return float(text)
    if parameter in ("gdCount", "offloadCap", "seed"):
        return int(text)
    # ratioSet: comma-separated ratios, e.g. "0,0.2,0.4"
    return tuple(float(x) for x in text.split(",") if x.strip())


def sweep_point(cfg: ExperimentConfig, parameter: str, value) -> ExperimentConfig:
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"unknown sweep parameter {parameter!r}; choose from {sorted(SWEEP_PARAMETERS)}")
    if parameter == "seed":
        return cfg.replace(seed=value)
    sim = {f.name: getattr(cfg.sim, f.name) for f in dataclasses.fields(cfg.sim)}
    if parameter == "gdCount":
        if value > len(cfg.sim.gd_positions):
            raise ConfigError(f"gdCount {value} needs at least {value} gd_positions, "
                              f"config lists {len(cfg.sim.gd_positions)}")
        for name in _PER_GD_FIELDS:
            sim[name] = sim[name][:value]
        sim["gd_count"] = value
        sim["offload_cap"] = min(sim["offload_cap"], value)
    elif parameter == "ratioSet":
        sim["ratio_set"] = value
    else:
        sim[SWEEP_PARAMETERS[parameter]] = value
    return cfg.replace(sim=type(cfg.sim)(**sim))


def run_sweep(cfg: ExperimentConfig, parameter: str, values, out: Path) -> list[dict]:
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"unknown sweep parameter {parameter!r}; choose from {sorted(SWEEP_PARAMETERS)}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for text in values:
        value = parse_sweep_value(parameter, text) if isinstance(text, str) else text
        point = sweep_point(cfg, parameter, value)
        label = str(text).replace(",", "_")
        sub = out / f"{parameter}={label}"
        controller = run_train(point, sub)
        report = run_eval(point, sub, controller=controller)
        d = report.as_dict()
        rows.append({
            "parameter": parameter,
            "value": str(text),
            "policy": point.policy,
            "accuracy_mean": d["accuracy_mean"],
            "accuracy_std": d["accuracy_std"],
            "d_dev_mean": d["d_dev_mean"],
            "d_dev_std": d["d_dev_std"],
            "reward_mean": d["reward_mean"],
            "success_ratio_mean": d["success_ratio_mean"] if d["success_ratio_mean"] is not None else math.nan,
            "dev_threshold_met": d["d_dev_mean"] <= point.sim.dev_threshold,
        })
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([r[c] if isinstance(r[c], str) else _fmt(r[c]) for c in SWEEP_COLUMNS])
    return rows


# --------------------------------------------------------------------- main

def _load(args) -> ExperimentConfig:
    cfg = load_experiment(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.episodes is not None:
        cfg = cfg.replace(train=dataclasses.replace(cfg.train, episodes=args.episodes))
    if args.out is not None:
        cfg = cfg.replace(output_dir=str(args.out))
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uavcoinfer", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="YAML experiment file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="run directory (overrides output_dir)")
        sp.add_argument("--episodes", type=int, default=None, help="training episodes")

    common(sub.add_parser("train", help="train the configured policy"))
    ev = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    common(ev)
    ev.add_argument("--checkpoint", default=None, help="defaults to <out>/checkpoint.json")
    sw = sub.add_parser("sweep", help="train and evaluate over one parameter")
    common(sw)
    sw.add_argument("--param", required=True, help=f"one of {', '.join(SWEEP_PARAMETERS)}")
    sw.add_argument("--values", nargs="*", default=[], help="values; ratio sets as comma lists")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
        out = Path(cfg.output_dir)
        if args.command == "train":
            run_train(cfg, out)
        elif args.command == "eval":
            report = run_eval(cfg, out, checkpoint=args.checkpoint)
            print(f"accuracy {report.accuracy_mean:.4f} +- {report.accuracy_std:.4f}  "
                  f"d_dev {report.d_dev_mean:.2f} +- {report.d_dev_std:.2f} m")
        else:
            for r in run_sweep(cfg, args.param, args.values, out):
                print(f"{r['parameter']}={r['value']}: accuracy {r['accuracy_mean']:.4f} "
                      f"d_dev {r['d_dev_mean']:.2f}")
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
