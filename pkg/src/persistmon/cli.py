"""Experiment orchestration and the ``persistmon`` command line.

Config files are JSON objects whose keys mirror :class:`ExperimentSpec`; a
nested ``"train"`` object overrides :class:`~persistmon.ppo_train.TrainConfig`.
"""

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .baselines import LawnmowerPlanner, TspLoopPlanner
from .env_sim import EnvConfig, make_scenario
from .episode import run_continuous_planner, run_graph_planner, roadmap_for

log = logging.getLogger("persistmon")

PLANNERS = ("policy", "lawnmower", "tsp_loop", "random")


class ConfigInvalid(ValueError):
    pass


class CheckpointMissing(FileNotFoundError):
    pass


@dataclass
class ExperimentSpec:
    mode: str = "compare"
    planners: list = field(default_factory=lambda: ["lawnmower", "tsp_loop"])
    prior: str = "full"
    num_targets: int = 2
    speed_ratio: float = 1 / 30
    num_nodes: int = 200
    k: int = 10
    history: int = 100
    pool_stride: int = 5
    future: bool = True
    horizon: float = 30.0
    instances: int = 20
    seed: int = 0
    seeds: list | None = None
    checkpoint: str | None = None
    out_dir: str = "results"
    workers: int = 1
    with_jsd: bool = True
    train: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.mode not in ("train", "eval", "compare"):
            raise ConfigInvalid(f"unknown mode {self.mode!r}")
        bad = [p for p in self.planners if p not in PLANNERS]
        if bad:
            raise ConfigInvalid(f"unknown planners {bad}")
        if self.prior not in ("full", "count_only", "none"):
            raise ConfigInvalid(f"unknown prior mode {self.prior!r}")
        if self.prior != "full" and self.mode != "eval":
            raise ConfigInvalid("prior modes 'none'/'count_only' are evaluation-only")
        if self.prior != "full" and any(p != "policy" for p in self.planners):
            raise ConfigInvalid("reduced priors apply to the learned policy only")
        if self.horizon <= 0:
            raise ConfigInvalid("horizon must be positive")
        if self.num_targets < 1 or not 0 <= self.speed_ratio < 1:
            raise ConfigInvalid("invalid target setup")

    def instance_seeds(self):
        if self.seeds is not None:
            return [int(s) for s in self.seeds]
        return [self.seed + i for i in range(self.instances)]

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def scenario_for(spec, seed):
    env = EnvConfig(num_targets=spec.num_targets, speed_ratio=spec.speed_ratio, seed=seed)
    return make_scenario(env, num_nodes=spec.num_nodes, k=spec.k)


def run_planner(spec, scenario, planner, policy=None):
    """One episode of ``planner`` on ``scenario``; returns an EpisodeLog."""
    roadmap = roadmap_for(scenario)
    cfg = scenario.config
    if planner == "lawnmower":
        p = LawnmowerPlanner(spec.horizon, cfg.sensor_radius)
        return run_continuous_planner(scenario, p, p.start, spec.prior, spec.horizon,
                                      spec.with_jsd)
    if planner == "tsp_loop":
        init = np.array([tr.position for tr in scenario.tracks()])
        p = TspLoopPlanner(init, cfg.speed_ratio, cfg.sensor_radius)
        return run_continuous_planner(scenario, p, roadmap.nodes[scenario.start_node],
                                      spec.prior, spec.horizon, spec.with_jsd)
    if planner == "random":
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7]))
        return run_graph_planner(scenario, roadmap,
                                 lambda ep, obs: int(rng.integers(len(ep.neighbors()))),
                                 "random", spec.prior, spec.horizon, T=0,
                                 with_jsd=spec.with_jsd)
    if planner == "policy":
        if policy is None:
            raise CheckpointMissing("planner 'policy' needs a checkpoint")
        return run_graph_planner(scenario, roadmap,
                                 lambda ep, obs: policy.act(obs, greedy=True)[0],
                                 "policy", spec.prior, spec.horizon, spec.history,
                                 spec.pool_stride, spec.future, spec.with_jsd)
    raise ConfigInvalid(f"unknown planner {planner!r}")


def _load_policy(spec):
    if "policy" not in spec.planners:
        return None
    if not spec.checkpoint or not os.path.exists(os.path.join(spec.checkpoint, "manifest.json")):
        raise CheckpointMissing(f"checkpoint not found: {spec.checkpoint!r}")
    import torch

    from .ppo_train import load_policy
    torch.set_num_threads(1)
    return load_policy(spec.checkpoint)


def _run_seed(args):
    spec, seed = args
    policy = _load_policy(spec)
    scenario = scenario_for(spec, seed)
    return seed, scenario, [run_planner(spec, scenario, p, policy) for p in spec.planners]


def run_eval(spec, write=True):
    """Run every planner on every seed's scenario; returns ``(summary, logs)``."""
    _load_policy(spec)
    jobs = [(spec, s) for s in spec.instance_seeds()]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            results = list(pool.map(_run_seed, jobs))
    else:
        results = [_run_seed(j) for j in jobs]
    logs = [lg for _, _, lgs in results for lg in lgs]
    summary = summarize(spec, logs)
    if write:
        write_outputs(spec, results, summary)
    return summary, logs


def run_no_prior_eval(spec, write=True):
    if spec.prior not in ("none", "count_only"):
        raise ConfigInvalid("run_no_prior_eval expects prior 'none' or 'count_only'")
    if spec.planners != ["policy"]:
        raise ConfigInvalid("reduced-prior evaluation runs the learned policy only")
    return run_eval(spec, write)


def summarize(spec, logs):
    table = {}
    for p in spec.planners:
        rows = [lg.summary() for lg in logs if lg.planner == p]
        table[p] = {
            "Unc": float(np.mean([r["Unc"] for r in rows])),
            "Unc_std": float(np.mean([r["Unc_std"] for r in rows])),
            "MinOb": float(np.mean([r["MinOb"] for r in rows])),
            "JSD": float(np.mean([r["JSD"] for r in rows])) if spec.with_jsd else None,
            "episodes": len(rows),
        }
    return {"num_targets": spec.num_targets, "speed_ratio": spec.speed_ratio,
            "horizon": spec.horizon, "prior": spec.prior,
            "seeds": spec.instance_seeds(), "planners": table}


def write_outputs(spec, results, summary):
    out = spec.out_dir
    os.makedirs(os.path.join(out, "episodes"), exist_ok=True)
    os.makedirs(os.path.join(out, "scenarios"), exist_ok=True)
    for seed, scenario, logs in results:
        with open(os.path.join(out, "scenarios", f"seed{seed}.json"), "w") as f:
            json.dump(scenario.to_dict(), f)
        for lg in logs:
            lg.trace.to_csv(os.path.join(out, "episodes", f"{lg.planner}_seed{seed}.csv"))
    with open(os.path.join(out, "summary.json"), "w") as f:
        json.dump(summary, f, indent=1, sort_keys=True)
    with open(os.path.join(out, "table.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["planner", "Unc", "Unc_std", "MinOb", "JSD"])
        for p, r in summary["planners"].items():
            jsd = "" if r["JSD"] is None else f"{r['JSD']:.3f}"
            w.writerow([p, f"{r['Unc']:.3f}", f"{r['Unc_std']:.3f}", f"{r['MinOb']:.2f}", jsd])


def format_table(summary):
    lines = [f"{'planner':<10} {'Unc(std)':>16} {'MinOb':>8} {'JSD':>7}"]
    for p, r in summary["planners"].items():
        jsd = "-" if r["JSD"] is None else f"{r['JSD']:.3f}"
        lines.append(f"{p:<10} {r['Unc']:>8.3f}({r['Unc_std']:.3f}) {r['MinOb']:>8.2f} {jsd:>7}")
    return "\n".join(lines)


def run_train(spec):
    from .ppo_train import TrainConfig, train
    overrides = dict(spec.train)
    overrides.setdefault("seed", spec.seed)
    overrides.setdefault("workers", spec.workers)
    overrides.setdefault("out_dir", spec.out_dir)
    cfg = TrainConfig.from_dict(overrides)
    train(cfg)
    return cfg


def main(argv=None):
    parser = argparse.ArgumentParser(prog="persistmon",
                                     description="Persistent monitoring experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "eval", "compare"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int)
        if name == "eval":
            p.add_argument("--checkpoint")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        with open(args.config) as f:
            raw = json.load(f)
        raw["mode"] = args.command
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.out:
            raw["out_dir"] = args.out
        if args.workers:
            raw["workers"] = args.workers
        if getattr(args, "checkpoint", None):
            raw["checkpoint"] = args.checkpoint
        spec = ExperimentSpec.from_dict(raw)
        if args.command == "train":
            run_train(spec)
            return 0
        summary, _ = run_eval(spec)
        print(format_table(summary))
        return 0
    except (ConfigInvalid, CheckpointMissing, FileNotFoundError, ValueError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
