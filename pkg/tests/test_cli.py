import json

import numpy as np
import pytest
import torch

from persistmon.cli import (CheckpointMissing, ConfigInvalid, ExperimentSpec, main, run_eval,
                            run_no_prior_eval, run_planner, scenario_for)
from persistmon.env_sim import Measurement
from persistmon.episode import BeliefSet, roadmap_for, run_graph_planner
from persistmon.nn_core import save_checkpoint
from persistmon.policy_net import PolicyNet

SMALL = dict(num_nodes=40, horizon=3.0, instances=2, with_jsd=False, seed=11)


def write_config(tmp_path, **kw):
    cfg = dict(SMALL, **kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("ck") / "policy"
    torch.manual_seed(0)
    net = PolicyNet(d=16, heads=2)
    save_checkpoint(net, path, {"policy": net.config})
    return str(path)


def test_compare_writes_outputs(tmp_path):
    cfg = write_config(tmp_path, planners=["lawnmower", "tsp_loop", "random"])
    out = tmp_path / "out"
    assert main(["compare", "--config", str(cfg), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seeds"] == [11, 12]
    assert set(summary["planners"]) == {"lawnmower", "tsp_loop", "random"}
    assert all(r["episodes"] == 2 for r in summary["planners"].values())
    assert len(list((out / "episodes").glob("*.csv"))) == 6
    assert len(list((out / "scenarios").glob("*.json"))) == 2


def test_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, planners=["tsp_loop", "random"])
    for name in ("a", "b"):
        assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
    for f in (tmp_path / "a").rglob("*"):
        if f.is_file():
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_planners_share_scenario():
    spec = ExperimentSpec(**SMALL)
    sc = scenario_for(spec, 5)
    a = run_planner(spec, sc, "lawnmower")
    b = run_planner(spec, sc, "tsp_loop")
    assert len(a.trace) == len(b.trace) == 30


def test_seed_flag_overrides(tmp_path):
    cfg = write_config(tmp_path, planners=["random"], instances=1)
    assert main(["compare", "--config", str(cfg), "--seed", "99", "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "summary.json").read_text())["seeds"] == [99]


def test_eval_with_checkpoint(tmp_path, checkpoint):
    cfg = write_config(tmp_path, planners=["policy"], instances=1)
    assert main(["eval", "--config", str(cfg), "--checkpoint", checkpoint,
                 "--out", str(tmp_path / "o")]) == 0


@pytest.mark.parametrize("prior", ["none", "count_only"])
def test_reduced_prior_eval(tmp_path, checkpoint, prior):
    spec = ExperimentSpec(**dict(SMALL, instances=1), mode="eval", planners=["policy"],
                          prior=prior, checkpoint=checkpoint, out_dir=str(tmp_path))
    summary, logs = run_no_prior_eval(spec)
    assert summary["prior"] == prior and len(logs) == 1


def test_reduced_prior_rejected_outside_eval():
    with pytest.raises(ConfigInvalid):
        ExperimentSpec(mode="compare", planners=["policy"], prior="none")
    with pytest.raises(ConfigInvalid):
        ExperimentSpec(mode="eval", planners=["lawnmower"], prior="none")


def test_missing_checkpoint(tmp_path):
    spec = ExperimentSpec(**SMALL, mode="eval", planners=["policy"],
                          checkpoint=str(tmp_path / "nope"))
    with pytest.raises(CheckpointMissing):
        run_eval(spec, write=False)
    cfg = write_config(tmp_path, planners=["policy"])
    assert main(["eval", "--config", str(cfg), "--checkpoint", str(tmp_path / "nope")]) != 0


def test_bad_config_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"planners": ["teleport"]}))
    assert main(["compare", "--config", str(bad)]) != 0
    bad.write_text("{not json")
    assert main(["compare", "--config", str(bad)]) != 0
    bad.write_text(json.dumps({"bogus_key": 1}))
    assert main(["compare", "--config", str(bad)]) != 0
    assert main(["compare", "--config", str(tmp_path / "missing.json")]) != 0
    assert "error" in capsys.readouterr().err


def test_train_command(tmp_path):
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({"train": {
        "d": 16, "heads": 2, "episode_cap": 4, "episodes": 1, "nodes_range": [30, 30],
        "history_range": [5, 5], "targets_range": [2, 2], "fixed_speed_ratio": 0.05}}))
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "final" / "manifest.json").exists()
    assert (out / "curves.csv").read_text().startswith("episode,reward")


def _random_walk_log(prior, seed=4, horizon=3.0):
    sc = scenario_for(ExperimentSpec(**SMALL), seed)
    rng = np.random.default_rng(0)
    return run_graph_planner(sc, roadmap_for(sc),
                             lambda ep, obs: int(rng.integers(len(ep.neighbors()))),
                             "random", prior, horizon, T=0, with_jsd=False)


def test_count_only_starts_more_uncertain():
    full = _random_walk_log("full")
    count_only = _random_walk_log("count_only")
    assert full.path == count_only.path
    assert count_only.summary()["Unc"] >= full.summary()["Unc"]


def test_unsighted_target_counts_as_one():
    lg = _random_walk_log("none", horizon=2.0)
    counts = lg.trace.counts[-1]
    assert any(c == 0 for c in counts)
    for i, c in enumerate(counts):
        if c == 0:
            assert all(s[i] == 1.0 for s in lg.trace.sigma)


def test_belief_set_grows_on_first_sighting():
    beliefs = BeliefSet(3, prior="none")
    assert beliefs.known() == []
    beliefs.ingest([Measurement(0.1, 0.1, 0.1, 0), Measurement(0.5, 0.5, 0.1, 1),
                    Measurement(0.1, 0.1, 0.1, 0)], 0.1)
    assert beliefs.discovery_order == [1]
    beliefs.ingest([Measurement(0.2, 0.2, 0.2, 1), Measurement(0.2, 0.2, 0.2, 0),
                    Measurement(0.9, 0.9, 0.2, 1)], 0.2)
    assert len(beliefs.known()) == 3 and beliefs.discovery_order == [1, 0, 2]
