import json
import os

import numpy as np
import pytest

from conftest import MEDIUM_MAZE
from src.Cli.Commands import (EXIT_CONFIG, EXIT_FAILURE, EXIT_IO, EXIT_OK, Run, StageError, cmd_gen_data,
                              exit_code, main)
from src.Cli.Parser import build_parser, config_from_args
from src.Config.Config import Config, ConfigError
from src.Dataset.OfflineDataset import DatasetError
from src.Evaluation.Export import read_heatmap
from src.Maze.Maze import MazeError
from src.utils.seeding import SEED_ENV_VAR


@pytest.fixture(autouse=True)
def no_seed_override(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)


@pytest.fixture
def tiny_config(tmp_path, small_maze_config):
    """
    A run small enough to go through every stage in a few seconds.
    """
    config = Config.default()
    config["maze"] = small_maze_config
    config["output_dir"] = str(tmp_path / "out")
    for key, value in {
        "dataset.n_traj": 50, "dataset.max_len": 10,
        "training.epochs_rep": 1, "training.steps_per_epoch": 5, "training.batch_size": 8,
        "training.latent_dim": 4, "training.hidden": [8],
        "policy.epochs": 1, "policy.steps_per_epoch": 5, "policy.batch_size": 8, "policy.hidden": [8],
        "evaluation.episodes": 2, "evaluation.seeds": 2, "evaluation.n_boot": 50,
        "evaluation.reward_samples": 0, "evaluation.workers": 2,
    }.items():
        config.set_value(key, value)
    path = str(tmp_path / "tiny.yaml")
    config.write_config(path)
    return path, config


def out(config, *parts):
    return os.path.join(config["output_dir"], *parts)


def test_parser_overrides(tiny_config):
    path, _ = tiny_config
    args = build_parser().parse_args(["train", "--config", path, "--training-batch-size", "16",
                                      "--policy-hidden", "4", "4", "--no-training-exact-intrinsic-reward",
                                      "--stage", "rep"])
    config = config_from_args(args)
    assert config.get_value("training.batch_size") == 16
    assert config.get_value("policy.hidden") == [4, 4]
    assert config.get_value("training.exact_intrinsic_reward") is False
    assert config.get_value("training.latent_dim") == 4
    assert args.stage == "rep"


def test_parser_defaults_leave_config_alone():
    args = build_parser().parse_args(["eval", "--parallel-eval"])
    config = config_from_args(args)
    assert config.get_value("evaluation.parallel_eval") is True
    assert {k: v for k, v in config.items() if k != "evaluation"} == \
           {k: v for k, v in Config.default().items() if k != "evaluation"}


@pytest.mark.parametrize("argv", [["train", "--stage", "eval"], ["verify", "--config", "x.yaml"], []])
def test_parser_rejects(argv):
    with pytest.raises(SystemExit):
        build_parser().parse_args(argv)


def test_verify_command(tmp_path, capsys):
    report_path = str(tmp_path / "verify.json")
    assert main(["verify", "--n-mdps", "3", "--report", report_path]) == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    assert printed["passed"] is True
    with open(report_path) as f:
        assert json.load(f) == printed


def test_verify_detects_corruption(capsys):
    assert main(["verify", "--n-mdps", "2", "--corrupt-formula"]) == EXIT_FAILURE
    printed = json.loads(capsys.readouterr().out)
    assert "formula_vs_oracle" in printed["failed"]


def test_verify_honours_seed_override(monkeypatch, capsys):
    monkeypatch.setenv(SEED_ENV_VAR, "7")
    assert main(["verify", "--n-mdps", "2", "--seed", "3"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["seed"] == 7


def test_invalid_config_exits_2(tiny_config):
    path, _ = tiny_config
    assert main(["gen-data", "--config", path, "--training-expectile", "1.5"]) == EXIT_CONFIG


def test_invalid_maze_exits_2(tiny_config, tmp_path):
    path, _ = tiny_config
    maze = tmp_path / "bad_maze.json"
    maze.write_text(json.dumps({"grid": ["..", "."], "tasks": []}))
    assert main(["gen-data", "--config", path, "--maze", str(maze)]) == EXIT_CONFIG


def test_missing_dataset_exits_3(tiny_config):
    path, _ = tiny_config
    assert main(["train", "--config", path]) == EXIT_IO


def test_exit_codes():
    assert exit_code(StageError("rep", DatasetError("empty"))) == EXIT_IO
    assert exit_code(StageError("data", MazeError("bad"))) == EXIT_CONFIG
    assert exit_code(ConfigError("bad")) == EXIT_CONFIG
    assert exit_code(FileNotFoundError("gone")) == EXIT_IO
    assert exit_code(FloatingPointError("nan")) == EXIT_FAILURE


def test_solve_heatmaps(tiny_config):
    path, config = tiny_config
    assert main(["solve", "--config", path]) == EXIT_OK
    run = Run(Config.from_file(path))
    cell_map = run.env.cell_map
    directory = out(config, "solve", "goal_corner")
    advantage = read_heatmap(os.path.join(directory, "switching_advantage.csv"), cell_map)
    assert advantage[cell_map.state((1, 1))] == 0.0
    assert np.all(advantage <= 1e-6)
    value = read_heatmap(os.path.join(directory, "value.csv"), cell_map)
    assert value[cell_map.state((3, 3))] == pytest.approx(10.0, abs=1e-6)
    assert value[cell_map.state((1, 1))] == pytest.approx(0.9 ** 4 * 10.0, abs=1e-6)
    reward = read_heatmap(out(config, "solve", "regions", "reward.csv"), cell_map)
    np.testing.assert_array_equal(reward, [0, 0, -1, 0, 0, 5, 0, 0])
    assert os.path.exists(out(config, "solve", "regions", "prehit.csv"))


def test_dataset_cache(tiny_config):
    path, _ = tiny_config
    config = Config.from_file(path)
    run = Run(config)
    first = cmd_gen_data(config, run)
    again = cmd_gen_data(config, run)
    assert again.equals(first)
    config.set_value("dataset.n_traj", 20)
    assert cmd_gen_data(config, Run(config)).n_traj == 20


def test_pipeline_end_to_end(tiny_config):
    path, config = tiny_config
    assert main(["pipeline", "--config", path]) == EXIT_OK
    for artifact in ["dataset.ssds", "checkpoints/fb.bin", "checkpoints/low.bin", "checkpoints/high.bin",
                     "traces/rep.json", "traces/goal_corner_hierarchical.csv", "report.json", "run.log"]:
        assert os.path.exists(out(config, artifact)), artifact

    with open(out(config, "manifest.json")) as f:
        manifest = json.load(f)
    assert manifest["stages"] == ["data", "rep", "low", "high", "eval"]
    assert manifest["config_digest"] == Config.from_file(path).digest()
    assert set(manifest["stage_seeds"]) == {"data", "rep", "high", "low", "eval"}

    with open(out(config, "report.json")) as f:
        report = json.load(f)
    assert set(report["aggregate"]) == {"hierarchical", "flat", "random", "optimal"}
    optimal_goal = [t for t in report["tasks"] if t["agent"] == "optimal" and t["task"] == "goal_corner"]
    assert optimal_goal[0]["per_seed"] == [100.0, 100.0]
    for aggregate in report["aggregate"].values():
        assert aggregate["ci"][0] <= aggregate["iqm"] <= aggregate["ci"][1]

    assert main(["export", "--config", path]) == EXIT_OK
    run = Run(Config.from_file(path))
    advantage = read_heatmap(out(config, "export", "goal_corner", "switching_advantage.csv"), run.env.cell_map)
    assert advantage[run.env.cell_map.state((1, 1))] == 0.0
    assert os.path.exists(out(config, "export", "regions", "reward_projection.csv"))


def test_pipeline_is_reproducible(tiny_config, tmp_path):
    path, config = tiny_config
    other = str(tmp_path / "again")
    assert main(["pipeline", "--config", path, "--stage", "low"]) == EXIT_OK
    assert main(["pipeline", "--config", path, "--stage", "low", "--output-dir", other]) == EXIT_OK
    for name in ["fb.bin", "low.bin"]:
        with open(out(config, "checkpoints", name), "rb") as a, open(os.path.join(other, "checkpoints", name), "rb") as b:
            assert a.read() == b.read()


def test_pipeline_stops_after_stage(tiny_config):
    path, config = tiny_config
    assert main(["pipeline", "--config", path, "--stage", "rep"]) == EXIT_OK
    with open(out(config, "manifest.json")) as f:
        assert json.load(f)["stages"] == ["data", "rep"]
    assert os.path.exists(out(config, "checkpoints", "fb.bin"))
    assert not os.path.exists(out(config, "checkpoints", "low.bin"))


def test_flat_pipeline(tiny_config):
    path, config = tiny_config
    assert main(["pipeline", "--config", path, "--no-hierarchy"]) == EXIT_OK
    assert not os.path.exists(out(config, "checkpoints", "high.bin"))
    with open(out(config, "manifest.json")) as f:
        assert json.load(f)["stages"] == ["data", "rep", "low", "eval"]
    with open(out(config, "report.json")) as f:
        assert "hierarchical" not in json.load(f)["aggregate"]


def test_train_single_stage(tiny_config):
    path, config = tiny_config
    assert main(["gen-data", "--config", path]) == EXIT_OK
    assert main(["train", "--config", path, "--stage", "rep"]) == EXIT_OK
    assert main(["train", "--config", path, "--stage", "high"]) == EXIT_OK
    assert os.path.exists(out(config, "checkpoints", "high.bin"))
    assert not os.path.exists(out(config, "checkpoints", "low.bin"))
    assert main(["eval", "--config", path]) == EXIT_IO


@pytest.mark.slow
def test_hierarchy_beats_flat_agent_on_medium_maze(tmp_path):
    config = Config.default()
    config["maze"] = MEDIUM_MAZE
    config["output_dir"] = str(tmp_path / "out")
    path = str(tmp_path / "medium.yaml")
    config.write_config(path)
    assert main(["pipeline", "--config", path, "--parallel-eval"]) == EXIT_OK

    with open(out(config, "report.json")) as f:
        aggregate = json.load(f)["aggregate"]
    tasks = aggregate["hierarchical"]["tasks"]
    assert len(tasks) == 5
    means = {agent: dict(zip(aggregate[agent]["tasks"], aggregate[agent]["mean"]))
             for agent in ("hierarchical", "flat", "random")}
    better = [task for task in tasks if means["hierarchical"][task] >= means["flat"][task]]
    assert len(better) >= 3, means
    for agent in ("hierarchical", "flat"):
        for task in tasks:
            assert means[agent][task] > means["random"][task], (agent, task, means)
