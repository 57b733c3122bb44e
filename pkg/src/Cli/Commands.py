from importlib import metadata
from typing import Dict, List, Optional
import json
import os
import platform
import sys

import numpy as np

from src.Cli.Parser import STAGES, build_parser, config_from_args
from src.Config.Config import Config, ConfigError
from src.Dataset.OfflineDataset import DatasetError, OfflineDataset, generate, load_dataset, save_dataset
from src.Evaluation.Export import export_heatmap
from src.Evaluation.Rollout import EvaluationError, TaskResult, evaluate_task
from src.Evaluation.Statistics import iqm_with_ci, normalization_bounds
from src.ExactSolver.ExactSolver import (optimal_goal_policy, prehit_advantage_from, successor_measure,
                                         switching_advantage_from, value_iteration)
from src.ExactSolver.Verification import run_verification
from src.FB.FbModel import FbModel, learned_value, load_fb_model, reward_embedding, reward_projection, save_fb_model
from src.FB.FbTrainer import FbTrainer, RepTrainConfig
from src.Hierarchy.Advantage import advantage_over_subgoals
from src.Hierarchy.HierAgent import HierAgent, TabularAgent, subgoal_trace_csv
from src.Hierarchy.PolicyTrainer import PolicyTrainConfig, PolicyTrainer
from src.Hierarchy.Policies import HighPolicy, LowPolicy
from src.Maze.Maze import MazeEnv, MazeError, load_maze_config
from src.Mdp.Mdp import StateDist, uniform_policy
from src.utils.logger import get_logger, init_logger
from src.utils.seeding import master_seed, stage_seed

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_IO = 3

PACKAGES = ("numpy", "scipy", "ruamel.yaml", "tqdm")


class StageError(RuntimeError):
    """
    A pipeline stage failed; wraps the original error.
    """
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class Run:
    """
    One configured run: validated config, seeds, maze and the artifact layout of the output directory.
    """
    def __init__(self, config: Config):
        self.logger = get_logger()
        config.validate()
        self.config = config
        self.master_seed = master_seed(config["seed"])
        self.output_dir = str(config["output_dir"])
        os.makedirs(self.output_dir, exist_ok=True)
        try:
            self.spec, self.tasks = load_maze_config(config["maze"])
        except MazeError as e:
            raise ConfigError(f"maze: {e}") from e
        self.env = MazeEnv(self.spec)

    def seed(self, stage: str) -> int:
        return stage_seed(self.master_seed, stage)

    def path(self, *parts: str) -> str:
        path = os.path.join(self.output_dir, *parts)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        return path

    def task_dir(self, kind: str, task_name: str) -> str:
        directory = os.path.join(self.output_dir, kind, task_name)
        os.makedirs(directory, exist_ok=True)
        return directory

    def write_json(self, name: str, data):
        with open(self.path(name), "w") as f:
            json.dump(data, f, sort_keys=True, indent=2)

    def write_manifest(self, stages: List[str]):
        versions = {"python": platform.python_version()}
        for package in PACKAGES:
            try:
                versions[package] = metadata.version(package)
            except metadata.PackageNotFoundError:
                versions[package] = None
        self.write_json("manifest.json", {
            "config_digest": self.config.digest(),
            "config": json.loads(json.dumps(self.config)),
            "master_seed": self.master_seed,
            "stage_seeds": {stage: self.seed(stage) for stage in STAGES},
            "stages": stages,
            "versions": versions,
        })

    def start_distribution(self) -> Optional[StateDist]:
        if self.config["dataset"]["start"] == "uniform":
            return None
        probs = np.zeros(self.env.n_states)
        for task in self.tasks:
            for s in self.env.start_states(task):
                probs[s] = 1.0
        return StateDist(probs / probs.sum())

    def load_model(self) -> FbModel:
        return load_fb_model(self.path("checkpoints", "fb"))

    def load_dataset(self) -> OfflineDataset:
        return load_dataset(self.path("dataset.ssds"))


def _dataset_signature(run: Run) -> dict:
    return {"dataset": dict(run.config["dataset"]), "maze": run.config["maze"], "seed": run.seed("data")}


def cmd_verify(n_mdps: int = 100, seed: int = 0, corrupt_formula: bool = False, workers: int = 1,
               report_path: str = None) -> int:
    """
    Differential suite; prints the JSON report, exits 1 naming every failed identity.
    """
    logger = get_logger()
    report = run_verification(n_mdps, master_seed(seed), corrupt_formula, workers)
    text = json.dumps(report.to_dict(), sort_keys=True, indent=2)
    print(text)
    if report_path:
        with open(report_path, "w") as f:
            f.write(text)
    if not report.passed:
        logger.error(f"Verification failed: {', '.join(report.failed)}")
        return EXIT_FAILURE
    logger.info(f"Verification passed on {n_mdps} random MDPs")
    return EXIT_OK


def cmd_solve(config: Config) -> int:
    """
    Per task: reward, V*, the switching advantage A^{pi_w -> pi*}(r) at the first start state as a
    function of the subgoal w (pi_w the optimal goal-reacher of w), and its pre-hit part.
    """
    run = Run(config)
    mdp, cell_map = run.env.mdp, run.env.cell_map
    goal_measures = [successor_measure(mdp, optimal_goal_policy(mdp, w)) for w in range(mdp.n_states)]
    for task in run.tasks:
        reward = run.env.task_reward(task)
        v_star, pi_star = value_iteration(mdp, reward)
        m_star = successor_measure(mdp, pi_star)
        s = run.env.start_states(task)[0]
        advantage = np.array([switching_advantage_from(m_w, m_star, w, reward)[s] for w, m_w in enumerate(goal_measures)])
        prehit = np.array([prehit_advantage_from(m_w, w, reward)[s] for w, m_w in enumerate(goal_measures)])

        directory = run.task_dir("solve", task.name)
        export_heatmap(reward.values, cell_map, os.path.join(directory, "reward.csv"))
        export_heatmap(v_star, cell_map, os.path.join(directory, "value.csv"))
        export_heatmap(advantage, cell_map, os.path.join(directory, "switching_advantage.csv"))
        export_heatmap(prehit, cell_map, os.path.join(directory, "prehit.csv"))
        run.logger.info(f"Solved {task.name}: V*(start) = {v_star[s]:.6f}, best subgoal "
                        f"{cell_map.cell(int(np.argmax(advantage)))}")
    return EXIT_OK


def cmd_gen_data(config: Config, run: Run = None) -> OfflineDataset:
    """
    Generate the uniform-behaviour dataset, or reuse the cached one when its signature matches.
    """
    run = run or Run(config)
    path = run.path("dataset.ssds")
    signature = _dataset_signature(run)
    if os.path.exists(path) and os.path.exists(path + ".json"):
        with open(path + ".json", "r") as f:
            cached = json.load(f).get("config")
        if cached == json.loads(json.dumps(signature)):
            run.logger.info(f"Reusing cached dataset {path}")
            return load_dataset(path)

    dataset_cfg = config["dataset"]
    mdp = run.env.mdp
    ds = generate(mdp, uniform_policy(mdp.n_states, mdp.n_actions), int(dataset_cfg["n_traj"]),
                  int(dataset_cfg["max_len"]), run.seed("data"), run.start_distribution())
    save_dataset(ds, path, signature)
    run.logger.info(f"Wrote dataset with {ds.n_traj} trajectories to {path}")
    return ds


def cmd_train(config: Config, hierarchical: bool = True, stage: str = None, progress: bool = False,
              run: Run = None) -> Dict[str, object]:
    """
    Train the representation (rep) and the low (low) and high (high) policies on the stored dataset.
    :param stage: Train only this stage, loading what it depends on.
    :return: The trained objects by stage name.
    """
    run = run or Run(config)
    ds = run.load_dataset()
    trained: Dict[str, object] = {}

    if stage in (None, "rep"):
        training = config["training"]
        model = FbModel(run.env.n_states, int(training["latent_dim"]), training["hidden"], run.env.mdp.discount,
                        run.seed("rep"), float(training["target_tau"]))
        model, trace = FbTrainer(RepTrainConfig.from_config(config, run.seed("rep")), progress).train(model, ds)
        save_fb_model(model, run.path("checkpoints", "fb"))
        run.write_json(os.path.join("traces", "rep.json"), trace)
        trained["rep"] = model
    model = trained.get("rep") or run.load_model()

    if stage in (None, "low"):
        trainer = PolicyTrainer(PolicyTrainConfig.from_config(config, run.seed("low")), progress)
        low, trace = trainer.train_low(model, ds, run.env.n_actions)
        low.save(run.path("checkpoints", "low"))
        run.write_json(os.path.join("traces", "low.json"), trace)
        trained["low"] = low

    if stage in (None, "high") and (hierarchical or stage == "high"):
        trainer = PolicyTrainer(PolicyTrainConfig.from_config(config, run.seed("high")), progress)
        high, trace = trainer.train_high(model, ds)
        high.save(run.path("checkpoints", "high"))
        run.write_json(os.path.join("traces", "high.json"), trace)
        trained["high"] = high
    return trained


def _task_latent(run: Run, model: FbModel, ds: OfflineDataset, task_index: int, reward) -> np.ndarray:
    n_samples = int(run.config["evaluation"]["reward_samples"])
    return reward_embedding(model, reward, ds, n_samples, seed=run.seed("eval") + task_index).latent()


def cmd_eval(config: Config, hierarchical: bool = True, run: Run = None) -> dict:
    """
    Evaluate the FB agents (hierarchical and flat) next to the uniform-random and exact-optimal
    tabular agents, then aggregate normalized scores per agent with IQM and bootstrap intervals.
    """
    run = run or Run(config)
    evaluation = config["evaluation"]
    ds = run.load_dataset()
    model = run.load_model()
    low = LowPolicy.load(run.path("checkpoints", "low"))
    high = HighPolicy.load(run.path("checkpoints", "high")) if hierarchical else None
    env = run.env
    workers = int(evaluation["workers"]) if evaluation["parallel_eval"] else 1
    seed = run.seed("eval")

    results: Dict[str, List[TaskResult]] = {}
    for index, task in enumerate(run.tasks):
        reward = env.task_reward(task)
        latent = _task_latent(run, model, ds, index, reward)
        _, pi_star = value_iteration(env.mdp, reward)
        agents = {}
        if hierarchical:
            agents["hierarchical"] = HierAgent(model, low, high, hierarchical=True)
        agents["flat"] = HierAgent(model, low, hierarchical=False)
        agents["random"] = TabularAgent(uniform_policy(env.n_states, env.n_actions), "random")
        agents["optimal"] = TabularAgent(pi_star, "optimal")

        for name, agent in agents.items():
            result = evaluate_task(env, agent, task, latent, int(evaluation["episodes"]), int(evaluation["seeds"]),
                                   seed + index, bool(evaluation["greedy"]), workers,
                                   keep_records=isinstance(agent, HierAgent))
            if result.records:
                first = result.records[0]
                subgoal_trace_csv(first.states, first.subgoals, first.actions,
                                  run.path("traces", f"{task.name}_{name}.csv"))
                result.records = []
            results.setdefault(name, []).append(result)

    task_names = [task.name for task in run.tasks]
    matrices = {name: np.array([r.per_seed for r in task_results]) for name, task_results in results.items()}
    report = {"tasks": [], "aggregate": {}}
    n_boot = int(evaluation["n_boot"])
    for name, task_results in results.items():
        for row, result in zip(matrices[name], task_results):
            entry = result.to_dict()
            if row.size >= 2:
                single = iqm_with_ci(row[None, :], n_boot, seed)
                entry.update({"iqm": single.iqm, "ci": [single.ci_low, single.ci_high]})
            report["tasks"].append(entry)

    if int(evaluation["seeds"]) >= 2:
        bounds = normalization_bounds(matrices)
        for name, matrix in matrices.items():
            try:
                report["aggregate"][name] = iqm_with_ci(matrix, n_boot, seed, bounds, task_names).to_dict()
            except EvaluationError as e:
                run.logger.warning(f"No aggregate for {name}: {e}")
    else:
        run.logger.warning("Fewer than two evaluation seeds, skipping IQM aggregation")

    run.write_json("report.json", report)
    for name, aggregate in report["aggregate"].items():
        run.logger.info(f"{name}: IQM {aggregate['iqm']:.4f} [{aggregate['ci'][0]:.4f}, {aggregate['ci'][1]:.4f}]")
    return report


def cmd_export(config: Config, run: Run = None) -> int:
    """
    Learned counterparts of the solve heatmaps per task: reward projection onto B, learned value,
    FB switching advantage (full and proxy) and its pre-hit part over subgoals from the first start state.
    """
    run = run or Run(config)
    ds = run.load_dataset()
    model = run.load_model()
    for index, task in enumerate(run.tasks):
        reward = run.env.task_reward(task)
        latent = _task_latent(run, model, ds, index, reward)
        s = run.env.start_states(task)[0]
        directory = run.task_dir("export", task.name)
        cell_map = run.env.cell_map
        export_heatmap(reward_projection(model, reward), cell_map, os.path.join(directory, "reward_projection.csv"))
        export_heatmap(learned_value(model, latent), cell_map, os.path.join(directory, "value.csv"))
        export_heatmap(advantage_over_subgoals(model, s, latent, "full"), cell_map,
                       os.path.join(directory, "switching_advantage.csv"))
        export_heatmap(advantage_over_subgoals(model, s, latent, "proxy"), cell_map,
                       os.path.join(directory, "switching_advantage_proxy.csv"))
        export_heatmap(advantage_over_subgoals(model, s, latent, "prehit"), cell_map,
                       os.path.join(directory, "prehit.csv"))
        run.logger.info(f"Exported learned heatmaps for {task.name}")
    return EXIT_OK


def cmd_pipeline(config: Config, hierarchical: bool = True, stop_after: str = None, progress: bool = False) -> int:
    """
    data -> rep -> low, high -> eval, with a manifest. Errors are re-raised as StageError naming the stage.
    """
    run = Run(config)
    done: List[str] = []
    plan = [("data", lambda: cmd_gen_data(config, run)),
            ("rep", lambda: cmd_train(config, hierarchical, "rep", progress, run)),
            ("low", lambda: cmd_train(config, hierarchical, "low", progress, run)),
            ("high", lambda: cmd_train(config, hierarchical, "high", progress, run)),
            ("eval", lambda: cmd_eval(config, hierarchical, run))]
    for stage, action in plan:
        if stage == "high" and not hierarchical:
            run.logger.info("Skipping the high-level policy (--no-hierarchy)")
            continue
        run.logger.info(f"Stage {stage}")
        try:
            action()
        except Exception as e:
            run.logger.error(f"Stage {stage} failed: {e}")
            raise StageError(stage, e) from e
        done.append(stage)
        run.write_manifest(done)
        if stage == stop_after or (stop_after == "high" and stage == "low" and not hierarchical):
            break
    return EXIT_OK


def exit_code(error: BaseException) -> int:
    if isinstance(error, StageError):
        return exit_code(error.cause)
    if isinstance(error, (ConfigError, MazeError)):
        return EXIT_CONFIG
    if isinstance(error, (OSError, DatasetError)):
        return EXIT_IO
    return EXIT_FAILURE


def main(argv: List[str] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        init_logger(level=args.log_level)
        return cmd_verify(args.n_mdps, args.seed, args.corrupt_formula, args.workers, args.report)

    try:
        config = config_from_args(args)
        config.validate()
        os.makedirs(str(config["output_dir"]), exist_ok=True)
        init_logger(os.path.join(str(config["output_dir"]), "run.log"), args.log_level)
        hierarchical = not getattr(args, "no_hierarchy", False)
        if args.command == "solve":
            return cmd_solve(config)
        if args.command == "gen-data":
            cmd_gen_data(config)
        elif args.command == "train":
            cmd_train(config, hierarchical, args.stage, args.progress)
        elif args.command == "eval":
            cmd_eval(config, hierarchical)
        elif args.command == "export":
            return cmd_export(config)
        elif args.command == "pipeline":
            return cmd_pipeline(config, hierarchical, args.stage, args.progress)
        return EXIT_OK
    except Exception as e:
        code = exit_code(e)
        get_logger().error(f"{args.command} failed ({type(e).__name__}): {e}")
        print(f"error: {e}", file=sys.stderr)
        return code
