from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple
import math

import numpy as np

from src.Maze.Maze import MazeEnv, Task
from src.Mdp.Mdp import RewardVector
from src.utils.logger import get_logger


class EvaluationError(ValueError):
    """
    Raised for evaluation requests that make no sense: success rates of reward tasks, too few seeds, ...
    """


@dataclass(frozen=True)
class RolloutRecord:
    """
    One episode. rewards[t] = r(states[t]); there is one action per state except after the last one.
    """
    states: List[int]
    actions: List[int]
    subgoals: List[Optional[int]]
    rewards: List[float]
    success: bool

    @property
    def episode_return(self) -> float:
        return math.fsum(self.rewards)

    def __len__(self):
        return len(self.states)


@dataclass
class TaskResult:
    task: str
    agent: str
    metric: str
    per_seed: List[float]
    mean: float
    sd: float
    pre_mean: float
    post_mean: float
    records: List[RolloutRecord] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"task": self.task, "agent": self.agent, "metric": self.metric, "per_seed": list(self.per_seed),
                "mean": self.mean, "sd": self.sd, "pre": self.pre_mean, "post": self.post_mean}


def rollout(env: MazeEnv, agent, task: Task, seed: int, latent: np.ndarray = None, max_steps: int = None,
            greedy: bool = False) -> RolloutRecord:
    """
    Run one episode. Goal tasks stop on the goal cell; every task stops after max_steps states
    (task.episode_length by default).
    """
    rng = np.random.default_rng(seed)
    max_steps = task.episode_length if max_steps is None else int(max_steps)
    reward = env.task_reward(task).values
    goal = env.cell_map.state(task.goal_cell) if task.is_goal_task else None
    starts = env.start_states(task)
    s = starts[int(rng.integers(len(starts)))]
    memory = agent.new_memory()

    states, actions, subgoals, rewards = [], [], [], []
    success = False
    while True:
        states.append(int(s))
        rewards.append(float(reward[s]))
        if goal is not None and s == goal:
            success = True
            break
        if len(states) >= max_steps:
            break
        a, w = agent.act(s, latent, rng, greedy, memory)
        actions.append(int(a))
        subgoals.append(w)
        s = env.step(s, a, rng)
    return RolloutRecord(states, actions, subgoals, rewards, success)


def highest_reward_state(reward: RewardVector) -> int:
    """
    argmax of the reward, lowest index on ties.
    """
    return int(np.argmax(reward.values))


def return_decomposition(record: RolloutRecord, reward: RewardVector) -> Tuple[float, float]:
    """
    Split the return at the first visit of the highest-reward state; the visit itself counts as post.
    """
    target = highest_reward_state(reward)
    split = record.states.index(target) if target in record.states else len(record.states)
    return math.fsum(record.rewards[:split]), math.fsum(record.rewards[split:])


def episode_seed(seed: int, seed_index: int, episode: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(seed_index), int(episode)]).generate_state(1, np.uint64)[0])


def evaluate_task(env: MazeEnv, agent, task: Task, latent: np.ndarray = None, n_episodes: int = 50,
                  n_seeds: int = 3, seed: int = 0, greedy: bool = False, workers: int = 1,
                  keep_records: bool = False) -> TaskResult:
    """
    Success rate (percent) on goal tasks, mean undiscounted return otherwise, per evaluation seed.
    Episodes use derived seeds, so the result does not depend on workers.
    """
    logger = get_logger()
    if n_episodes < 1 or n_seeds < 1:
        raise EvaluationError("need at least one episode and one seed")
    reward = env.task_reward(task)
    jobs = [(i, e) for i in range(n_seeds) for e in range(n_episodes)]

    def run(job):
        return rollout(env, agent, task, episode_seed(seed, *job), latent, greedy=greedy)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            records = list(executor.map(run, jobs))
    else:
        records = [run(job) for job in jobs]

    metric = "success" if task.is_goal_task else "return"
    per_seed = []
    for i in range(n_seeds):
        chunk = records[i * n_episodes:(i + 1) * n_episodes]
        if task.is_goal_task:
            per_seed.append(100.0 * sum(r.success for r in chunk) / n_episodes)
        else:
            per_seed.append(math.fsum(r.episode_return for r in chunk) / n_episodes)
    split = [return_decomposition(r, reward) for r in records]

    result = TaskResult(
        task=task.name,
        agent=getattr(agent, "name", type(agent).__name__),
        metric=metric,
        per_seed=per_seed,
        mean=float(np.mean(per_seed)),
        sd=float(np.std(per_seed)),
        pre_mean=math.fsum(p for p, _ in split) / len(split),
        post_mean=math.fsum(q for _, q in split) / len(split),
        records=records if keep_records else [],
    )
    logger.debug(f"{result.agent} on {task.name}: {metric} {result.mean:.3f} +- {result.sd:.3f}")
    return result


def success_rate(env: MazeEnv, agent, task: Task, n_episodes: int, n_seeds: int, latent: np.ndarray = None,
                 seed: int = 0, greedy: bool = False, workers: int = 1) -> Tuple[float, float]:
    """
    :return: (mean, sd) over seeds of the per-seed success percentage.
    """
    if not task.is_goal_task:
        raise EvaluationError(f"task {task.name} has no goal")
    result = evaluate_task(env, agent, task, latent, n_episodes, n_seeds, seed, greedy, workers)
    return result.mean, result.sd
