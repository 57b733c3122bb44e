from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import special

from src.FB.FbModel import FbModel
from src.Hierarchy.Policies import HighPolicy, LowPolicy
from src.Mdp.Mdp import PolicyTable
from src.utils.csv_io import write_rows


def _choose(probs: np.ndarray, logits: np.ndarray, rng: Optional[np.random.Generator], greedy: bool) -> int:
    """
    Greedy picks the first maximal logit; otherwise one inverse-CDF draw.
    """
    if greedy:
        return int(np.argmax(logits))
    cumulative = np.cumsum(probs)
    return int(min(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"), probs.size - 1))


@dataclass
class AgentMemory:
    """
    Per-episode state: the current subgoal and how many more steps it stays committed.
    """
    subgoal: Optional[int] = None
    steps_left: int = 0


class HierAgent:
    """
    pi^h picks a subgoal w, pi^l acts towards z_w = B(w). With hierarchical=False the task
    latent goes straight to pi^l.
    """
    def __init__(self, model: FbModel, low: LowPolicy, high: HighPolicy = None, hierarchical: bool = True,
                 commitment: int = 1):
        if hierarchical and high is None:
            raise ValueError("a hierarchical agent needs a high-level policy")
        if commitment < 1:
            raise ValueError("commitment must be at least one step")
        self.model = model
        self.low = low
        self.high = high
        self.hierarchical = hierarchical
        self.commitment = int(commitment)

    @property
    def name(self) -> str:
        return "hierarchical" if self.hierarchical else "flat"

    def new_memory(self) -> AgentMemory:
        return AgentMemory()

    def act(self, s: int, z_r: np.ndarray, rng: Optional[np.random.Generator], greedy: bool = False,
            memory: AgentMemory = None) -> Tuple[int, Optional[int]]:
        """
        :return: (action, subgoal or None in flat mode).
        """
        subgoal = None
        z = z_r
        if self.hierarchical:
            if memory is None or memory.steps_left <= 0 or memory.subgoal is None:
                logits = self.high.logits(s, z_r)[0]
                subgoal = _choose(special.softmax(logits / self.high.temperature), logits, rng, greedy)
                if memory is not None:
                    memory.subgoal, memory.steps_left = subgoal, self.commitment
            else:
                subgoal = memory.subgoal
            if memory is not None:
                memory.steps_left -= 1
            z = self.model.subgoal_latent(subgoal)
        logits = self.low.logits(s, z)[0]
        action = _choose(special.softmax(logits / self.low.temperature), logits, rng, greedy)
        return action, subgoal


class TabularAgent:
    """
    Acts from a fixed PolicyTable; the latent is ignored.
    """
    def __init__(self, policy: PolicyTable, name: str = None):
        self.policy = policy
        self.name = name or policy.tag

    def new_memory(self):
        return None

    def act(self, s: int, z_r: np.ndarray, rng: Optional[np.random.Generator], greedy: bool = False,
            memory=None) -> Tuple[int, Optional[int]]:
        probs = self.policy.probs[int(s)]
        return _choose(probs, probs, rng, greedy), None


def subgoal_trace_csv(states: Sequence[int], subgoals: Sequence[Optional[int]], actions: Sequence[int], path: str):
    """
    One "t,s,w,a" row per action taken; w is empty for flat agents.
    """
    rows = [(t, int(states[t]), "" if subgoals[t] is None else int(subgoals[t]), int(actions[t]))
            for t in range(len(actions))]
    write_rows(path, ["t", "s", "w", "a"], rows)
