from dataclasses import dataclass
from typing import List
import json

import numpy as np

PROB_TOL = 1e-12


class MdpError(ValueError):
    """
    Raised for malformed MDPs, policies, rewards or state distributions.
    """


def _frozen(array, dtype=np.float64) -> np.ndarray:
    array = np.array(array, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


def _row_violations(rows: np.ndarray, name: str) -> List[str]:
    violations = []
    if not np.all(np.isfinite(rows)):
        violations.append(f"{name}: non-finite entries")
        return violations
    negative = np.argwhere(rows < 0.0)
    for index in negative:
        violations.append(f"{name}: negative entry at {tuple(int(i) for i in index)}")
    sums = rows.sum(axis=-1)
    for index in np.argwhere(np.abs(sums - 1.0) > PROB_TOL):
        violations.append(f"{name}: row {tuple(int(i) for i in index)} sums to {float(sums[tuple(index)])!r}")
    return violations


@dataclass(frozen=True)
class Mdp:
    """
    Tabular MDP: P[s][a][s'] plus discount. States and actions are dense 0-based indices.
    """
    transitions: np.ndarray
    discount: float

    def __post_init__(self):
        object.__setattr__(self, "transitions", _frozen(self.transitions))
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def n_states(self) -> int:
        return int(self.transitions.shape[0])

    @property
    def n_actions(self) -> int:
        return int(self.transitions.shape[1])

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "discount": self.discount,
            "transitions": self.transitions.tolist(),
        }


@dataclass(frozen=True)
class PolicyTable:
    """
    Stochastic policy pi[s][a]. Deterministic policies are one-hot rows.
    """
    probs: np.ndarray
    tag: str = "policy"

    def __post_init__(self):
        probs = _frozen(self.probs)
        if probs.ndim != 2:
            raise MdpError(f"policy must be a |S|x|A| matrix, got shape {probs.shape}")
        violations = _row_violations(probs, "policy")
        if violations:
            raise MdpError("; ".join(violations))
        object.__setattr__(self, "probs", probs)

    @classmethod
    def deterministic(cls, actions, n_actions: int, tag: str = "deterministic"):
        """
        Build a one-hot policy from an action index per state.
        """
        actions = np.asarray(actions, dtype=np.int64)
        return cls(np.eye(n_actions)[actions], tag=tag)


@dataclass(frozen=True)
class RewardVector:
    """
    State reward r[s].
    """
    values: np.ndarray
    name: str = "reward"

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 1:
            raise MdpError(f"reward must be a vector, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise MdpError("reward has non-finite entries")
        object.__setattr__(self, "values", values)

    def __add__(self, other: "RewardVector") -> "RewardVector":
        return RewardVector(self.values + other.values, name=f"{self.name}+{other.name}")

    def scaled(self, factor: float) -> "RewardVector":
        return RewardVector(self.values * factor, name=f"{factor}*{self.name}")


@dataclass(frozen=True)
class StateDist:
    """
    Distribution over states.
    """
    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen(self.probs)
        if probs.ndim != 1:
            raise MdpError(f"state distribution must be a vector, got shape {probs.shape}")
        violations = _row_violations(probs, "state distribution")
        if violations:
            raise MdpError("; ".join(violations))
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, n_states: int):
        return cls(np.full(n_states, 1.0 / n_states))


def validate_mdp(mdp: Mdp) -> List[str]:
    """
    Check every invariant of an MDP.
    :param mdp: The MDP to check.
    :return: Violation descriptions, empty when the MDP is well formed.
    """
    violations = []
    transitions = mdp.transitions
    if transitions.ndim != 3 or transitions.shape[0] != transitions.shape[2]:
        return [f"transitions must have shape (S, A, S), got {transitions.shape}"]
    if transitions.shape[0] < 1 or transitions.shape[1] < 1:
        return ["transitions must have at least one state and one action"]
    if not np.all(np.isfinite(transitions)):
        violations.append("transitions: non-finite entries")
    else:
        for s, a in sorted({(int(s), int(a)) for s, a, _ in np.argwhere(transitions < 0.0)}):
            violations.append(f"negative transition probability at (s={s},a={a})")
        sums = transitions.sum(axis=2)
        for s, a in np.argwhere(np.abs(sums - 1.0) > PROB_TOL):
            violations.append(f"row (s={int(s)},a={int(a)}) sums to {float(sums[s, a])!r}")
    if not (0.0 < mdp.discount < 1.0):
        violations.append(f"discount out of range: {mdp.discount!r}")
    return violations


def policy_transition_matrix(mdp: Mdp, pi: PolicyTable) -> np.ndarray:
    """
    P_pi[s][s'] = sum_a pi[s][a] P[s][a][s'].
    """
    if pi.probs.shape != (mdp.n_states, mdp.n_actions):
        raise MdpError(f"policy shape {pi.probs.shape} does not match MDP ({mdp.n_states}, {mdp.n_actions})")
    return np.einsum("sa,sat->st", pi.probs, mdp.transitions)


def indicator_reward(mdp: Mdp, g: int) -> RewardVector:
    """
    r_g: 1 at g, 0 elsewhere.
    """
    if not 0 <= int(g) < mdp.n_states:
        raise MdpError(f"state index {g} out of range for {mdp.n_states} states")
    values = np.zeros(mdp.n_states)
    values[int(g)] = 1.0
    return RewardVector(values, name=f"indicator_{int(g)}")


def uniform_policy(n_states: int, n_actions: int) -> PolicyTable:
    return PolicyTable(np.full((n_states, n_actions), 1.0 / n_actions), tag="uniform")


def random_policy(n_states: int, n_actions: int, rng: np.random.Generator) -> PolicyTable:
    probs = rng.dirichlet(np.ones(n_actions), size=n_states)
    return PolicyTable(probs / probs.sum(axis=1, keepdims=True), tag="random")


def random_mdp(n_states: int, n_actions: int, discount: float, rng: np.random.Generator) -> Mdp:
    """
    Dense random MDP: every P[s][a] is a Dirichlet(1) draw.
    """
    transitions = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    transitions /= transitions.sum(axis=2, keepdims=True)
    return Mdp(transitions, discount)


def sparse_trap_mdp(n_states: int, n_actions: int, discount: float, rng: np.random.Generator,
                    support: int = 2) -> Mdp:
    """
    Random MDP whose last state is an absorbing trap; every other P[s][a] is a Dirichlet(1) draw over
    `support` random states. Targets are then typically hit with probability strictly between 0 and 1.
    """
    if n_states < 2:
        raise MdpError("a trap MDP needs at least two states")
    support = min(int(support), n_states)
    transitions = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states - 1):
        for a in range(n_actions):
            targets = rng.choice(n_states, size=support, replace=False)
            transitions[s, a, targets] = rng.dirichlet(np.ones(support))
    transitions[n_states - 1, :, n_states - 1] = 1.0
    transitions /= transitions.sum(axis=2, keepdims=True)
    return Mdp(transitions, discount)


def mdp_from_dict(data: dict) -> Mdp:
    """
    Build an MDP from its JSON document, enforcing the invariants.
    :raises MdpError: listing every violation.
    """
    try:
        transitions = np.asarray(data["transitions"], dtype=np.float64)
        mdp = Mdp(transitions, float(data["discount"]))
    except (KeyError, TypeError, ValueError) as e:
        raise MdpError(f"malformed MDP document: {e}") from e
    violations = validate_mdp(mdp)
    if transitions.ndim == 3 and (int(data.get("n_states", mdp.n_states)) != mdp.n_states
                                  or int(data.get("n_actions", mdp.n_actions)) != mdp.n_actions):
        violations.append("declared n_states/n_actions disagree with the transition tensor")
    if violations:
        raise MdpError("; ".join(violations))
    return mdp


def save_mdp(mdp: Mdp, path: str):
    with open(path, "w") as f:
        json.dump(mdp.to_dict(), f)


def load_mdp(path: str) -> Mdp:
    with open(path, "r") as f:
        return mdp_from_dict(json.load(f))
