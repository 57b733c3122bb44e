from dataclasses import dataclass
from typing import List, Optional, Tuple
import json
import struct

import numpy as np

from src.Mdp.Mdp import Mdp, PolicyTable, StateDist
from src.utils.logger import get_logger
from src.utils.seeding import derived_rng

MAGIC = b"SSDS"
FORMAT_VERSION = 1
GENERATION_BLOCK = 1024


class DatasetError(ValueError):
    """
    Raised for empty datasets, malformed files and invalid sampler settings.
    """


@dataclass(frozen=True)
class Trajectory:
    """
    One trajectory: states s_0..s_{T-1} and the T-1 actions between them.
    """
    states: np.ndarray
    actions: np.ndarray


@dataclass(frozen=True)
class TransitionBatch:
    """
    Uniformly sampled (s_t, a_t, s_{t+1}) with the flat index of s_t.
    """
    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    slots: np.ndarray

    def __len__(self):
        return int(self.states.shape[0])


@dataclass(frozen=True)
class GoalSamplerConfig:
    """
    Mixture over current state, future state of the same trajectory and random dataset state.
    """
    p_cur: float
    p_traj: float
    p_rand: float
    geometric: bool = False
    geometric_param: Optional[float] = None

    def __post_init__(self):
        probs = (self.p_cur, self.p_traj, self.p_rand)
        if min(probs) < 0.0 or abs(sum(probs) - 1.0) > 1e-9:
            raise DatasetError(f"goal mixture {probs} must be probabilities summing to 1")
        if self.geometric_param is not None and not 0.0 < self.geometric_param <= 1.0:
            raise DatasetError("geometric parameter must lie in (0, 1]")

    @classmethod
    def value_goals(cls, discount: float):
        return cls(0.2, 0.5, 0.3, geometric=True, geometric_param=1.0 - discount)

    @classmethod
    def high_actor_goals(cls):
        return cls(0.0, 1.0, 0.0, geometric=False)


class OfflineDataset:
    """
    Trajectories stored as flat state/action arrays with per-trajectory offsets.

    states[offsets[i]:offsets[i + 1]] are the states of trajectory i; actions use the same
    slots, with the last slot of each trajectory unused (-1).
    """
    def __init__(self, states: np.ndarray, actions: np.ndarray, offsets: np.ndarray, n_states: int,
                 seed: int = 0, meta: dict = None):
        self.states = np.asarray(states, dtype=np.int64)
        self.actions = np.asarray(actions, dtype=np.int64)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.n_states = int(n_states)
        self.seed = int(seed)
        self.meta = dict(meta or {})
        for array in (self.states, self.actions, self.offsets):
            array.setflags(write=False)

        lengths = np.diff(self.offsets)
        self.traj_ids = np.repeat(np.arange(lengths.size), lengths)
        self.traj_ends = np.repeat(self.offsets[1:], lengths)
        last = np.zeros(self.states.size, dtype=bool)
        last[self.offsets[1:] - 1] = True
        self.transition_slots = np.flatnonzero(~last)
        self.rho = StateDist(np.bincount(self.states, minlength=self.n_states) / max(self.states.size, 1)) \
            if self.states.size else None

    @property
    def n_traj(self) -> int:
        return int(self.offsets.size - 1)

    @property
    def n_transitions(self) -> int:
        return int(self.transition_slots.size)

    def trajectory(self, index: int) -> Trajectory:
        start, end = int(self.offsets[index]), int(self.offsets[index + 1])
        return Trajectory(self.states[start:end], self.actions[start:end - 1])

    def anchor_index(self, traj: int, t: int) -> int:
        """
        Flat slot of (trajectory id, time step).
        """
        start, end = int(self.offsets[traj]), int(self.offsets[traj + 1])
        if not 0 <= t < end - start:
            raise DatasetError(f"time step {t} outside trajectory {traj} of length {end - start}")
        return start + int(t)

    def equals(self, other: "OfflineDataset") -> bool:
        return (self.n_states == other.n_states and np.array_equal(self.states, other.states)
                and np.array_equal(self.actions, other.actions) and np.array_equal(self.offsets, other.offsets))

    @classmethod
    def from_trajectories(cls, trajectories: List[Trajectory], n_states: int, seed: int = 0, meta: dict = None):
        lengths = [len(t.states) for t in trajectories]
        offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        states = np.concatenate([np.asarray(t.states, dtype=np.int64) for t in trajectories]) \
            if trajectories else np.zeros(0, dtype=np.int64)
        actions = np.concatenate([np.append(np.asarray(t.actions, dtype=np.int64), -1) for t in trajectories]) \
            if trajectories else np.zeros(0, dtype=np.int64)
        return cls(states, actions, offsets, n_states, seed, meta)


def _sample_rows(cumulative: np.ndarray, u: np.ndarray) -> np.ndarray:
    """
    Inverse-CDF draw per row of a cumulative table.
    """
    choice = (u[:, None] * cumulative[:, -1:] >= cumulative).sum(axis=1)
    return np.minimum(choice, cumulative.shape[1] - 1)


def generate(mdp: Mdp, policy: PolicyTable, n_traj: int, max_len: int, seed: int,
             start: StateDist = None) -> OfflineDataset:
    """
    Roll out a behaviour policy. Trajectories are generated in fixed blocks, each with its own
    generator derived from (seed, block), so the result does not depend on how work is split.
    :param mdp: Dynamics.
    :param policy: Behaviour policy.
    :param n_traj: Number of trajectories.
    :param max_len: States per trajectory.
    :param seed: Dataset seed.
    :param start: Start distribution, uniform over states by default.
    :return: The dataset.
    """
    if n_traj < 1 or max_len < 1:
        raise DatasetError("n_traj and max_len must be positive")
    logger = get_logger()
    start = start or StateDist.uniform(mdp.n_states)
    start_cdf = np.cumsum(start.probs)[None, :]
    policy_cdf = np.cumsum(policy.probs, axis=1)
    transition_cdf = np.cumsum(mdp.transitions, axis=2)

    states = np.zeros((n_traj, max_len), dtype=np.int64)
    actions = np.full((n_traj, max_len), -1, dtype=np.int64)
    for block, first in enumerate(range(0, n_traj, GENERATION_BLOCK)):
        last = min(first + GENERATION_BLOCK, n_traj)
        size = last - first
        rng = derived_rng(seed, block)
        current = _sample_rows(np.repeat(start_cdf, size, axis=0), rng.random(size))
        states[first:last, 0] = current
        for t in range(1, max_len):
            action = _sample_rows(policy_cdf[current], rng.random(size))
            current = _sample_rows(transition_cdf[current, action], rng.random(size))
            actions[first:last, t - 1] = action
            states[first:last, t] = current

    offsets = np.arange(0, n_traj * max_len + 1, max_len, dtype=np.int64)
    dataset = OfflineDataset(states.reshape(-1), actions.reshape(-1), offsets, mdp.n_states, seed,
                             meta={"n_traj": n_traj, "max_len": max_len, "policy": policy.tag})
    logger.debug(f"Generated {n_traj} trajectories of length {max_len} (seed {seed})")
    return dataset


def sample_transitions(ds: OfflineDataset, batch: int, rng: np.random.Generator) -> TransitionBatch:
    """
    Uniform draw over transition slots.
    """
    if ds.n_transitions == 0:
        raise DatasetError("dataset has no transitions")
    if batch < 1:
        raise DatasetError("batch must be positive")
    slots = ds.transition_slots[rng.integers(ds.n_transitions, size=batch)]
    return TransitionBatch(ds.states[slots], ds.actions[slots], ds.states[slots + 1], slots)


def sample_states(ds: OfflineDataset, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    rho-random states: uniform over stored state slots.
    """
    if ds.states.size == 0:
        raise DatasetError("dataset is empty")
    return ds.states[rng.integers(ds.states.size, size=n)]


def sample_goals(ds: OfflineDataset, anchors: np.ndarray, cfg: GoalSamplerConfig,
                 rng: np.random.Generator) -> np.ndarray:
    """
    Vectorised goal sampler for flat anchor slots.

    Future goals use offset >= 1: geometric(cfg.geometric_param) with the tail mass placed on the
    final state when cfg.geometric is set, uniform over the remaining states otherwise. An anchor on
    the final state of its trajectory has no future and returns itself.
    """
    anchors = np.asarray(anchors, dtype=np.int64)
    n = anchors.size
    u = rng.random(n)
    kind = np.where(u < cfg.p_cur, 0, np.where(u < cfg.p_cur + cfg.p_traj, 1, 2))
    remaining = ds.traj_ends[anchors] - 1 - anchors

    if cfg.geometric:
        if cfg.geometric_param is None:
            raise DatasetError("geometric goal sampling needs a geometric parameter")
        offset = rng.geometric(cfg.geometric_param, size=n)
    else:
        offset = 1 + np.floor(rng.random(n) * np.maximum(remaining, 1)).astype(np.int64)
    offset = np.minimum(offset, remaining)

    random_states = sample_states(ds, n, rng)
    goals = np.where(kind == 0, ds.states[anchors], np.where(kind == 1, ds.states[anchors + offset], random_states))
    return goals.astype(np.int64)


def sample_goal(ds: OfflineDataset, anchor: Tuple[int, int], cfg: GoalSamplerConfig, rng: np.random.Generator) -> int:
    """
    Single goal for an anchor (trajectory id, time step).
    """
    return int(sample_goals(ds, np.array([ds.anchor_index(*anchor)]), cfg, rng)[0])


def normalize_latents(z: np.ndarray, d: int) -> np.ndarray:
    """
    Rescale rows to norm sqrt(d). Zero rows stay zero.
    """
    norms = np.linalg.norm(z, axis=-1, keepdims=True)
    return z * (np.sqrt(d) / np.maximum(norms, 1e-300))


def sample_latents(ds: OfflineDataset, b_table: np.ndarray, n: int, mix_prob: float,
                   rng: np.random.Generator) -> np.ndarray:
    """
    n latents: uniform on the radius-sqrt(d) sphere with probability mix_prob, otherwise B(s) for a
    rho-random s, rescaled to norm sqrt(d).
    """
    d = int(b_table.shape[1])
    if d == 0:
        raise DatasetError("latent dimension must be positive")
    if not 0.0 <= mix_prob <= 1.0:
        raise DatasetError("latent mix probability must lie in [0, 1]")
    sphere = normalize_latents(rng.normal(size=(n, d)), d)
    from_states = normalize_latents(b_table[sample_states(ds, n, rng)], d)
    use_sphere = rng.random(n) < mix_prob
    return np.where(use_sphere[:, None], sphere, from_states)


def sample_latent(ds: OfflineDataset, b_table: np.ndarray, d: int, mix_prob: float, rng: np.random.Generator) -> np.ndarray:
    if d != b_table.shape[1]:
        raise DatasetError(f"latent dimension {d} does not match backward table width {b_table.shape[1]}")
    return sample_latents(ds, b_table, 1, mix_prob, rng)[0]


def latent_mix_schedule(epoch: int, n_epochs: int, start: float = 0.0, end: float = 0.5) -> float:
    """
    Linear anneal of the sphere-latent probability over training epochs.
    """
    if n_epochs <= 1:
        return float(end)
    fraction = min(max(epoch / (n_epochs - 1), 0.0), 1.0)
    return float(start + (end - start) * fraction)


def save_dataset(ds: OfflineDataset, path: str, config: dict = None):
    """
    Binary file: "SSDS", version u32, n_traj u64, then per trajectory a u32 length followed by
    the u32 states and the u32 actions (length - 1 of them). A JSON sidecar holds seed and config.
    """
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", FORMAT_VERSION, ds.n_traj))
        for i in range(ds.n_traj):
            trajectory = ds.trajectory(i)
            f.write(struct.pack("<I", trajectory.states.size))
            f.write(trajectory.states.astype("<u4").tobytes())
            f.write(trajectory.actions.astype("<u4").tobytes())
    with open(path + ".json", "w") as f:
        json.dump({"seed": ds.seed, "n_states": ds.n_states, "meta": ds.meta, "config": config or {}},
                  f, sort_keys=True, indent=2)


def load_dataset(path: str) -> OfflineDataset:
    with open(path + ".json", "r") as f:
        sidecar = json.load(f)
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise DatasetError(f"{path} is not a dataset file")
    version, n_traj = struct.unpack_from("<IQ", data, 4)
    if version != FORMAT_VERSION:
        raise DatasetError(f"unsupported dataset version {version}")
    position = 4 + struct.calcsize("<IQ")
    trajectories = []
    for _ in range(n_traj):
        (length,) = struct.unpack_from("<I", data, position)
        position += 4
        states = np.frombuffer(data, dtype="<u4", count=length, offset=position).astype(np.int64)
        position += 4 * length
        actions = np.frombuffer(data, dtype="<u4", count=max(length - 1, 0), offset=position).astype(np.int64)
        position += 4 * max(length - 1, 0)
        trajectories.append(Trajectory(states, actions))
    return OfflineDataset.from_trajectories(trajectories, sidecar["n_states"], sidecar["seed"], sidecar.get("meta"))
