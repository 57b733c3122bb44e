from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from tqdm import tqdm

from src.Dataset.OfflineDataset import (GoalSamplerConfig, OfflineDataset, sample_goals, sample_latents,
                                        sample_transitions)
from src.FB.FbModel import FbModel
from src.Hierarchy.Policies import AwrConfig, HighPolicy, LowPolicy, act_loss, plan_loss
from src.NN.Optim import Adam
from src.utils.logger import get_logger


@dataclass(frozen=True)
class PolicyTrainConfig:
    epochs: int = 20
    steps_per_epoch: int = 1000
    batch_size: int = 32
    lr: float = 3e-4
    hidden: Tuple[int, ...] = (64, 64)
    latent_mix: float = 0.5
    temperature: float = 1.0
    advantage: str = "proxy"
    awr: AwrConfig = field(default_factory=AwrConfig)
    seed: int = 0
    log_every: int = 1000

    @classmethod
    def from_config(cls, config, seed: int) -> "PolicyTrainConfig":
        policy = config["policy"]
        return cls(
            epochs=int(policy["epochs"]),
            steps_per_epoch=int(policy["steps_per_epoch"]),
            batch_size=int(policy["batch_size"]),
            lr=float(policy["lr"]),
            hidden=tuple(int(h) for h in policy["hidden"]),
            latent_mix=float(policy["latent_mix"]),
            temperature=float(policy["temperature"]),
            advantage=str(policy["advantage"]),
            awr=AwrConfig(float(policy["beta_low"]), float(policy["beta_high"]), float(policy["adv_clip"])),
            seed=int(seed),
        )


class PolicyTrainer:
    """
    Stages 2 and 3: AWR on top of a frozen representation. The two loops share nothing but the
    FbModel, which they only read.
    """
    def __init__(self, cfg: PolicyTrainConfig, progress: bool = False):
        self.logger = get_logger()
        self.cfg = cfg
        self.progress = progress

    def _loop(self, name: str, net, step) -> List[float]:
        cfg = self.cfg
        optimizer = Adam(cfg.lr)
        rng = np.random.default_rng(cfg.seed)
        trace: List[float] = []
        self.logger.debug(f"Training {name} policy for {cfg.epochs} epochs x {cfg.steps_per_epoch} steps "
                          f"(seed {cfg.seed})")
        for epoch in tqdm(range(cfg.epochs), desc=name, disable=not self.progress):
            for _ in range(cfg.steps_per_epoch):
                loss, grads = step(rng)
                optimizer.step(net.params, grads)
                trace.append(loss)
                if len(trace) % cfg.log_every == 0:
                    self.logger.debug(f"{name} epoch {epoch} step {len(trace)}: "
                                      f"loss {float(np.mean(trace[-cfg.log_every:])):.6f}")
        return trace

    def train_high(self, model: FbModel, ds: OfflineDataset, high: HighPolicy = None) -> Tuple[HighPolicy, List[float]]:
        """
        Subgoals are future states of the anchor's own trajectory, uniform over the remaining steps.
        """
        cfg = self.cfg
        high = high or HighPolicy(model.n_states, model.d, cfg.hidden, cfg.seed, cfg.temperature)
        goal_cfg = GoalSamplerConfig.high_actor_goals()

        def step(rng):
            anchors = sample_transitions(ds, cfg.batch_size, rng).slots
            subgoals = sample_goals(ds, anchors, goal_cfg, rng)
            latents = sample_latents(ds, model.b_table, cfg.batch_size, cfg.latent_mix, rng)
            return plan_loss(high, model, ds.states[anchors], subgoals, latents, cfg.awr, cfg.advantage)

        return high, self._loop("high", high.net, step)

    def train_low(self, model: FbModel, ds: OfflineDataset, n_actions: int,
                  low: LowPolicy = None) -> Tuple[LowPolicy, List[float]]:
        cfg = self.cfg
        low = low or LowPolicy(model.n_states, n_actions, model.d, cfg.hidden, cfg.seed, cfg.temperature)

        def step(rng):
            batch = sample_transitions(ds, cfg.batch_size, rng)
            latents = sample_latents(ds, model.b_table, cfg.batch_size, cfg.latent_mix, rng)
            return act_loss(low, model, batch, latents, cfg.awr)

        return low, self._loop("low", low.net, step)


def train_high(model: FbModel, ds: OfflineDataset, cfg: PolicyTrainConfig, progress: bool = False):
    return PolicyTrainer(cfg, progress).train_high(model, ds)


def train_low(model: FbModel, ds: OfflineDataset, n_actions: int, cfg: PolicyTrainConfig, progress: bool = False):
    return PolicyTrainer(cfg, progress).train_low(model, ds, n_actions)
