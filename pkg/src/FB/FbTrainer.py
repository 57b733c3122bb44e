from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
from tqdm import tqdm

from src.Dataset.OfflineDataset import (OfflineDataset, DatasetError, latent_mix_schedule, sample_latents,
                                        sample_states, sample_transitions)
from src.FB.FbLosses import orthonorm_loss, rep_loss
from src.FB.FbModel import ExpectileConfig, FbModel
from src.NN.Optim import Adam
from src.utils.logger import get_logger


@dataclass(frozen=True)
class RepTrainConfig:
    epochs: int = 50
    steps_per_epoch: int = 1000
    batch_size: int = 32
    lr: float = 3e-4
    expectile: float = 0.7
    orthonorm_coeff: float = 1e-4
    query_p_cur: float = 0.2
    latent_mix_start: float = 0.0
    latent_mix_end: float = 0.5
    exact_intrinsic_reward: bool = True
    seed: int = 0
    log_every: int = 1000

    @classmethod
    def from_config(cls, config, seed: int) -> "RepTrainConfig":
        training = config["training"]
        return cls(
            epochs=int(training["epochs_rep"]),
            steps_per_epoch=int(training["steps_per_epoch"]),
            batch_size=int(training["batch_size"]),
            lr=float(training["lr"]),
            expectile=float(training["expectile"]),
            orthonorm_coeff=float(training["orthonorm_coeff"]),
            query_p_cur=float(training["query_p_cur"]),
            latent_mix_start=float(training["latent_mix_start"]),
            latent_mix_end=float(training["latent_mix_end"]),
            exact_intrinsic_reward=bool(training["exact_intrinsic_reward"]),
            seed=int(seed),
        )


Schedule = Callable[[int, int], float]


class FbTrainer:
    """
    Stage 1: fits F and B on an offline dataset with the expectile representation loss plus the
    orthonormalization penalty, Adam on the online parameters and Polyak updates of both targets.
    """
    def __init__(self, cfg: RepTrainConfig, progress: bool = False):
        self.logger = get_logger()
        self.cfg = cfg
        self.expectile = ExpectileConfig(cfg.expectile)
        self.progress = progress

    def schedule(self, epoch: int, n_epochs: int) -> float:
        return latent_mix_schedule(epoch, n_epochs, self.cfg.latent_mix_start, self.cfg.latent_mix_end)

    def sample_queries(self, ds: OfflineDataset, current: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """
        s' = s_t with probability query_p_cur, a rho-random state otherwise.
        """
        random_states = sample_states(ds, current.size, rng)
        use_current = rng.random(current.size) < self.cfg.query_p_cur
        return np.where(use_current, current, random_states)

    def step(self, model: FbModel, ds: OfflineDataset, mix: float, rng: np.random.Generator) -> Tuple[float, float]:
        """
        One gradient step.
        :return: (representation loss, scaled orthonormalization loss).
        """
        cfg = self.cfg
        batch = sample_transitions(ds, cfg.batch_size, rng)
        queries = self.sample_queries(ds, batch.states, rng)
        latents = sample_latents(ds, model.b_table, cfg.batch_size, mix, rng)

        loss, grads = rep_loss(model, self.expectile, batch, queries, latents,
                               exact_reward=cfg.exact_intrinsic_reward, rho=ds.rho)
        ortho, ortho_grads = orthonorm_loss(model, sample_states(ds, cfg.batch_size, rng), cfg.orthonorm_coeff)
        grads["B"] = grads["B"] + ortho_grads["B"]

        model.optimizer.step(model.parameters(), grads)
        model.polyak_update()
        return loss, ortho

    def train(self, model: FbModel, ds: OfflineDataset, schedule: Schedule = None) -> Tuple[FbModel, List[float]]:
        """
        Train in place.
        :param schedule: (epoch, n_epochs) -> sphere-latent probability; linear anneal by default.
        :return: (the model, per-step total loss trace).
        """
        cfg = self.cfg
        if ds.n_transitions == 0:
            raise DatasetError("cannot train on a dataset without transitions")
        schedule = schedule or self.schedule
        rng = np.random.default_rng(cfg.seed)
        if model.optimizer is None:
            model.optimizer = Adam(cfg.lr)
        trace: List[float] = []

        self.logger.debug(f"Training representation for {cfg.epochs} epochs x {cfg.steps_per_epoch} steps "
                          f"(batch {cfg.batch_size}, seed {cfg.seed})")
        for epoch in tqdm(range(cfg.epochs), desc="representation", disable=not self.progress):
            mix = schedule(epoch, cfg.epochs)
            for _ in range(cfg.steps_per_epoch):
                loss, ortho = self.step(model, ds, mix, rng)
                trace.append(loss + ortho)
                if not np.isfinite(trace[-1]):
                    self.logger.error(f"Non-finite representation loss at step {len(trace)}")
                    raise FloatingPointError(f"representation loss diverged at step {len(trace)}")
                if len(trace) % cfg.log_every == 0:
                    recent = float(np.mean(trace[-cfg.log_every:]))
                    self.logger.debug(f"epoch {epoch} step {len(trace)}: loss {recent:.6f} (latent mix {mix:.3f})")
        return model, trace


def train(model: FbModel, ds: OfflineDataset, cfg: RepTrainConfig, schedule: Schedule = None,
          progress: bool = False) -> Tuple[FbModel, List[float]]:
    return FbTrainer(cfg, progress).train(model, ds, schedule)
