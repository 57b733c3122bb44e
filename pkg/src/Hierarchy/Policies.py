from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np
from scipy import special

from src.Dataset.OfflineDataset import TransitionBatch
from src.FB.FbModel import FbModel, f_value
from src.Hierarchy.Advantage import ADVANTAGES
from src.NN.Checkpoint import load_network, save_network
from src.NN.DenseNet import DenseNet

Params = Dict[str, np.ndarray]


@dataclass(frozen=True)
class AwrConfig:
    beta_low: float = 3.0
    beta_high: float = 0.1
    adv_clip: float = 5.0

    def __post_init__(self):
        if self.beta_low < 0.0 or self.beta_high < 0.0:
            raise ValueError("AWR temperatures must be non-negative")
        if self.adv_clip <= 0.0:
            raise ValueError("advantage clip must be positive")


def awr_weights(advantage: np.ndarray, beta: float, clip: float) -> np.ndarray:
    """
    exp(beta * min(A, clip)). No lower clip.
    """
    return np.exp(beta * np.minimum(np.asarray(advantage, dtype=np.float64), clip))


def policy_inputs(n_states: int, states: np.ndarray, z: np.ndarray) -> np.ndarray:
    states = np.atleast_1d(np.asarray(states, dtype=np.int64))
    z = np.asarray(z, dtype=np.float64)
    z = np.broadcast_to(z if z.ndim == 2 else z[None, :], (states.size, z.shape[-1]))
    return np.concatenate([np.eye(n_states)[states], z], axis=1)


class CategoricalPolicy:
    """
    DenseNet on (one-hot state, latent) producing logits over a discrete set.
    """
    kind = "categorical"

    def __init__(self, n_states: int, n_outputs: int, d: int, hidden: Sequence[int] = (64, 64), seed: int = 0,
                 temperature: float = 1.0, net: DenseNet = None):
        if temperature <= 0.0:
            raise ValueError("temperature must be positive")
        self.n_states = int(n_states)
        self.n_outputs = int(n_outputs)
        self.d = int(d)
        self.temperature = float(temperature)
        self.net = net or DenseNet([self.n_states + self.d, *hidden, self.n_outputs], seed)

    def logits(self, states, z) -> np.ndarray:
        return self.net(policy_inputs(self.n_states, states, z))

    def probabilities(self, states, z) -> np.ndarray:
        return special.softmax(self.logits(states, z) / self.temperature, axis=-1)

    def weighted_cross_entropy(self, states, z, targets: np.ndarray, weights: np.ndarray) -> Tuple[float, Params]:
        """
        mean(weight * -log pi(target | s, z)) and its gradient; the temperature only shapes sampling.
        """
        targets = np.asarray(targets, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        n = targets.size
        logits, cache = self.net.forward(policy_inputs(self.n_states, states, z))
        log_probs = special.log_softmax(logits, axis=1)
        loss = float(np.mean(-weights * log_probs[np.arange(n), targets]))

        upstream = np.exp(log_probs)
        upstream[np.arange(n), targets] -= 1.0
        upstream *= (weights / n)[:, None]
        grads, _ = self.net.backward(cache, upstream)
        return loss, grads

    def save(self, path: str):
        save_network(path, self.net, {"kind": self.kind, "n_states": self.n_states, "n_outputs": self.n_outputs,
                                      "d": self.d, "temperature": self.temperature})

    @classmethod
    def load(cls, path: str):
        net, meta = load_network(path)
        if meta.get("kind") != cls.kind:
            raise ValueError(f"{path} holds a {meta.get('kind')} checkpoint, expected {cls.kind}")
        policy = cls.__new__(cls)
        CategoricalPolicy.__init__(policy, meta["n_states"], meta["n_outputs"], meta["d"],
                                   temperature=meta["temperature"], net=net)
        return policy


class HighPolicy(CategoricalPolicy):
    """
    pi^h(w | s, z): logits over candidate subgoal states.
    """
    kind = "high"

    def __init__(self, n_states: int, d: int, hidden: Sequence[int] = (64, 64), seed: int = 0,
                 temperature: float = 1.0):
        super().__init__(n_states, n_states, d, hidden, seed, temperature)


class LowPolicy(CategoricalPolicy):
    """
    pi^l(a | s, z): logits over actions.
    """
    kind = "low"

    def __init__(self, n_states: int, n_actions: int, d: int, hidden: Sequence[int] = (64, 64), seed: int = 0,
                 temperature: float = 1.0):
        super().__init__(n_states, n_actions, d, hidden, seed, temperature)


def plan_advantage(model: FbModel, states: np.ndarray, subgoals: np.ndarray, latents: np.ndarray,
                   variant: str = "proxy") -> np.ndarray:
    """
    High-level advantage per (s, w, z) row; degenerate subgoals get 0.
    """
    return np.asarray(ADVANTAGES[variant](model, states, subgoals, latents, on_degenerate="zero"))


def plan_loss(high: HighPolicy, model: FbModel, states: np.ndarray, subgoals: np.ndarray, latents: np.ndarray,
              cfg: AwrConfig, variant: str = "proxy") -> Tuple[float, Params]:
    """
    -E[exp(beta_high min(A, clip)) log pi^h(w | s, z)] with A the FB switching advantage.
    :return: (loss, gradients on the high-level network only).
    """
    weights = awr_weights(plan_advantage(model, states, subgoals, latents, variant), cfg.beta_high, cfg.adv_clip)
    return high.weighted_cross_entropy(states, latents, subgoals, weights)


def act_advantage(model: FbModel, batch: TransitionBatch, latents: np.ndarray) -> np.ndarray:
    """
    F(s_{t+1}, z)^T z - F(s_t, z)^T z.
    """
    latents = np.asarray(latents, dtype=np.float64)
    f_next = f_value(model, batch.next_states, latents)
    f_current = f_value(model, batch.states, latents)
    return np.sum((f_next - f_current) * latents, axis=1)


def act_loss(low: LowPolicy, model: FbModel, batch: TransitionBatch, latents: np.ndarray,
             cfg: AwrConfig) -> Tuple[float, Params]:
    """
    -E[exp(beta_low min(A, clip)) log pi^l(a_t | s_t, z)].
    :return: (loss, gradients on the low-level network only).
    """
    weights = awr_weights(act_advantage(model, batch, latents), cfg.beta_low, cfg.adv_clip)
    return low.weighted_cross_entropy(batch.states, latents, batch.actions, weights)
