from dataclasses import dataclass
from typing import Dict, List, Sequence
import os

import numpy as np
from scipy import stats

from src.Dataset.OfflineDataset import OfflineDataset, normalize_latents, sample_states
from src.ExactSolver.ExactSolver import value_iteration
from src.Mdp.Mdp import Mdp, RewardVector, StateDist, indicator_reward
from src.NN.Checkpoint import load_params, save_params
from src.NN.DenseNet import DenseNet
from src.NN.Optim import Adam, TargetPair
from src.utils.logger import get_logger

RIDGE = 1e-6


class FbError(ValueError):
    """
    Raised for latent dimension mismatches and singular Gram matrices.
    """


@dataclass(frozen=True)
class ExpectileConfig:
    tau_expectile: float = 0.7

    def __post_init__(self):
        if not 0.5 <= self.tau_expectile < 1.0:
            raise FbError(f"expectile {self.tau_expectile} must lie in [0.5, 1)")


@dataclass(frozen=True)
class RewardEmbedding:
    """
    z_r = E_rho[r(s) B(s)] and where it came from.
    """
    z_r: np.ndarray
    source: str
    n_samples: int

    def latent(self) -> np.ndarray:
        """
        z_r rescaled onto the radius-sqrt(d) sphere the networks were trained on.
        """
        return normalize_latents(self.z_r, self.z_r.shape[-1])


class FbModel:
    """
    Action-free forward-backward representation.

    F is an ensemble of DenseNets on (one-hot state, latent) -> R^d, aggregated by mean.
    B is a |S| x d table. Both have Polyak target copies.
    """
    def __init__(self, n_states: int, d: int = 24, hidden: Sequence[int] = (64, 64), discount: float = 0.98,
                 seed: int = 0, target_tau: float = 0.005, ensemble: int = 2):
        if d < 1:
            raise FbError("latent dimension must be positive")
        self.logger = get_logger()
        self.n_states = int(n_states)
        self.d = int(d)
        self.hidden = [int(h) for h in hidden]
        self.discount = float(discount)
        self.seed = int(seed)
        self.target_tau = float(target_tau)

        seeds = np.random.SeedSequence(self.seed).generate_state(ensemble + 1)
        self.f_nets: List[DenseNet] = [DenseNet([self.n_states + self.d, *self.hidden, self.d], int(seeds[i]))
                                       for i in range(ensemble)]
        b_rng = np.random.default_rng(int(seeds[-1]))
        self.b_params = {"B": b_rng.normal(size=(self.n_states, self.d))}
        self.f_targets = [TargetPair(net.params, self.target_tau) for net in self.f_nets]
        self.b_target = TargetPair(self.b_params, self.target_tau)
        self.optimizer = None
        self.logger.debug(f"FbModel with {self.n_states} states, d={self.d}, hidden={self.hidden}, "
                          f"ensemble={ensemble}")

    @property
    def b_table(self) -> np.ndarray:
        return self.b_params["B"]

    @property
    def b_target_table(self) -> np.ndarray:
        return self.b_target.target["B"]

    def parameters(self) -> Dict[str, np.ndarray]:
        """
        Every online parameter by name; the arrays are shared, so in-place updates reach the model.
        """
        params = {f"f{i}.{k}": v for i, net in enumerate(self.f_nets) for k, v in net.params.items()}
        params["B"] = self.b_table
        return params

    def target_parameters(self) -> Dict[str, np.ndarray]:
        params = {f"f{i}.{k}": v for i, pair in enumerate(self.f_targets) for k, v in pair.target.items()}
        params["B"] = self.b_target_table
        return params

    def polyak_update(self):
        for pair in self.f_targets:
            pair.polyak_update()
        self.b_target.polyak_update()

    def inputs(self, states: np.ndarray, z: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64)
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1] != self.d:
            raise FbError(f"latent dimension {z.shape[-1]} does not match model d={self.d}")
        z = np.broadcast_to(z, (states.size, self.d))
        return np.concatenate([np.eye(self.n_states)[states], z], axis=1)

    def f_members(self, states: np.ndarray, z: np.ndarray, target: bool = False):
        """
        Forward pass of every ensemble member: list of (output, cache).
        """
        x = self.inputs(states, z)
        return [net.forward(x, pair.target if target else None) for net, pair in zip(self.f_nets, self.f_targets)]

    def subgoal_latent(self, w) -> np.ndarray:
        """
        z_w = B(w) rescaled to norm sqrt(d).
        """
        return normalize_latents(self.b_table[np.asarray(w, dtype=np.int64)], self.d)


def f_value(model: FbModel, s, z, target: bool = False) -> np.ndarray:
    """
    Ensemble-mean F(s, z). s is an index or an index array, z a latent or a matching latent batch.
    """
    single = np.ndim(s) == 0
    states = np.atleast_1d(np.asarray(s, dtype=np.int64))
    if np.any(states < 0) or np.any(states >= model.n_states):
        raise FbError("state index out of range")
    outputs = [out for out, _ in model.f_members(states, z, target)]
    mean = np.mean(outputs, axis=0)
    return mean[0] if single else mean


def learned_value(model: FbModel, z: np.ndarray) -> np.ndarray:
    """
    V(s; z) = F(s, z)^T z for every state.
    """
    f = f_value(model, np.arange(model.n_states), z)
    return f @ np.asarray(z, dtype=np.float64)


def gram_inverse(model: FbModel, rho: StateDist, ridge: float = RIDGE) -> np.ndarray:
    """
    (E_rho[B B^T / rho] + ridge I)^{-1}; the expectation is the sum of B B^T over the support of rho.
    """
    support = rho.probs > 0.0
    b = model.b_table[support]
    gram = b.T @ b + ridge * np.eye(model.d)
    try:
        inverse = np.linalg.inv(gram)
    except np.linalg.LinAlgError as e:
        raise FbError("singular Gram matrix; use a positive ridge") from e
    if not np.all(np.isfinite(inverse)):
        raise FbError("singular Gram matrix; use a positive ridge")
    return inverse


def intrinsic_reward(model: FbModel, s, z, exact: bool = False, rho: StateDist = None,
                     ridge: float = RIDGE, table: np.ndarray = None) -> np.ndarray:
    """
    r_z(s). Default B(s)^T z; exact=True uses B(s)^T (E_rho[B B^T / rho] + ridge I)^{-1} z.
    """
    table = model.b_table if table is None else table
    b = table[np.asarray(s, dtype=np.int64)]
    z = np.asarray(z, dtype=np.float64)
    if exact:
        if rho is None:
            raise FbError("the exact intrinsic reward needs the state marginal")
        z = z @ gram_inverse(model, rho, ridge).T
    return np.sum(b * z, axis=-1)


def reward_embedding(model: FbModel, r: RewardVector, ds: OfflineDataset, n_samples: int = 0,
                     seed: int = 0) -> RewardEmbedding:
    """
    z_r = E_{s~rho}[r(s) B(s)]: exact rho-weighted sum when n_samples == 0, otherwise a sample mean
    over n_samples rho-draws.
    """
    if n_samples < 0:
        raise FbError("n_samples must be non-negative")
    if n_samples == 0:
        z = ds.rho.probs @ (r.values[:, None] * model.b_table)
    else:
        states = sample_states(ds, n_samples, np.random.default_rng(seed))
        z = np.mean(r.values[states][:, None] * model.b_table[states], axis=0)
    return RewardEmbedding(np.asarray(z, dtype=np.float64), source=r.name, n_samples=int(n_samples))


def reward_projection(model: FbModel, r: RewardVector, ridge: float = RIDGE) -> np.ndarray:
    """
    Proj_B r(s) = <r, B^T (B B^T)^{-1} B(s)>: least-squares projection of r onto the span of the backward features.
    """
    b = model.b_table
    coefficients = np.linalg.solve(b.T @ b + ridge * np.eye(model.d), b.T @ r.values)
    return b @ coefficients


def value_fidelity(model: FbModel, mdp: Mdp, ds: OfflineDataset, goals: Sequence[int]) -> List[float]:
    """
    Spearman rank correlation between F(s, z_g)^T z_g and the exact V*(s; g), per goal.
    """
    correlations = []
    for g in goals:
        reward = indicator_reward(mdp, g)
        z_g = reward_embedding(model, reward, ds).latent()
        v_star, _ = value_iteration(mdp, reward)
        correlation = stats.spearmanr(learned_value(model, z_g), v_star).correlation
        correlations.append(float(correlation))
    return correlations


def save_fb_model(model: FbModel, path: str):
    """
    Online and target parameters in one checkpoint, plus the optimizer moments when present.
    """
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    params = dict(model.parameters())
    params.update({f"target.{k}": v for k, v in model.target_parameters().items()})
    meta = {"n_states": model.n_states, "d": model.d, "hidden": model.hidden, "discount": model.discount,
            "seed": model.seed, "target_tau": model.target_tau, "ensemble": len(model.f_nets)}
    if model.optimizer is not None:
        params.update({f"adam.m.{k}": v for k, v in model.optimizer.m.items()})
        params.update({f"adam.v.{k}": v for k, v in model.optimizer.v.items()})
        meta["adam"] = model.optimizer.state()
    save_params(path, params, meta)


def load_fb_model(path: str) -> FbModel:
    params, meta = load_params(path)
    model = FbModel(meta["n_states"], meta["d"], meta["hidden"], meta["discount"], meta["seed"],
                    meta["target_tau"], meta["ensemble"])
    for name, value in model.parameters().items():
        value[...] = params[name]
    for name, value in model.target_parameters().items():
        value[...] = params[f"target.{name}"]
    if "adam" in meta:
        state = meta["adam"]
        model.optimizer = Adam(state["lr"], state["beta1"], state["beta2"], state["epsilon"])
        model.optimizer.t = state["t"]
        model.optimizer.m = {k[len("adam.m."):]: v.copy() for k, v in params.items() if k.startswith("adam.m.")}
        model.optimizer.v = {k[len("adam.v."):]: v.copy() for k, v in params.items() if k.startswith("adam.v.")}
    return model
