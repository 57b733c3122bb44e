from typing import Dict, Tuple

import numpy as np

from src.Dataset.OfflineDataset import TransitionBatch
from src.FB.FbModel import ExpectileConfig, FbModel, f_value, intrinsic_reward
from src.Mdp.Mdp import StateDist

Params = Dict[str, np.ndarray]


def expectile_weight(advantage: np.ndarray, tau: float) -> np.ndarray:
    """
    |tau - 1{advantage < 0}|: tau for non-negative advantages, 1 - tau otherwise.
    """
    return np.abs(tau - (np.asarray(advantage) < 0.0))


def expectile_loss(advantage: np.ndarray, td: np.ndarray, tau: float) -> float:
    """
    mean(|tau - 1{advantage < 0}| * td^2).
    """
    return float(np.mean(expectile_weight(advantage, tau) * np.square(td)))


def _td_terms(model: FbModel, batch: TransitionBatch, queries: np.ndarray, latents: np.ndarray,
              exact_reward: bool, rho: StateDist):
    """
    Shared forward pass of the representation loss. F is the ensemble mean in both Delta and delta.
    :return: (member outputs and caches at s_t, ensemble-mean F(s_t, z), B(s'), Delta, delta).
    """
    states, next_states = batch.states, batch.next_states
    queries = np.asarray(queries, dtype=np.int64)
    latents = np.asarray(latents, dtype=np.float64)
    if not len(batch) == queries.size == latents.shape[0]:
        raise ValueError("batch, queries and latents must have the same length")

    members = model.f_members(states, latents)
    f_current = np.mean([out for out, _ in members], axis=0)
    f_next = f_value(model, next_states, latents)
    f_next_target = f_value(model, next_states, latents, target=True)
    b_query = model.b_table[queries]
    b_query_target = model.b_target_table[queries]

    reward = intrinsic_reward(model, states, latents, exact=exact_reward, rho=rho)
    gamma = model.discount
    advantage = reward + gamma * np.sum(f_next * latents, axis=1) - np.sum(f_current * latents, axis=1)

    bootstrap = (states == queries).astype(np.float64) + gamma * np.sum(f_next_target * b_query_target, axis=1)
    delta = bootstrap - np.sum(f_current * b_query, axis=1)
    return members, f_current, b_query, advantage, delta


def rep_loss(model: FbModel, cfg: ExpectileConfig, batch: TransitionBatch, queries: np.ndarray,
             latents: np.ndarray, exact_reward: bool = False, rho: StateDist = None) -> Tuple[float, Params]:
    """
    Intention-conditioned expectile loss on the successor measure.

    Delta = r_z(s_t) + gamma F(s_{t+1}, z)^T z - F(s_t, z)^T z picks the expectile weight, and
    delta = 1{s_t = s'} + gamma Fbar(s_{t+1}, z)^T Bbar(s') - F(s_t, z)^T B(s') is the regressed error.
    F is the ensemble mean, so each member receives 1/ensemble of the gradient. Targets and Delta carry
    no gradient.

    :return: (loss, gradients keyed like model.parameters()).
    """
    members, f_current, b_query, advantage, delta = _td_terms(model, batch, queries, latents, exact_reward, rho)
    weight = expectile_weight(advantage, cfg.tau_expectile)
    n, n_members = len(batch), len(members)

    loss = float(np.mean(weight * np.square(delta)))

    scale = (-2.0 / n) * weight * delta
    grads: Params = {}
    for i, (_, cache) in enumerate(members):
        net_grads, _ = model.f_nets[i].backward(cache, (scale / n_members)[:, None] * b_query)
        grads.update({f"f{i}.{k}": v for k, v in net_grads.items()})
    grad_b_query = scale[:, None] * f_current

    grad_b = np.zeros_like(model.b_table)
    np.add.at(grad_b, np.asarray(queries, dtype=np.int64), grad_b_query)
    grads["B"] = grad_b
    return loss, grads


def squared_td_loss(model: FbModel, batch: TransitionBatch, queries: np.ndarray, latents: np.ndarray) -> float:
    """
    Unweighted mean(delta^2).
    """
    _, _, _, _, delta = _td_terms(model, batch, queries, latents, False, None)
    return float(np.mean(np.square(delta)))


def orthonorm_loss(model: FbModel, states: np.ndarray, coeff: float = 1.0,
                   unbiased: bool = True) -> Tuple[float, Params]:
    """
    coeff * E_{s, s'}[(B(s)^T B(s'))^2] - 2 E_s[|B(s)|^2] over a batch of rho-states.

    unbiased=True averages the squared inner products over distinct pairs only. unbiased=False keeps
    the diagonal, which makes the loss equal |E[B B^T] - I|_F^2 - d on the batch.
    """
    states = np.asarray(states, dtype=np.int64)
    n = states.size
    if n < 2:
        raise ValueError("orthonormalization needs at least two states")
    b = model.b_table[states]
    covariance = b @ b.T
    diagonal = np.diag(covariance)

    if unbiased:
        off_diagonal = covariance - np.diag(diagonal)
        loss = np.sum(np.square(off_diagonal)) / (n * (n - 1)) - 2.0 * np.mean(diagonal)
        grad_rows = (4.0 / (n * (n - 1))) * off_diagonal @ b - (4.0 / n) * b
    else:
        loss = np.sum(np.square(covariance)) / (n * n) - 2.0 * np.mean(diagonal)
        grad_rows = (4.0 / (n * n)) * covariance @ b - (4.0 / n) * b

    grad_b = np.zeros_like(model.b_table)
    np.add.at(grad_b, states, coeff * grad_rows)
    return float(coeff * loss), {"B": grad_b}
