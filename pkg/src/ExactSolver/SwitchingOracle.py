import numpy as np
from scipy import linalg

from src.ExactSolver.ExactSolver import SolverError, SwitchingResult
from src.Mdp.Mdp import Mdp, PolicyTable


def augmented_chain(mdp: Mdp, pi_w: PolicyTable, pi: PolicyTable, w: int) -> np.ndarray:
    """
    Markov chain on S x {pre, post}: index s is (s, pre), index S + s is (s, post).
    Pre states act with pi_w, post states with pi; arriving at w always lands in (w, post).
    (w, pre) is never entered; its row mirrors (w, post).
    """
    n = mdp.n_states
    w = int(w)
    p_pre = np.einsum("sa,sat->st", pi_w.probs, mdp.transitions)
    p_post = np.einsum("sa,sat->st", pi.probs, mdp.transitions)
    chain = np.zeros((2 * n, 2 * n))
    for s in range(n):
        if s == w:
            chain[s, n:] = p_post[s]
            continue
        for t in range(n):
            if t == w:
                chain[s, n + t] += p_pre[s, t]
            else:
                chain[s, t] += p_pre[s, t]
    chain[n:, n:] = p_post
    return chain


def switching_measure_oracle(mdp: Mdp, pi_w: PolicyTable, pi: PolicyTable, w: int) -> SwitchingResult:
    """
    Switching successor measure by a direct solve on the flag-augmented chain,
    independent of the closed-form identity.

    The start state s is entered with flag "post" when s == w (hitting time 0).
    The hitting discount comes from the pre-switch mass: sum_{t<H} gamma^t = (1 - gamma^H) / (1 - gamma).
    """
    n = mdp.n_states
    w = int(w)
    gamma = mdp.discount
    chain = augmented_chain(mdp, pi_w, pi, w)
    try:
        m_aug = linalg.solve(np.eye(2 * n) - gamma * chain, np.eye(2 * n))
    except linalg.LinAlgError as e:
        raise SolverError(f"augmented solve failed: {e}") from e
    starts = np.array([n + s if s == w else s for s in range(n)], dtype=np.int64)
    rows = m_aug[starts]
    measure = rows[:, :n] + rows[:, n:]
    pre_mass = rows[:, :n].sum(axis=1)
    hit_discount = 1.0 - (1.0 - gamma) * pre_mass
    hit_discount[w] = 1.0
    return SwitchingResult(measure, np.clip(hit_discount, 0.0, 1.0), w)
