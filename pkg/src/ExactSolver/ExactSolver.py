"""
Closed-form successor measures, values, hitting discounts and switching quantities for tabular MDPs.

Conventions: rewards are collected at the current state, t=0 included, so M_s(s) >= 1 and
every successor matrix row sums to 1/(1-gamma).
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from src.Mdp.Mdp import Mdp, PolicyTable, RewardVector, indicator_reward, policy_transition_matrix
from src.utils.csv_io import write_rows
from src.utils.logger import get_logger


class SolverError(RuntimeError):
    """
    Raised when a linear solve fails. Cannot happen for 0 < gamma < 1.
    """


@dataclass(frozen=True)
class SuccessorMatrix:
    """
    M[s][s'] = expected discounted visits of s' starting from s under the tagged policy.
    """
    m: np.ndarray
    discount: float
    policy_tag: str = "policy"
    state_action: Optional[np.ndarray] = None

    def row_sum_violation(self) -> float:
        """
        Largest deviation of a row sum from 1/(1-gamma).
        """
        return float(np.max(np.abs(self.m.sum(axis=1) - 1.0 / (1.0 - self.discount))))

    def check(self, tol: float = 1e-9):
        """
        Invariant violations of this matrix.
        """
        violations = []
        if np.min(self.m) < -tol:
            violations.append(f"negative entry {float(np.min(self.m))!r}")
        if self.row_sum_violation() > tol:
            violations.append(f"row sums off by {self.row_sum_violation()!r}")
        if np.min(np.diag(self.m)) < 1.0 - tol:
            violations.append(f"diagonal entry {float(np.min(np.diag(self.m)))!r} below 1")
        return violations


@dataclass(frozen=True)
class SwitchingResult:
    """
    Successor measure of "follow pi_w until w is hit, then follow pi", for one subgoal w.
    """
    measure: np.ndarray
    hit_discount: np.ndarray
    subgoal: int


def _lu_solve_identity(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        factor = linalg.lu_factor(a, check_finite=True)
    except (linalg.LinAlgError, ValueError) as e:
        raise SolverError(f"linear solve failed: {e}") from e
    solution = linalg.lu_solve(factor, rhs)
    if not np.all(np.isfinite(solution)):
        raise SolverError("singular system in successor solve")
    return solution


def successor_measure(mdp: Mdp, pi: PolicyTable) -> SuccessorMatrix:
    """
    M = (I - gamma P_pi)^{-1}, via partial-pivot LU.
    """
    p_pi = policy_transition_matrix(mdp, pi)
    identity = np.eye(mdp.n_states)
    m = _lu_solve_identity(identity - mdp.discount * p_pi, identity)
    return SuccessorMatrix(m, mdp.discount, policy_tag=pi.tag)


def state_action_successor(mdp: Mdp, pi: PolicyTable, m: SuccessorMatrix = None) -> np.ndarray:
    """
    M_{s,a}(s') = 1{s=s'} + gamma sum_{s''} P[s][a][s''] M_{s''}(s'), shape (S, A, S).
    """
    if m is None:
        m = successor_measure(mdp, pi)
    if m.m.shape != (mdp.n_states, mdp.n_states):
        raise SolverError(f"successor matrix shape {m.m.shape} does not match {mdp.n_states} states")
    return np.eye(mdp.n_states)[:, None, :] + mdp.discount * np.einsum("sat,tu->sau", mdp.transitions, m.m)


def value_of(m: SuccessorMatrix, r: RewardVector) -> np.ndarray:
    """
    V(s; r) = <M_s, r>.
    """
    if m.m.shape[1] != r.values.shape[0]:
        raise SolverError(f"reward length {r.values.shape[0]} does not match {m.m.shape[1]} states")
    return m.m @ r.values


def greedy_policy(mdp: Mdp, r: RewardVector, v: np.ndarray, tie_tol: float = 0.0) -> PolicyTable:
    """
    One-hot policy greedy w.r.t. v, ties (within tie_tol) broken by the lowest action index.
    """
    q = r.values[:, None] + mdp.discount * np.einsum("sat,t->sa", mdp.transitions, v)
    best = q.max(axis=1, keepdims=True)
    actions = np.argmax(q >= best - tie_tol, axis=1)
    return PolicyTable.deterministic(actions, mdp.n_actions, tag=f"greedy[{r.name}]")


def value_iteration(mdp: Mdp, r: RewardVector, tol: float = 1e-10, max_iter: int = 1_000_000) -> Tuple[np.ndarray, PolicyTable]:
    """
    Optimal values by value iteration.
    :param mdp: The MDP.
    :param r: State reward.
    :param tol: Stop once ||V_{k+1} - V_k||_inf <= tol.
    :param max_iter: Safety cap on sweeps.
    :return: (V*, greedy one-hot policy).
    """
    if tol <= 0.0:
        raise SolverError("value iteration tolerance must be positive")
    gamma = mdp.discount
    flat = mdp.transitions.reshape(mdp.n_states * mdp.n_actions, mdp.n_states)
    v = np.zeros(mdp.n_states)
    for iteration in range(max_iter):
        q = r.values[:, None] + gamma * (flat @ v).reshape(mdp.n_states, mdp.n_actions)
        v_next = q.max(axis=1)
        gap = float(np.max(np.abs(v_next - v)))
        v = v_next
        if gap <= tol:
            break
    else:
        get_logger().warning(f"Value iteration hit max_iter={max_iter} with gap {gap}")
    return v, greedy_policy(mdp, r, v, tie_tol=tol / (1.0 - gamma))


def optimal_goal_policy(mdp: Mdp, w: int, tol: float = 1e-10) -> PolicyTable:
    """
    Goal-reaching subgoal policy pi_w: greedy for the indicator reward of w.
    """
    _, pi = value_iteration(mdp, indicator_reward(mdp, w), tol=tol)
    return PolicyTable(pi.probs, tag=f"goal[{int(w)}]")


def hitting_discount(mdp: Mdp, pi: PolicyTable, w: int) -> np.ndarray:
    """
    E[gamma^{H_s(w)}] per start state, from the chain with w made absorbing.
    h[w] = 1; for s != w, h[s] = gamma sum_{s'} P_pi(s'|s) h[s'].
    """
    p_pi = policy_transition_matrix(mdp, pi)
    others = np.array([s for s in range(mdp.n_states) if s != int(w)], dtype=np.int64)
    h = np.zeros(mdp.n_states)
    h[int(w)] = 1.0
    if others.size:
        a = np.eye(others.size) - mdp.discount * p_pi[np.ix_(others, others)]
        b = mdp.discount * p_pi[others, int(w)]
        h[others] = _lu_solve_identity(a, b)
    return h


def truncated_successor(mdp: Mdp, pi: PolicyTable, k: int) -> np.ndarray:
    """
    sum_{t<k} gamma^t P_pi^t.
    """
    if k < 0:
        raise SolverError("k must be non-negative")
    p_pi = policy_transition_matrix(mdp, pi)
    total = np.zeros((mdp.n_states, mdp.n_states))
    term = np.eye(mdp.n_states)
    for _ in range(k):
        total += term
        term = mdp.discount * term @ p_pi
    return total


def k_step_switching_measure(mdp: Mdp, pi_w: PolicyTable, pi: PolicyTable, k: int) -> np.ndarray:
    """
    Follow pi_w for k steps, then pi: M^{pi_w|k}  + gamma^k P_{pi_w}^k M^pi.
    """
    if k < 0:
        raise SolverError("k must be non-negative")
    p_w = policy_transition_matrix(mdp, pi_w)
    m_pi = successor_measure(mdp, pi).m
    return truncated_successor(mdp, pi_w, k) + mdp.discount ** k * np.linalg.matrix_power(p_w, k) @ m_pi


def k_step_advantage(mdp: Mdp, pi_w: PolicyTable, pi: PolicyTable, k: int, r: RewardVector) -> np.ndarray:
    """
    A_s = <M^{pi_w|k -> pi}_s - M^pi_s, r>.
    """
    m_pi = successor_measure(mdp, pi).m
    return (k_step_switching_measure(mdp, pi_w, pi, k) - m_pi) @ r.values


def switching_measure_formula(m_pw: SuccessorMatrix, m_p: SuccessorMatrix, w: int) -> SwitchingResult:
    """
    M^{pi_w -> pi}_s = M^{pi_w}_s + (M^{pi_w}_s(w) / M^{pi_w}_w(w)) (M^pi_w - M^{pi_w}_w).
    """
    w = int(w)
    ratio = m_pw.m[:, w] / m_pw.m[w, w]
    measure = m_pw.m + ratio[:, None] * (m_p.m[w] - m_pw.m[w])[None, :]
    return SwitchingResult(measure, ratio, w)


def switching_advantage_template(s_zw_z, s_zw_zw, w_zw_zw, w_z_z, w_zw_z, s_z_z):
    """
    The switching-advantage algebra shared by the exact and the learned forms:

        a + (b / c) (d - e) - f

    with a = value of the subgoal behaviour from s, b / c = discount accumulated before hitting w,
    d = value of the base behaviour from w, e = value of the subgoal behaviour from w,
    f = value of the base behaviour from s. Arguments broadcast.
    Grouped as (a - ratio e) + (ratio d - f) so the s = w case cancels exactly.
    """
    ratio = np.asarray(s_zw_zw) / np.asarray(w_zw_zw)
    return (np.asarray(s_zw_z) - ratio * np.asarray(w_zw_z)) + (ratio * np.asarray(w_z_z) - np.asarray(s_z_z))


def switching_advantage_from(m_pw: SuccessorMatrix, m_p: SuccessorMatrix, w: int, r: RewardVector) -> np.ndarray:
    """
    Switching advantage from precomputed successor matrices.
    """
    w = int(w)
    v_pw = value_of(m_pw, r)
    v_p = value_of(m_p, r)
    return switching_advantage_template(v_pw, m_pw.m[:, w], m_pw.m[w, w], v_p[w], v_pw[w], v_p)


def switching_advantage(mdp: Mdp, pi_w: PolicyTable, pi: PolicyTable, w: int, r: RewardVector) -> np.ndarray:
    """
    A_s = V^{pi_w}(s) + (M^{pi_w}_s(w)/M^{pi_w}_w(w)) (V^pi(w) - V^{pi_w}(w)) - V^pi(s).
    """
    return switching_advantage_from(successor_measure(mdp, pi_w), successor_measure(mdp, pi), w, r)


def prehit_advantage_from(m_pw: SuccessorMatrix, w: int, r: RewardVector) -> np.ndarray:
    """
    Rewards collected before hitting w: V^{pi_w}(s) - ratio V^{pi_w}(w).
    """
    w = int(w)
    v_pw = value_of(m_pw, r)
    ratio = m_pw.m[:, w] / m_pw.m[w, w]
    return v_pw - ratio * v_pw[w]


def prehit_advantage(mdp: Mdp, pi_w: PolicyTable, pi: PolicyTable, w: int, r: RewardVector) -> np.ndarray:
    """
    Pre-hitting part of the switching advantage. pi is accepted for symmetry with switching_advantage;
    the pre-hitting rewards do not depend on it.
    """
    return prehit_advantage_from(successor_measure(mdp, pi_w), w, r)


def myers_lower_bound_gap(mdp: Mdp, pi_w: PolicyTable, pi: PolicyTable, w: int) -> np.ndarray:
    """
    Switching measure minus its post-hitting lower bound ratio * M^pi_w(s'); entries are >= 0.
    """
    m_pw = successor_measure(mdp, pi_w)
    m_p = successor_measure(mdp, pi)
    result = switching_measure_formula(m_pw, m_p, w)
    return result.measure - result.hit_discount[:, None] * m_p.m[int(w)][None, :]


def export_matrix_csv(matrix: np.ndarray, path: str):
    """
    Rows "s,s',value".
    """
    n_rows, n_cols = matrix.shape
    write_rows(path, ["s", "s'", "value"],
               ((s, t, float(matrix[s, t])) for s in range(n_rows) for t in range(n_cols)))


def export_vector_csv(vector: np.ndarray, path: str):
    """
    Rows "s,value".
    """
    write_rows(path, ["s", "value"], ((s, float(v)) for s, v in enumerate(vector)))
