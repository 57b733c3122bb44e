from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from src.ExactSolver.ExactSolver import (
    SuccessorMatrix, hitting_discount, k_step_switching_measure, myers_lower_bound_gap, prehit_advantage_from,
    successor_measure, switching_advantage_from, switching_measure_formula, value_of,
)
from src.ExactSolver.SwitchingOracle import switching_measure_oracle
from src.Mdp.Mdp import RewardVector, random_mdp, random_policy, sparse_trap_mdp
from src.utils.logger import get_logger

# name -> (tolerance, "max" when the statistic must stay below tolerance, "min" when above)
CHECKS = {
    "formula_vs_oracle": (1e-8, "max"),
    "advantage_vs_oracle": (1e-8, "max"),
    "hitting_discount_ratio": (1e-10, "max"),
    "trap_formula_vs_oracle": (1e-8, "max"),
    "trap_advantage_vs_oracle": (1e-8, "max"),
    "trap_hitting_discount_ratio": (1e-10, "max"),
    "oracle_hit_discount_vs_ratio": (1e-8, "max"),
    "lower_bound_gap_min": (-1e-10, "min"),
    "reduction_same_policy": (1e-10, "max"),
    "reduction_k0": (1e-10, "max"),
    "reduction_row_at_subgoal": (1e-10, "max"),
    "mass_row_sums": (1e-9, "max"),
    "mass_diagonal_min": (1.0 - 1e-9, "min"),
    "prehit_reassembly": (1e-12, "max"),
}

MAX_STATES = 12
MAX_ACTIONS = 3
DISCOUNTS = (0.9, 0.95)


@dataclass
class VerificationReport:
    """
    Worst-case deviation per identity over all random instances.
    """
    n_mdps: int
    seed: int
    values: Dict[str, float] = field(default_factory=dict)

    @property
    def failed(self) -> List[str]:
        failed = []
        for name, (tolerance, kind) in CHECKS.items():
            value = self.values.get(name)
            if value is None:
                continue
            if (kind == "max" and not value <= tolerance) or (kind == "min" and not value >= tolerance):
                failed.append(name)
        return failed

    @property
    def passed(self) -> bool:
        return not self.failed

    def to_dict(self) -> dict:
        return {
            "n_mdps": self.n_mdps,
            "seed": self.seed,
            "checks": {
                name: {"value": self.values.get(name), "tolerance": tolerance, "bound": kind,
                       "passed": name not in self.failed}
                for name, (tolerance, kind) in CHECKS.items()
            },
            "passed": self.passed,
            "failed": self.failed,
        }


def _merge(values: Dict[str, float], name: str, value: float):
    kind = CHECKS[name][1]
    if name not in values:
        values[name] = value
    elif kind == "max":
        values[name] = max(values[name], value)
    else:
        values[name] = min(values[name], value)


def verify_instance(seed_sequence: np.random.SeedSequence, corrupt_formula: bool = False) -> Dict[str, float]:
    """
    Run every identity on one dense random MDP, then the oracle comparisons on one sparse MDP with an
    absorbing trap, where subgoals are hit with probability strictly between 0 and 1.
    :param seed_sequence: Child of the suite seed; fixes both instances.
    :param corrupt_formula: Fault injection, shifts the closed-form switching measure by 1e-6.
    :return: Worst deviation per check on this instance.
    """
    rng = np.random.default_rng(seed_sequence)
    n_states = int(rng.integers(2, MAX_STATES + 1))
    n_actions = int(rng.integers(1, MAX_ACTIONS + 1))
    gamma = float(DISCOUNTS[int(rng.integers(len(DISCOUNTS)))])
    mdp = random_mdp(n_states, n_actions, gamma, rng)
    pi = random_policy(n_states, n_actions, rng)
    m_p = successor_measure(mdp, pi)
    reward = RewardVector(rng.normal(size=n_states), name="random")
    v_p = value_of(m_p, reward)

    values: Dict[str, float] = {}
    _merge(values, "mass_row_sums", m_p.row_sum_violation())
    _merge(values, "mass_diagonal_min", float(np.min(np.diag(m_p.m))))
    _merge(values, "reduction_k0", float(np.max(np.abs(k_step_switching_measure(mdp, pi, pi, 0) - m_p.m))))

    for w in range(n_states):
        pi_w = random_policy(n_states, n_actions, rng)
        m_pw = successor_measure(mdp, pi_w)
        formula = switching_measure_formula(m_pw, m_p, w)
        measure = formula.measure + 1e-6 if corrupt_formula else formula.measure
        oracle = switching_measure_oracle(mdp, pi_w, pi, w)

        _merge(values, "formula_vs_oracle", float(np.max(np.abs(measure - oracle.measure))))
        _merge(values, "oracle_hit_discount_vs_ratio", float(np.max(np.abs(oracle.hit_discount - formula.hit_discount))))

        advantage = switching_advantage_from(m_pw, m_p, w, reward)
        oracle_advantage = (oracle.measure - m_p.m) @ reward.values
        _merge(values, "advantage_vs_oracle", float(np.max(np.abs(advantage - oracle_advantage))))

        h = hitting_discount(mdp, pi, w)
        _merge(values, "hitting_discount_ratio", float(np.max(np.abs(h * m_p.m[w, w] - m_p.m[:, w]))))

        gap = myers_lower_bound_gap(mdp, pi_w, pi, w)
        _merge(values, "lower_bound_gap_min", float(np.min(gap)))

        same = switching_measure_formula(m_p, m_p, w)
        _merge(values, "reduction_same_policy", float(np.max(np.abs(same.measure - m_p.m))))
        _merge(values, "reduction_row_at_subgoal", float(np.max(np.abs(formula.measure[w] - m_p.m[w]))))

        prehit = prehit_advantage_from(m_pw, w, reward)
        reassembled = prehit + (formula.hit_discount * v_p[w] - v_p)
        _merge(values, "prehit_reassembly", float(np.max(np.abs(reassembled - advantage))))

        _merge(values, "mass_row_sums", SuccessorMatrix(m_pw.m, gamma).row_sum_violation())
        _merge(values, "mass_diagonal_min", float(np.min(np.diag(m_pw.m))))

    _check_trap_instance(values, rng, corrupt_formula)
    return values


def _check_trap_instance(values: Dict[str, float], rng: np.random.Generator, corrupt_formula: bool):
    n_states = int(rng.integers(3, MAX_STATES + 1))
    n_actions = int(rng.integers(1, MAX_ACTIONS + 1))
    gamma = float(DISCOUNTS[int(rng.integers(len(DISCOUNTS)))])
    mdp = sparse_trap_mdp(n_states, n_actions, gamma, rng)
    pi = random_policy(n_states, n_actions, rng)
    m_p = successor_measure(mdp, pi)
    reward = RewardVector(rng.normal(size=n_states), name="random")

    for w in range(n_states):
        pi_w = random_policy(n_states, n_actions, rng)
        m_pw = successor_measure(mdp, pi_w)
        formula = switching_measure_formula(m_pw, m_p, w)
        measure = formula.measure + 1e-6 if corrupt_formula else formula.measure
        oracle = switching_measure_oracle(mdp, pi_w, pi, w)
        _merge(values, "trap_formula_vs_oracle", float(np.max(np.abs(measure - oracle.measure))))
        oracle_advantage = (oracle.measure - m_p.m) @ reward.values
        advantage = switching_advantage_from(m_pw, m_p, w, reward)
        _merge(values, "trap_advantage_vs_oracle", float(np.max(np.abs(advantage - oracle_advantage))))
        h = hitting_discount(mdp, pi, w)
        _merge(values, "trap_hitting_discount_ratio", float(np.max(np.abs(h * m_p.m[w, w] - m_p.m[:, w]))))
        _merge(values, "lower_bound_gap_min", float(np.min(myers_lower_bound_gap(mdp, pi_w, pi, w))))


def run_verification(n_mdps: int = 100, seed: int = 0, corrupt_formula: bool = False, workers: int = 1) -> VerificationReport:
    """
    The differential suite over random MDPs (|S| <= 12, |A| <= 3, gamma in {0.9, 0.95}), dense and with
    an absorbing trap. Instance i uses the i-th child of SeedSequence(seed).
    :param n_mdps: Number of random instances.
    :param seed: Suite seed.
    :param corrupt_formula: Fault-injection hook.
    :param workers: Threads; results do not depend on it.
    :return: The report.
    """
    logger = get_logger()
    report = VerificationReport(n_mdps=n_mdps, seed=seed)
    if n_mdps <= 0:
        logger.warning("Verification ran on 0 MDPs, passing vacuously")
        return report

    children = np.random.SeedSequence(seed).spawn(n_mdps)

    def run(child):
        return verify_instance(child, corrupt_formula)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, children))
    else:
        results = [run(child) for child in children]

    for values in results:
        for name, value in values.items():
            _merge(report.values, name, value)

    logger.debug(f"Verified {n_mdps} random MDPs, failed checks: {report.failed}")
    return report
