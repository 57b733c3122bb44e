import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.ExactSolver.ExactSolver import (
    export_matrix_csv, export_vector_csv, hitting_discount, k_step_advantage, k_step_switching_measure,
    myers_lower_bound_gap, optimal_goal_policy, prehit_advantage, state_action_successor, successor_measure,
    switching_advantage, switching_measure_formula, truncated_successor, value_iteration, value_of,
)
from src.ExactSolver.SwitchingOracle import switching_measure_oracle
from src.ExactSolver.Verification import run_verification, verify_instance
from src.Mdp.Mdp import (RewardVector, indicator_reward, policy_transition_matrix, random_mdp, random_policy,
                         sparse_trap_mdp)
from src.utils.csv_io import read_rows

seeds = st.integers(0, 2 ** 32 - 1)


def random_instance(seed, max_states=8, max_actions=3):
    rng = np.random.default_rng(seed)
    n_states = int(rng.integers(2, max_states + 1))
    n_actions = int(rng.integers(1, max_actions + 1))
    mdp = random_mdp(n_states, n_actions, float(rng.choice([0.9, 0.95])), rng)
    return mdp, random_policy(n_states, n_actions, rng), random_policy(n_states, n_actions, rng), rng


def test_successor_measure_of_two_cycle(two_cycle):
    mdp, stay, go = two_cycle
    np.testing.assert_allclose(successor_measure(mdp, go).m, [[4 / 3, 2 / 3], [2 / 3, 4 / 3]], atol=1e-12)
    np.testing.assert_allclose(successor_measure(mdp, stay).m, 2.0 * np.eye(2), atol=1e-12)


def test_state_action_successor_on_two_cycle(two_cycle):
    mdp, stay, go = two_cycle
    m_go = successor_measure(mdp, go)
    m_sa = state_action_successor(mdp, go, m_go)
    assert m_sa.shape == (2, 2, 2)
    assert m_sa[0, 1, 1] == pytest.approx(0.5 * m_go.m[1, 1], abs=1e-12)
    np.testing.assert_allclose(m_sa[0, 1], m_go.m[0], atol=1e-12)
    np.testing.assert_allclose(m_sa[0, 0], [1.0 + 0.5 * 4 / 3, 0.5 * 2 / 3], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_state_action_successor_marginalises_to_state_measure(seed):
    mdp, pi, _, _ = random_instance(seed)
    m = successor_measure(mdp, pi)
    m_sa = state_action_successor(mdp, pi)
    np.testing.assert_allclose(np.einsum("sa,sat->st", pi.probs, m_sa), m.m, atol=1e-10)


def test_value_of_is_policy_fixed_point(two_chain):
    mdp, _, go = two_chain
    reward = indicator_reward(mdp, 1)
    v = value_of(successor_measure(mdp, go), reward)
    np.testing.assert_allclose(v, [1.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(v, reward.values + mdp.discount * policy_transition_matrix(mdp, go) @ v, atol=1e-12)
    v_star, _ = value_iteration(mdp, reward)
    np.testing.assert_allclose(v, v_star, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_value_of_satisfies_bellman_equation(seed):
    mdp, pi, _, rng = random_instance(seed)
    reward = RewardVector(rng.normal(size=mdp.n_states))
    v = value_of(successor_measure(mdp, pi), reward)
    np.testing.assert_allclose(v, reward.values + mdp.discount * policy_transition_matrix(mdp, pi) @ v, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_successor_mass_conservation(seed):
    mdp, pi, _, _ = random_instance(seed)
    m = successor_measure(mdp, pi)
    assert m.row_sum_violation() <= 1e-9
    assert np.min(np.diag(m.m)) >= 1.0 - 1e-9
    assert m.check() == []


def test_hitting_discount_on_chain(two_chain):
    mdp, _, go = two_chain
    np.testing.assert_allclose(hitting_discount(mdp, go, 1), [0.5, 1.0], atol=1e-12)


def test_hitting_discount_unreachable(two_chain):
    mdp, stay, _ = two_chain
    np.testing.assert_array_equal(hitting_discount(mdp, stay, 1), [0.0, 1.0])


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_hitting_discount_matches_measure_ratio(seed):
    mdp, pi, _, _ = random_instance(seed)
    m = successor_measure(mdp, pi).m
    for w in range(mdp.n_states):
        np.testing.assert_allclose(hitting_discount(mdp, pi, w) * m[w, w], m[:, w], atol=1e-10)


def test_truncated_successor(two_cycle):
    mdp, _, go = two_cycle
    np.testing.assert_array_equal(truncated_successor(mdp, go, 0), np.zeros((2, 2)))
    np.testing.assert_array_equal(truncated_successor(mdp, go, 1), np.eye(2))


def test_truncated_successor_converges():
    rng = np.random.default_rng(4)
    mdp = random_mdp(6, 2, 0.9, rng)
    pi = random_policy(6, 2, rng)
    bound = 0.9 ** 200 / 0.1
    np.testing.assert_allclose(truncated_successor(mdp, pi, 200), successor_measure(mdp, pi).m, atol=bound + 1e-12)


def test_k_step_measure_examples(two_chain):
    mdp, stay, go = two_chain
    np.testing.assert_allclose(k_step_switching_measure(mdp, go, stay, 1)[0], [1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(k_step_switching_measure(mdp, go, stay, 0), successor_measure(mdp, stay).m)
    np.testing.assert_allclose(k_step_advantage(mdp, go, stay, 1, indicator_reward(mdp, 1))[0], 1.0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seeds, st.integers(0, 5))
def test_k_step_reductions(seed, k):
    mdp, pi, pi_w, rng = random_instance(seed)
    reward = RewardVector(rng.normal(size=mdp.n_states))
    np.testing.assert_allclose(k_step_switching_measure(mdp, pi, pi, k), successor_measure(mdp, pi).m, atol=1e-10)
    np.testing.assert_allclose(k_step_advantage(mdp, pi_w, pi, 0, reward), 0.0, atol=1e-10)


def test_switching_formula_on_two_cycle(two_cycle):
    mdp, stay, go = two_cycle
    result = switching_measure_formula(successor_measure(mdp, go), successor_measure(mdp, stay), 1)
    np.testing.assert_allclose(result.measure[0], [1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(result.hit_discount, [0.5, 1.0], atol=1e-12)
    oracle = switching_measure_oracle(mdp, go, stay, 1)
    np.testing.assert_allclose(oracle.measure[0], [1.0, 1.0], atol=1e-12)


def test_switching_advantage_on_two_cycle(two_cycle):
    mdp, stay, go = two_cycle
    advantage = switching_advantage(mdp, go, stay, 1, indicator_reward(mdp, 1))
    assert advantage[0] == pytest.approx(1.0, abs=1e-12)
    assert advantage[1] == 0.0


def test_prehit_advantage_on_two_cycle(two_cycle):
    mdp, stay, go = two_cycle
    prehit = prehit_advantage(mdp, go, stay, 1, RewardVector(np.array([1.0, 0.0])))
    assert prehit[0] == pytest.approx(1.0, abs=1e-12)


def test_prehit_of_subgoal_indicator_vanishes(two_cycle):
    mdp, stay, go = two_cycle
    np.testing.assert_allclose(prehit_advantage(mdp, go, stay, 1, indicator_reward(mdp, 1)), 0.0, atol=1e-12)


def test_prehit_without_hitting_is_value(two_chain):
    mdp, stay, _ = two_chain
    reward = RewardVector(np.array([1.0, 3.0]))
    np.testing.assert_allclose(prehit_advantage(mdp, stay, stay, 1, reward)[0], 2.0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_formula_matches_oracle(seed):
    mdp, pi, pi_w, rng = random_instance(seed, max_states=12)
    reward = RewardVector(rng.normal(size=mdp.n_states))
    m_p = successor_measure(mdp, pi)
    m_pw = successor_measure(mdp, pi_w)
    for w in range(mdp.n_states):
        formula = switching_measure_formula(m_pw, m_p, w)
        oracle = switching_measure_oracle(mdp, pi_w, pi, w)
        np.testing.assert_allclose(formula.measure, oracle.measure, atol=1e-8, rtol=0)
        np.testing.assert_allclose(switching_advantage(mdp, pi_w, pi, w, reward),
                                   (oracle.measure - m_p.m) @ reward.values, atol=1e-8, rtol=0)
        assert np.min(myers_lower_bound_gap(mdp, pi_w, pi, w)) >= -1e-10


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_formula_matches_oracle_with_absorbing_trap(seed):
    rng = np.random.default_rng(seed)
    n_states = int(rng.integers(3, 13))
    n_actions = int(rng.integers(1, 4))
    mdp = sparse_trap_mdp(n_states, n_actions, float(rng.choice([0.9, 0.95])), rng)
    pi, pi_w = random_policy(n_states, n_actions, rng), random_policy(n_states, n_actions, rng)
    reward = RewardVector(rng.normal(size=n_states))
    m_p = successor_measure(mdp, pi)
    m_pw = successor_measure(mdp, pi_w)
    trap = n_states - 1
    for w in range(n_states):
        formula = switching_measure_formula(m_pw, m_p, w)
        oracle = switching_measure_oracle(mdp, pi_w, pi, w)
        np.testing.assert_allclose(formula.measure, oracle.measure, atol=1e-8, rtol=0)
        np.testing.assert_allclose(switching_advantage(mdp, pi_w, pi, w, reward),
                                   (oracle.measure - m_p.m) @ reward.values, atol=1e-8, rtol=0)
        if w != trap:
            # the trap never reaches anything else, so the switch can never fire from it
            assert abs(formula.hit_discount[trap]) <= 1e-12
            np.testing.assert_allclose(formula.measure[trap], m_pw.m[trap], atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_same_policy_reduces_to_standard_measure(seed):
    mdp, pi, _, rng = random_instance(seed)
    m_p = successor_measure(mdp, pi)
    for w in range(mdp.n_states):
        result = switching_measure_formula(m_p, m_p, w)
        np.testing.assert_allclose(result.measure, m_p.m, atol=1e-10)
        reward = RewardVector(rng.normal(size=mdp.n_states))
        np.testing.assert_allclose(switching_advantage(mdp, pi, pi, w, reward), 0.0, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_switching_row_at_subgoal(seed):
    mdp, pi, pi_w, rng = random_instance(seed)
    m_p = successor_measure(mdp, pi)
    m_pw = successor_measure(mdp, pi_w)
    reward = RewardVector(rng.normal(size=mdp.n_states))
    for w in range(mdp.n_states):
        np.testing.assert_allclose(switching_measure_formula(m_pw, m_p, w).measure[w], m_p.m[w], atol=1e-10)
        assert switching_advantage(mdp, pi_w, pi, w, reward)[w] == 0.0
        np.testing.assert_allclose(myers_lower_bound_gap(mdp, pi_w, pi, w)[w], 0.0, atol=1e-10)


def test_value_iteration_on_chain(two_chain):
    mdp, _, _ = two_chain
    v, pi = value_iteration(mdp, indicator_reward(mdp, 1))
    np.testing.assert_allclose(v, [1.0, 2.0], atol=1e-9)
    assert pi.probs[0, 1] == 1.0
    assert pi.probs[1, 0] == 1.0


def test_optimal_goal_policy_reaches_goal(two_cycle):
    mdp, _, _ = two_cycle
    pi = optimal_goal_policy(mdp, 1)
    assert pi.tag == "goal[1]"
    np.testing.assert_array_equal(pi.probs, [[0.0, 1.0], [1.0, 0.0]])


def test_csv_exports(tmp_path, two_cycle):
    mdp, _, go = two_cycle
    m = successor_measure(mdp, go).m
    export_matrix_csv(m, str(tmp_path / "m.csv"))
    header, rows = read_rows(str(tmp_path / "m.csv"))
    assert header == ["s", "s'", "value"]
    assert len(rows) == 4
    assert float(rows[1][2]) == m[0, 1]
    export_vector_csv(m[0], str(tmp_path / "v.csv"))
    header, rows = read_rows(str(tmp_path / "v.csv"))
    assert header == ["s", "value"]
    assert [float(r[1]) for r in rows] == list(m[0])


def test_verification_suite_passes():
    report = run_verification(n_mdps=10, seed=0)
    assert report.passed, report.to_dict()
    assert report.values["formula_vs_oracle"] <= 1e-8
    assert report.values["trap_formula_vs_oracle"] <= 1e-8
    assert report.values["trap_advantage_vs_oracle"] <= 1e-8


def test_verification_is_thread_count_independent():
    assert run_verification(6, seed=3).values == run_verification(6, seed=3, workers=3).values


def test_verification_with_no_mdps_passes_vacuously():
    report = run_verification(n_mdps=0)
    assert report.passed
    assert report.values == {}


def test_corrupted_formula_is_caught():
    report = run_verification(n_mdps=3, seed=0, corrupt_formula=True)
    assert not report.passed
    assert "formula_vs_oracle" in report.failed
    assert "trap_formula_vs_oracle" in report.failed


def test_verification_instances_follow_spawned_seeds():
    children = np.random.SeedSequence(5).spawn(2)
    report = run_verification(2, seed=5)
    first, second = verify_instance(children[0]), verify_instance(children[1])
    for name, value in report.values.items():
        assert value == (min if name.endswith("_min") else max)(first[name], second[name])
