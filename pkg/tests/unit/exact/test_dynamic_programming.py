"""
動的計画法モジュールのテスト。
"""

import numpy as np
import numpy.typing as npt
import pytest

from src.master_mfg.core.errors import EnumerationLimitError, FlowMismatchError
from src.master_mfg.core.policy import TabularPolicy, UniformPolicy
from src.master_mfg.envs.beach_bar import BeachBarEnv
from src.master_mfg.envs.exploration import ExplorationEnv
from src.master_mfg.exact.dynamic_programming import (
    FrozenMdp,
    best_response_array,
    best_response_q,
    best_response_tree,
    best_response_value,
    brute_force_best_return,
    check_flow,
    evaluate_policy_array,
    evaluate_policy_q,
    evaluate_policy_tree,
    policy_return,
    policy_tables,
)
from src.master_mfg.meanfield.flow import MeanFieldFlow, induced_flow
from src.master_mfg.noise.processes import CommonNoisePath, NoiseTree
from tests.conftest import RandomMeanFieldEnv, point_mass, uniform


def _tree_q(
    env: RandomMeanFieldEnv,
    tables: npt.NDArray[np.float64],
    flow: MeanFieldFlow,
    n: int,
    x: int,
    a: int,
) -> float:
    """Q^π_n(x, a) を遷移木の展開で計算します。"""
    reward = env.reward(n, x, a, flow[n])
    if n == env.horizon:
        return reward
    kernel = env.transition_tensor(n, flow[n])
    total = reward
    for nxt in range(env.n_states):
        for b in range(env.n_actions):
            weight = kernel[x, a, nxt] * tables[n + 1, nxt, b]
            if weight > 0.0:
                total += weight * _tree_q(env, tables, flow, n + 1, nxt, b)
    return total


@pytest.mark.parametrize('seed', range(20))
def test_best_response_matches_enumeration(seed: int) -> None:
    """後退帰納法の最適値が全方策列挙と一致することのテスト。"""
    env = RandomMeanFieldEnv(n_states=3, n_actions=2, horizon=2, seed=seed)
    rng = np.random.default_rng(100 + seed)
    mu0 = rng.dirichlet(np.ones(3))
    policy = TabularPolicy.softmax(rng.normal(size=(3, 3, 2)), 1.0)
    flow = induced_flow(env, policy, mu0)
    expected = brute_force_best_return(env, flow, mu0)
    assert best_response_value(env, flow, mu0) == pytest.approx(expected, abs=1e-10)


def test_evaluate_policy_q_matches_tree(random_env: RandomMeanFieldEnv) -> None:
    """Q^π が遷移木の展開と一致することのテスト。"""
    rng = np.random.default_rng(5)
    policy = TabularPolicy.softmax(rng.normal(size=(3, 3, 2)), 0.7)
    flow = induced_flow(random_env, policy, uniform(3))
    q = evaluate_policy_q(random_env, policy, flow)
    for n in range(3):
        for x in range(3):
            for a in range(2):
                expected = _tree_q(random_env, policy.table, flow, n, x, a)
                actual = q.value(n, x, flow.key(n), None, a)
                assert actual == pytest.approx(expected, abs=1e-12)


def test_terminal_q_is_reward(random_env: RandomMeanFieldEnv) -> None:
    """終端時刻の Q が報酬に一致することのテスト。"""
    flow = induced_flow(random_env, UniformPolicy(3, 2), uniform(3))
    q = evaluate_policy_q(random_env, UniformPolicy(3, 2), flow)
    np.testing.assert_allclose(
        q.table(2, flow.key(2)), random_env.reward_table(2, flow[2])
    )


def test_best_response_dominates_policy(random_env: RandomMeanFieldEnv) -> None:
    """Q* が任意の方策の Q^π 以上になることのテスト。"""
    policy = UniformPolicy(3, 2)
    flow = induced_flow(random_env, policy, uniform(3))
    q_pi = evaluate_policy_q(random_env, policy, flow).along(flow)
    q_star = best_response_q(random_env, flow).along(flow)
    assert (q_star >= q_pi - 1e-12).all()


def test_discounted_evaluation(random_env: RandomMeanFieldEnv) -> None:
    """割引率 0 では Q が即時報酬になることのテスト。"""
    flow = induced_flow(random_env, UniformPolicy(3, 2), uniform(3))
    q = evaluate_policy_q(random_env, UniformPolicy(3, 2), flow, gamma=0.0).along(flow)
    for n in range(3):
        np.testing.assert_allclose(q[n], random_env.reward_table(n, flow[n]))


def test_policy_return_equals_value_of_q(random_env: RandomMeanFieldEnv) -> None:
    """前進再帰の収益が Σ μ₀ π₀ Q^π_0 と一致することのテスト。"""
    rng = np.random.default_rng(9)
    policy = TabularPolicy.softmax(rng.normal(size=(3, 3, 2)), 1.0)
    mu0 = np.array([0.5, 0.3, 0.2])
    flow = induced_flow(random_env, policy, mu0)
    q0 = evaluate_policy_q(random_env, policy, flow).along(flow)[0]
    expected = float(mu0 @ (policy.table[0] * q0).sum(axis=1))
    actual = policy_return(random_env, policy, flow, mu0)
    assert actual == pytest.approx(expected, abs=1e-12)


def test_policy_return_rejects_other_mu0(random_env: RandomMeanFieldEnv) -> None:
    """μ₀ から始まらないフローを拒否することのテスト。"""
    flow = induced_flow(random_env, UniformPolicy(3, 2), point_mass(3, 0))
    with pytest.raises(FlowMismatchError):
        policy_return(random_env, UniformPolicy(3, 2), flow, point_mass(3, 1))


def test_check_flow_horizon_and_states(
    random_env: RandomMeanFieldEnv, small_exploration: ExplorationEnv
) -> None:
    """フローと環境の不一致の検出のテスト。"""
    flow = induced_flow(small_exploration, UniformPolicy(9, 5), uniform(9))
    with pytest.raises(FlowMismatchError, match='ホライズン'):
        check_flow(random_env, flow)
    other = RandomMeanFieldEnv(n_states=4, n_actions=2, horizon=3)
    with pytest.raises(FlowMismatchError, match='状態数'):
        check_flow(other, flow)


def test_check_flow_requires_path(closure_beach_bar: BeachBarEnv) -> None:
    """ノイズ環境で経路のないフローを拒否することのテスト。"""
    flow = MeanFieldFlow(np.tile(uniform(5), (4, 1)))
    with pytest.raises(FlowMismatchError, match='ノイズ経路'):
        FrozenMdp.along(closure_beach_bar, flow)


def test_frozen_mdp_horizon_zero() -> None:
    """ホライズン 0 の固定 MDP のテスト。"""
    env = RandomMeanFieldEnv(n_states=3, n_actions=2, horizon=0)
    flow = induced_flow(env, UniformPolicy(3, 2), uniform(3))
    mdp = FrozenMdp.along(env, flow)
    assert mdp.horizon == 0
    assert mdp.kernels.shape == (0, 3, 2, 3)
    expected = float(uniform(3) @ env.reward_table(0, uniform(3)).max(axis=1))
    assert best_response_value(env, flow, uniform(3)) == pytest.approx(expected)


def test_enumeration_limit(small_exploration: ExplorationEnv) -> None:
    """列挙件数が上限を超える場合のテスト。"""
    flow = induced_flow(small_exploration, UniformPolicy(9, 5), uniform(9))
    with pytest.raises(EnumerationLimitError) as excinfo:
        brute_force_best_return(small_exploration, flow, uniform(9))
    assert excinfo.value.count == 5**36
    assert excinfo.value.limit == 1_000_000


def test_tree_without_noise_matches_pathwise(random_env: RandomMeanFieldEnv) -> None:
    """ノイズなしの木の後退帰納法が経路ごとの計算と一致することのテスト。"""
    policy = UniformPolicy(3, 2)
    flow = induced_flow(random_env, policy, uniform(3))
    mdp = FrozenMdp.along(random_env, flow)
    tables = policy_tables(policy, flow)
    np.testing.assert_allclose(
        best_response_tree([mdp], None)[0], best_response_array(mdp)
    )
    np.testing.assert_allclose(
        evaluate_policy_tree([mdp], [tables], None)[0],
        evaluate_policy_array(mdp, tables),
    )
    with pytest.raises(FlowMismatchError):
        best_response_tree([mdp, mdp], None)


def test_tree_best_response_is_non_anticipative(
    closure_beach_bar: BeachBarEnv, closure_paths: list[CommonNoisePath]
) -> None:
    """木の最適応答が共通の履歴で一致し、先見的な値を超えないことのテスト。"""
    tree = NoiseTree(tuple(closure_paths))
    policy = UniformPolicy(5, 3)
    mu0 = point_mass(5, 0)
    flows = [induced_flow(closure_beach_bar, policy, mu0, path) for path in tree]
    mdps = [FrozenMdp.along(closure_beach_bar, flow) for flow in flows]
    q_star = best_response_tree(mdps, tree)
    # 時刻 0 の履歴は共通、時刻 1 で閉店の有無が分かれる
    np.testing.assert_array_equal(q_star[0][0], q_star[1][0])
    tree_value = float(mu0 @ q_star[0][0].max(axis=1))
    anticipative = np.mean(
        [float(mu0 @ best_response_array(mdp)[0].max(axis=1)) for mdp in mdps]
    )
    assert tree_value <= anticipative + 1e-12
    for q, mdp in zip(q_star, mdps, strict=True):
        np.testing.assert_allclose(q[-1], mdp.rewards[-1])


def test_tree_evaluation_of_fixed_policy_is_path_average(
    closure_beach_bar: BeachBarEnv, closure_paths: list[CommonNoisePath]
) -> None:
    """履歴に依存しない方策の木の評価が経路平均と一致することのテスト。"""
    tree = NoiseTree(tuple(closure_paths))
    policy = TabularPolicy.softmax(
        np.random.default_rng(2).normal(size=(4, 5, 3)), 1.0
    )
    flows = [induced_flow(closure_beach_bar, policy, uniform(5), path) for path in tree]
    mdps = [FrozenMdp.along(closure_beach_bar, flow) for flow in flows]
    tables = [policy_tables(policy, flow) for flow in flows]
    q_tree = evaluate_policy_tree(mdps, tables, tree)
    pathwise = np.mean(
        [evaluate_policy_array(mdp, t)[0] for mdp, t in zip(mdps, tables, strict=True)],
        axis=0,
    )
    np.testing.assert_allclose(q_tree[0][0], pathwise, atol=1e-12)
    np.testing.assert_allclose(q_tree[1][0], pathwise, atol=1e-12)
