"""
Fictitious Play モジュールのテスト。
"""

import numpy as np
import pytest

from src.master_mfg.core.errors import PolicyKeyMissError
from src.master_mfg.core.policy import (
    HistoryTabularPolicy,
    TabularPolicy,
    UniformPolicy,
)
from src.master_mfg.envs.beach_bar import BeachBarEnv
from src.master_mfg.envs.exploration import ExplorationEnv
from src.master_mfg.envs.initial import InitialDistributionSet
from src.master_mfg.exact.dynamic_programming import FrozenMdp, best_response_array
from src.master_mfg.meanfield.flow import induced_flow
from src.master_mfg.noise.processes import CommonNoisePath, reveal
from src.master_mfg.solvers.fictitious_play import (
    MixturePolicy,
    average_flows,
    flow_nodes,
    run_fp,
)
from tests.conftest import point_mass, single_set, uniform


def test_first_iteration_is_best_response_to_uniform(
    small_exploration: ExplorationEnv,
) -> None:
    """K=1 の方策が一様方策のフローへの最適応答になることのテスト。"""
    mu0 = point_mass(9, 0)
    policies, trace = run_fp(small_exploration, single_set(mu0), 1)

    uniform_flow = induced_flow(small_exploration, UniformPolicy(9, 5), mu0)
    expected = TabularPolicy.greedy(
        best_response_array(FrozenMdp.along(small_exploration, uniform_flow))
    )
    mixture = policies[('mu0', 'none')]
    assert len(mixture) == 1
    response = mixture.components[0]
    assert isinstance(response, TabularPolicy)
    np.testing.assert_array_equal(response.table, expected.table)
    assert trace.iterations == [1]


def test_average_flows() -> None:
    """平均分布の更新式のテスト。"""
    first = np.array([[1.0, 0.0]])
    second = np.array([[0.0, 1.0]])
    third = np.array([[0.0, 1.0]])
    average = average_flows(None, first, 1)
    average = average_flows(average, second, 2)
    average = average_flows(average, third, 3)
    np.testing.assert_allclose(average, [[1.0 / 3.0, 2.0 / 3.0]])


def test_mixture_flow_is_average_of_components(
    small_exploration: ExplorationEnv,
) -> None:
    """混合方策のフローが成分フローの重み付き平均になることのテスト。"""
    rng = np.random.default_rng(2)
    mu0 = uniform(9)
    components = [
        TabularPolicy.softmax(rng.normal(size=(4, 9, 5)), 0.5) for _ in range(3)
    ]
    flows = [
        induced_flow(small_exploration, policy, mu0).distributions
        for policy in components
    ]
    weights = np.array([0.5, 0.3, 0.2])
    mixture = MixturePolicy(components, flows, weights)
    mixed = induced_flow(small_exploration, mixture, mu0)
    np.testing.assert_allclose(
        mixed.distributions,
        np.einsum('k,kns->ns', weights, np.stack(flows)),
        atol=1e-12,
    )


class _CrowdAverse:
    """最も混んだ状態の質量が 1/2 を超えると行動 1、それ以外は行動 2 を取る方策。"""

    population_dependent = True

    def distribution(
        self, n: int, mu: np.ndarray, obs: object = None
    ) -> np.ndarray:
        rows = np.zeros((mu.shape[0], 5))
        rows[:, 1 if mu.max() > 0.5 else 2] = 1.0
        return rows


def test_population_dependent_component_reads_own_flow(
    small_exploration: ExplorationEnv,
) -> None:
    """集団に依存する成分が自身のフローで評価され、混合のフローが平均になることのテスト。"""
    mu0 = point_mass(9, 4)
    components = [_CrowdAverse(), TabularPolicy(np.full((4, 9, 5), 0.2))]
    flows = [
        induced_flow(small_exploration, policy, mu0).distributions
        for policy in components
    ]
    mixture = MixturePolicy(components, flows)
    mixed = induced_flow(small_exploration, mixture, mu0)
    np.testing.assert_allclose(
        mixed.distributions, (flows[0] + flows[1]) / 2, atol=1e-12
    )


def test_mixture_validation() -> None:
    """混合方策の引数検証のテスト。"""
    table = TabularPolicy(np.full((2, 2, 2), 0.5))
    flow = np.full((2, 2), 0.5)
    with pytest.raises(ValueError):
        MixturePolicy([], [])
    with pytest.raises(ValueError):
        MixturePolicy([table], [flow, flow])
    with pytest.raises(ValueError):
        MixturePolicy([table, table], [flow, flow], [0.7, 0.7])


def test_mixture_unreached_state_uses_weights() -> None:
    """どの成分も到達しない状態では重みで行動分布を混ぜることのテスト。"""
    first = np.zeros((1, 2, 2))
    first[..., 0] = 1.0
    second = np.zeros((1, 2, 2))
    second[..., 1] = 1.0
    flows = [np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]])]
    mixture = MixturePolicy(
        [TabularPolicy(first), TabularPolicy(second)], flows, [0.25, 0.75]
    )
    rows = mixture.distribution(0, np.array([1.0, 0.0]))
    np.testing.assert_allclose(rows[1], [0.25, 0.75])


def test_fp_exploitability_decreases(beach_bar_1d: BeachBarEnv) -> None:
    """FP の exploitability が反復とともに減ることのテスト。"""
    mu_set = InitialDistributionSet((('a', uniform(5)), ('b', point_mass(5, 0))))
    policies, trace = run_fp(beach_bar_1d, mu_set, 20)
    assert set(policies) == {('a', 'none'), ('b', 'none')}
    assert trace.mean_gaps[-1] < trace.mean_gaps[0]
    assert all(gap >= 0.0 for gap in trace.mean_gaps)


def test_fp_with_noise_paths(
    closure_beach_bar: BeachBarEnv, closure_paths: list[CommonNoisePath]
) -> None:
    """経路の木ごとに FP の分岐を持ち、方策が履歴だけに依存することのテスト。"""
    policies, trace = run_fp(
        closure_beach_bar, single_set(uniform(5)), 2, closure_paths
    )
    assert set(policies) == {('mu0', 'closure_a+closure_b')}
    assert len(trace.records[-1].report.entries) == 1
    mixture = policies[('mu0', 'closure_a+closure_b')]
    first, second = closure_paths
    np.testing.assert_array_equal(
        mixture.distribution(0, uniform(5), reveal(first, 0)),
        mixture.distribution(0, uniform(5), reveal(second, 0)),
    )
    assert all(isinstance(c, HistoryTabularPolicy) for c in mixture.components)


def test_mixture_with_node_flows(
    closure_beach_bar: BeachBarEnv, closure_paths: list[CommonNoisePath]
) -> None:
    """履歴付きの節点フローで混合方策のフローが成分の平均になることのテスト。"""
    rng = np.random.default_rng(4)
    mu0 = uniform(5)
    components = [
        TabularPolicy.softmax(rng.normal(size=(4, 5, 3)), 0.5) for _ in range(2)
    ]
    per_path = [
        [induced_flow(closure_beach_bar, policy, mu0, path) for path in closure_paths]
        for policy in components
    ]
    mixture = MixturePolicy(components, [flow_nodes(flows) for flows in per_path])
    for i, path in enumerate(closure_paths):
        mixed = induced_flow(closure_beach_bar, mixture, mu0, path)
        expected = np.mean([flows[i].distributions for flows in per_path], axis=0)
        np.testing.assert_allclose(mixed.distributions, expected, atol=1e-12)
    with pytest.raises(PolicyKeyMissError):
        mixture.distribution(0, mu0)


def test_fp_requires_iterations(small_exploration: ExplorationEnv) -> None:
    """反復回数 0 を拒否することのテスト。"""
    with pytest.raises(ValueError):
        run_fp(small_exploration, single_set(uniform(9)), 0)
