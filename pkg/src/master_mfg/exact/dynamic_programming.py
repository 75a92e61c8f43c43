"""
動的計画法モジュール。

このモジュールは、固定した平均場フロー 𝝁 の下で個々のエージェントが解く
有限ホライズン MDP の後退帰納法(Q^π と Q*)、共通ノイズの木の上での
非先見的な後退帰納法、前進再帰による期待収益、
および全決定的マルコフ方策の列挙による検証用オラクルを提供します。
"""

import itertools
import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from src.master_mfg.core.errors import EnumerationLimitError, FlowMismatchError
from src.master_mfg.core.policy import MasterPolicy
from src.master_mfg.core.spaces import check_action_rows, check_state_distribution
from src.master_mfg.core.tabular import TabularQ
from src.master_mfg.envs.models import EnvModel
from src.master_mfg.meanfield.flow import MeanFieldFlow
from src.master_mfg.noise.processes import NoiseTree

logger = logging.getLogger(__name__)

# 全方策列挙の上限
ENUMERATION_LIMIT: int = 1_000_000

# 2 つの分布を同一とみなす許容差
_FLOW_TOLERANCE: float = 1e-12


@dataclass(frozen=True)
class FrozenMdp:
    """フローを固定したときの時刻別の報酬と遷移核。

    Attributes:
        rewards: (N_T+1, |𝒳|, |𝒜|) の報酬
        kernels: (N_T, |𝒳|, |𝒜|, |𝒳|) の遷移核
    """

    rewards: npt.NDArray[np.float64]
    kernels: npt.NDArray[np.float64]

    @property
    def horizon(self) -> int:
        """ホライズン N_T。"""
        return self.rewards.shape[0] - 1

    @classmethod
    def along(cls, env: EnvModel, flow: MeanFieldFlow) -> 'FrozenMdp':
        """フロー上で環境を評価して固定 MDP を作ります。

        Raises:
            FlowMismatchError: フローのホライズンや状態数が環境と一致しない場合
        """
        check_flow(env, flow)
        rewards = np.stack(
            [
                env.reward_table(n, flow[n], flow.xi(n))
                for n in range(env.horizon + 1)
            ]
        )
        if env.horizon == 0:
            kernels = np.zeros((0, env.n_states, env.n_actions, env.n_states))
        else:
            kernels = np.stack(
                [
                    env.transition_tensor(n, flow[n], flow.xi(n))
                    for n in range(env.horizon)
                ]
            )
        return cls(rewards, kernels)


def check_flow(env: EnvModel, flow: MeanFieldFlow) -> None:
    """フローが環境の定義域と一致するか検証します。"""
    if flow.horizon != env.horizon:
        raise FlowMismatchError(
            f'フローのホライズン {flow.horizon} が環境の {env.horizon} と一致しません'
        )
    if flow.distributions.shape[1] != env.n_states:
        raise FlowMismatchError(
            f'フローの状態数 {flow.distributions.shape[1]} が '
            f'|𝒳|={env.n_states} と一致しません'
        )
    if env.noise_kind is not None and flow.path is None:
        raise FlowMismatchError(
            f'共通ノイズのある環境 {env.name} にノイズ経路のないフローが渡されました'
        )


def policy_tables(policy: MasterPolicy, flow: MeanFieldFlow) -> npt.NDArray[np.float64]:
    """フロー上の各時刻で方策を評価し (N_T+1, |𝒳|, |𝒜|) で返します。"""
    return np.stack(
        [
            check_action_rows(policy.distribution(n, flow[n], flow.observation(n)))
            for n in range(flow.horizon + 1)
        ]
    )


def evaluate_policy_array(
    mdp: FrozenMdp, tables: npt.NDArray[np.float64], gamma: float = 1.0
) -> npt.NDArray[np.float64]:
    """固定 MDP 上で Q^π を後退帰納法で計算します。

    Args:
        mdp: 固定 MDP
        tables: (N_T+1, |𝒳|, |𝒜|) の方策
        gamma: 割引率

    Returns:
        NDArray: (N_T+1, |𝒳|, |𝒜|) の Q^π
    """
    q = np.empty_like(mdp.rewards)
    q[-1] = mdp.rewards[-1]
    for n in range(mdp.horizon - 1, -1, -1):
        value_next = (tables[n + 1] * q[n + 1]).sum(axis=1)
        q[n] = mdp.rewards[n] + gamma * mdp.kernels[n] @ value_next
    return q


def best_response_array(
    mdp: FrozenMdp, gamma: float = 1.0
) -> npt.NDArray[np.float64]:
    """固定 MDP 上で Q* を後退帰納法で計算します。"""
    q = np.empty_like(mdp.rewards)
    q[-1] = mdp.rewards[-1]
    for n in range(mdp.horizon - 1, -1, -1):
        q[n] = mdp.rewards[n] + gamma * mdp.kernels[n] @ q[n + 1].max(axis=1)
    return q


def return_array(
    mdp: FrozenMdp, tables: npt.NDArray[np.float64], mu0: npt.NDArray[np.float64]
) -> float:
    """エージェント自身の状態分布を前進させて期待収益を計算します。"""
    own = mu0
    total = 0.0
    for n in range(mdp.horizon + 1):
        state_action = own[:, None] * tables[n]
        total += float((state_action * mdp.rewards[n]).sum())
        if n < mdp.horizon:
            own = np.einsum('sa,sat->t', state_action, mdp.kernels[n])
    return total


def _node_groups(tree: NoiseTree | None, n: int, count: int) -> list[tuple[int, ...]]:
    if tree is None:
        return [tuple(range(count))]
    return tree.groups(n)


def _tree_backward(
    mdps: Sequence[FrozenMdp],
    tree: NoiseTree | None,
    value_of: Callable[[int, int, npt.NDArray[np.float64]], npt.NDArray[np.float64]],
    gamma: float,
) -> list[npt.NDArray[np.float64]]:
    if tree is not None and len(tree) != len(mdps):
        raise FlowMismatchError(
            f'固定 MDP の数 {len(mdps)} が経路数 {len(tree)} と一致しません'
        )
    if tree is None and len(mdps) != 1:
        raise FlowMismatchError('ノイズなしでは固定 MDP は 1 つです')
    q = [np.empty_like(mdp.rewards) for mdp in mdps]
    for i, mdp in enumerate(mdps):
        q[i][-1] = mdp.rewards[-1]
    for n in range(mdps[0].horizon - 1, -1, -1):
        values = [value_of(i, n + 1, q[i][n + 1]) for i in range(len(mdps))]
        for group in _node_groups(tree, n, len(mdps)):
            # 履歴 Ξ_n を共有する経路の上で ξ_{n+1} 以降の期待値を取る
            expected = np.mean([values[i] for i in group], axis=0)
            for i in group:
                q[i][n] = mdps[i].rewards[n] + gamma * mdps[i].kernels[n] @ expected
    return q


def best_response_tree(
    mdps: Sequence[FrozenMdp], tree: NoiseTree | None, gamma: float = 1.0
) -> list[npt.NDArray[np.float64]]:
    """ノイズ木の上で非先見的な最適応答 Q* を計算します。

    各経路の固定 MDP を受け取り、時刻 n の値は履歴 Ξ_n を共有する経路の
    継続価値の平均から作ります。戻り値の Q*_n は同じ履歴の経路で一致します。

    Args:
        mdps: 木の経路順に並べた固定 MDP(ノイズなしは 1 つ)
        tree: ノイズ木(ノイズなしは None)
        gamma: 割引率

    Returns:
        list[NDArray]: 経路ごとの (N_T+1, |𝒳|, |𝒜|) の Q*
    """
    return _tree_backward(mdps, tree, lambda i, n, q: q.max(axis=1), gamma)


def evaluate_policy_tree(
    mdps: Sequence[FrozenMdp],
    tables: Sequence[npt.NDArray[np.float64]],
    tree: NoiseTree | None,
    gamma: float = 1.0,
) -> list[npt.NDArray[np.float64]]:
    """ノイズ木の上で履歴に依存する方策の Q^π を計算します。"""
    return _tree_backward(
        mdps, tree, lambda i, n, q: (tables[i][n] * q).sum(axis=1), gamma
    )


def evaluate_policy_q(
    env: EnvModel,
    policy: MasterPolicy,
    flow: MeanFieldFlow,
    gamma: float = 1.0,
) -> TabularQ:
    """フロー 𝝁 に沿って方策 π の Q 関数を計算します。

    Q_N(x, a) = r_N(x, a, μ_N)、
    Q_n(x, a) = r_n(x, a, μ_n)
    + γ Σ_{x'} p_n(x'|x, a, μ_n) Σ_{a'} π_{n+1}(a'|x') Q_{n+1}(x', a')。

    Args:
        env: 環境
        policy: 評価する方策
        flow: 固定する平均場フロー
        gamma: 割引率(exploitability では 1)

    Returns:
        TabularQ: フロー上のキーで索引付けた Q^π

    Raises:
        FlowMismatchError: フローが環境と一致しない場合
    """
    mdp = FrozenMdp.along(env, flow)
    values = evaluate_policy_array(mdp, policy_tables(policy, flow), gamma)
    return TabularQ.from_flow(values, flow)


def best_response_q(
    env: EnvModel, flow: MeanFieldFlow, gamma: float = 1.0
) -> TabularQ:
    """フロー 𝝁 に対する最適 Q 関数 Q* を計算します。

    Args:
        env: 環境
        flow: 固定する平均場フロー
        gamma: 割引率

    Returns:
        TabularQ: フロー上のキーで索引付けた Q*
    """
    mdp = FrozenMdp.along(env, flow)
    return TabularQ.from_flow(best_response_array(mdp, gamma), flow)


def best_response_value(
    env: EnvModel, flow: MeanFieldFlow, mu0: npt.ArrayLike
) -> float:
    """sup_π' J(π'; 𝝁) = Σ_x μ₀(x) max_a Q*_0(x, a) を返します。"""
    initial = check_state_distribution(mu0, env.state_space)
    q_star = best_response_array(FrozenMdp.along(env, flow))
    return float(initial @ q_star[0].max(axis=1))


def policy_return(
    env: EnvModel,
    policy: MasterPolicy,
    flow: MeanFieldFlow,
    mu0: npt.ArrayLike,
) -> float:
    """フローを固定したときの方策の期待収益 J(π; 𝝁) を返します。

    方策はフローの μ_n を入力として評価し、エージェント自身の状態分布は
    μ₀ から前進再帰で計算します(サンプリングなし)。

    Raises:
        FlowMismatchError: フローが μ₀ から始まらない場合
    """
    initial = check_state_distribution(mu0, env.state_space)
    if not flow.empirical and not np.allclose(
        flow[0], initial, atol=_FLOW_TOLERANCE, rtol=0.0
    ):
        raise FlowMismatchError(f'フロー {flow.mu0_label} が μ₀ から始まっていません')
    mdp = FrozenMdp.along(env, flow)
    return return_array(mdp, policy_tables(policy, flow), initial)


def brute_force_best_return(
    env: EnvModel,
    flow: MeanFieldFlow,
    mu0: npt.ArrayLike,
    limit: int = ENUMERATION_LIMIT,
) -> float:
    """全決定的マルコフ方策を列挙して最大の期待収益を返します。

    Args:
        env: 環境
        flow: 固定する平均場フロー
        mu0: 初期分布
        limit: 列挙する方策数の上限

    Returns:
        float: 列挙した方策の期待収益の最大値

    Raises:
        EnumerationLimitError: |𝒜|^(|𝒳|·(N_T+1)) が上限を超える場合
    """
    initial = check_state_distribution(mu0, env.state_space)
    n_slots = env.n_states * (env.horizon + 1)
    count = env.n_actions**n_slots
    if count > limit:
        raise EnumerationLimitError(count, limit)
    logger.debug('%d 個の決定的方策を列挙します', count)

    mdp = FrozenMdp.along(env, flow)
    eye = np.eye(env.n_actions)
    shape = (env.horizon + 1, env.n_states, env.n_actions)
    best = -np.inf
    for choice in itertools.product(range(env.n_actions), repeat=n_slots):
        tables = eye[np.asarray(choice)].reshape(shape)
        best = max(best, return_array(mdp, tables, initial))
    return float(best)
