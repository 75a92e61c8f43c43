"""
平均場フローモジュール。

このモジュールは、μ_{n+1}(x') = Σ_{x,a} μ_n(x) π_n(a|x, μ_n) p_n(x'|x, a, μ_n) による
厳密な前進伝播と、N 体のエージェントをサンプルする経験的フローを提供します。
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import numpy.typing as npt

from src.master_mfg.core.errors import DistributionError, FlowMismatchError
from src.master_mfg.core.numerics import DistributionKey, distribution_key
from src.master_mfg.core.policy import MasterPolicy
from src.master_mfg.core.spaces import (
    SIMPLEX_TOLERANCE,
    StateDistribution,
    check_action_rows,
    check_state_distribution,
)
from src.master_mfg.envs.models import EnvModel
from src.master_mfg.noise.processes import (
    CommonNoisePath,
    NoiseHistory,
    NoiseObservation,
    reveal,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MeanFieldFlow:
    """時刻 0…N_T の集団分布列。

    Attributes:
        distributions: (N_T+1, |𝒳|) の分布列(読み取り専用)
        mu0_label: 初期分布のラベル
        path: 条件付けた共通ノイズ経路(なければ None)
        policy_label: フローを生成した方策のラベル
        empirical: 経験的(サンプル)フローかどうか
    """

    distributions: npt.NDArray[np.float64] = field(repr=False)
    mu0_label: str = 'mu0'
    path: CommonNoisePath | None = None
    policy_label: str = ''
    empirical: bool = False

    @property
    def horizon(self) -> int:
        """ホライズン N_T。"""
        return self.distributions.shape[0] - 1

    def noise_key(self, n: int) -> NoiseHistory | None:
        """時刻 n の表形式方策のノイズキー(開示済みの履歴 Ξ_n)。"""
        return None if self.path is None else self.path.history(n)

    @property
    def noise_label(self) -> str:
        """出力用のノイズラベル。"""
        return 'none' if self.path is None else self.path.label

    def __getitem__(self, n: int) -> npt.NDArray[np.float64]:
        return self.distributions[n]

    def key(self, n: int) -> DistributionKey:
        """時刻 n の分布キー。"""
        return distribution_key(self.distributions[n], n)

    def observation(self, n: int) -> NoiseObservation | None:
        """時刻 n のノイズ観測(経路なしは None)。"""
        return None if self.path is None else reveal(self.path, n)

    def xi(self, n: int) -> float | None:
        """時刻 n のノイズ値(経路なしは None)。"""
        return None if self.path is None else self.path.value(n)


def propagate(
    mu: npt.NDArray[np.float64],
    policy_rows: npt.ArrayLike,
    env: EnvModel,
    n: int,
    xi: float | None = None,
) -> StateDistribution:
    """分布を 1 ステップ前進させます。

    Args:
        mu: 時刻 n の集団分布
        policy_rows: 各状態の行動分布 (|𝒳|, |𝒜|)
        env: 環境
        n: 時刻
        xi: 時刻 n の共通ノイズ値

    Returns:
        StateDistribution: 時刻 n+1 の分布

    Raises:
        DistributionError: 方策行が単体条件を満たさない場合(状態番号を含む)
    """
    rows = check_action_rows(policy_rows)
    kernel = env.transition_tensor(n, mu, xi)
    state_action = mu[:, None] * rows
    nxt = np.einsum('sa,sat->t', state_action, kernel)
    total = float(nxt.sum())
    if abs(total - 1.0) > SIMPLEX_TOLERANCE:
        raise DistributionError(f'時刻 {n + 1} で質量が保存されていません: {total}')
    return nxt


def _check_path(env: EnvModel, path: CommonNoisePath | None) -> None:
    if path is not None and path.horizon != env.horizon:
        raise FlowMismatchError(
            f'ノイズ経路 {path.label} の長さ {path.horizon} がホライズン '
            f'{env.horizon} と一致しません'
        )


def continue_flow(
    env: EnvModel,
    policy: MasterPolicy,
    mu: npt.NDArray[np.float64],
    start: int,
    path: CommonNoisePath | None = None,
) -> list[npt.NDArray[np.float64]]:
    """時刻 start の分布 mu から N_T までの継続フローを計算します。"""
    _check_path(env, path)
    distributions = [np.asarray(mu, dtype=np.float64)]
    for n in range(start, env.horizon):
        obs = None if path is None else reveal(path, n)
        current = distributions[-1]
        rows = policy.distribution(n, current, obs)
        distributions.append(propagate(current, rows, env, n, env.noise_value(path, n)))
    return distributions


def induced_flow(
    env: EnvModel,
    policy: MasterPolicy,
    mu0: npt.ArrayLike,
    path: CommonNoisePath | None = None,
    mu0_label: str = 'mu0',
    policy_label: str = '',
) -> MeanFieldFlow:
    """方策 π が μ₀ から生成する厳密な平均場フローを計算します。

    Args:
        env: 環境
        policy: マスター方策
        mu0: 初期分布
        path: 共通ノイズ経路
        mu0_label: 初期分布のラベル
        policy_label: 方策のラベル

    Returns:
        MeanFieldFlow: 決定的なフロー

    Raises:
        PolicyKeyMissError: 表形式方策が未登録の (n, キー) で評価された場合
    """
    initial = check_state_distribution(mu0, env.state_space)
    distributions = np.stack(continue_flow(env, policy, initial, 0, path))
    distributions.flags.writeable = False
    return MeanFieldFlow(distributions, mu0_label, path, policy_label)


def empirical_flow(
    env: EnvModel,
    policy: MasterPolicy,
    mu0: npt.ArrayLike,
    n_agents: int,
    path: CommonNoisePath | None = None,
    seed: int = 0,
    mu0_label: str = 'mu0',
) -> MeanFieldFlow:
    """N 体のエージェントをサンプルして経験的フロー μ̂ を計算します。

    全エージェントは共通ノイズを共有し、個別の遷移ノイズは独立です。
    方策には経験分布 μ̂_n を入力します。状態ごとの行動数と (状態, 行動) ごとの
    遷移先数を多項分布で引くため、個々の軌道を追うのと同じ分布になります。

    Args:
        env: 環境
        policy: マスター方策
        mu0: 初期分布
        n_agents: エージェント数 (≥ 1)
        path: 共通ノイズ経路
        seed: 乱数シード
        mu0_label: 初期分布のラベル

    Returns:
        MeanFieldFlow: 経験的フロー
    """
    if n_agents < 1:
        raise ValueError(f'n_agents は 1 以上である必要があります: {n_agents}')
    _check_path(env, path)
    initial = check_state_distribution(mu0, env.state_space)
    rng = np.random.default_rng(seed)

    counts = rng.multinomial(n_agents, initial)
    distributions = [counts / n_agents]
    for n in range(env.horizon):
        mu_hat = distributions[-1]
        obs = None if path is None else reveal(path, n)
        rows = check_action_rows(policy.distribution(n, mu_hat, obs))
        kernel = env.transition_tensor(n, mu_hat, env.noise_value(path, n))
        next_counts = np.zeros(env.n_states, dtype=np.int64)
        for x in np.flatnonzero(counts):
            action_counts = rng.multinomial(counts[x], rows[x])
            for a in np.flatnonzero(action_counts):
                next_counts += rng.multinomial(action_counts[a], kernel[x, a])
        counts = next_counts
        distributions.append(counts / n_agents)

    stacked = np.stack(distributions)
    stacked.flags.writeable = False
    return MeanFieldFlow(stacked, mu0_label, path, empirical=True)


def export_flow_csv(flow: MeanFieldFlow, file_path: Path) -> None:
    """フローを CSV 行列(行 = 時刻、列 = 状態)として書き出します。"""
    file_path.parent.mkdir(parents=True, exist_ok=True)
    n_states = flow.distributions.shape[1]
    with open(file_path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['n', *(f'state_{x}' for x in range(n_states))])
        for n, mu in enumerate(flow.distributions):
            writer.writerow([n, *(repr(float(v)) for v in mu)])
