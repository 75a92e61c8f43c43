"""
exploitability モジュール。

このモジュールは、方策が自身の生成する平均場フローに対して持つ
最適応答との収益差 ℰ^{μ₀}(π) = sup_π' J(π'; 𝝁^{μ₀,π}) - J(π; 𝝁^{μ₀,π}) を、
初期分布集合と初期ノイズ ξ₀ ごとのノイズ木について一様平均した
厳密な指標として計算します。共通ノイズ下の最適応答は開示済みの履歴だけに
依存し、木の経路についての期待収益を最大化します。
"""

import logging
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt

from src.master_mfg.core.errors import FlowMismatchError, NoiseError
from src.master_mfg.core.policy import MasterPolicy
from src.master_mfg.envs.initial import InitialDistributionSet
from src.master_mfg.envs.models import EnvModel
from src.master_mfg.exact.dynamic_programming import (
    FrozenMdp,
    best_response_tree,
    policy_tables,
    return_array,
)
from src.master_mfg.meanfield.flow import MeanFieldFlow, induced_flow
from src.master_mfg.noise.processes import CommonNoisePath, NoiseTree, split_by_origin

logger = logging.getLogger(__name__)

# 浮動小数誤差として許容する負の gap
GAP_TOLERANCE: float = 1e-8

REPORT_COLUMNS: tuple[str, ...] = (
    'iteration',
    'seed',
    'mu0_label',
    'noise_label',
    'br_value',
    'policy_value',
    'gap',
)

PairKey = tuple[str, str]
PolicySource = MasterPolicy | Mapping[PairKey, MasterPolicy]


@dataclass(frozen=True)
class ExploitabilityEntry:
    """(μ₀, ノイズ木) ごとの評価結果。"""

    mu0_label: str
    noise_label: str
    br_value: float
    policy_value: float

    @property
    def gap(self) -> float:
        """最適応答との収益差。"""
        return self.br_value - self.policy_value


@dataclass(frozen=True)
class ExploitabilityReport:
    """exploitability の評価レポート。

    Attributes:
        entries: (μ₀, ノイズ木) ごとの結果
        iteration: 反復番号
        seed: シード
        metadata: 評価条件(フローの種類など)
    """

    entries: tuple[ExploitabilityEntry, ...]
    iteration: int = 0
    seed: int = 0
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError('exploitability レポートが空です')
        for entry in self.entries:
            if entry.gap < -GAP_TOLERANCE:
                raise FlowMismatchError(
                    f'{entry.mu0_label}/{entry.noise_label} の gap が負です: '
                    f'{entry.gap}(方策の評価フローが不整合です)'
                )

    @property
    def gaps(self) -> npt.NDArray[np.float64]:
        """gap の配列。"""
        return np.array([entry.gap for entry in self.entries])

    @property
    def mean_gap(self) -> float:
        """gap の一様平均(集約 exploitability)。"""
        return float(self.gaps.mean())

    def rows(self) -> list[dict[str, Any]]:
        """CSV 書き出し用の行を返します。"""
        return [
            {
                'iteration': self.iteration,
                'seed': self.seed,
                'mu0_label': entry.mu0_label,
                'noise_label': entry.noise_label,
                'br_value': entry.br_value,
                'policy_value': entry.policy_value,
                'gap': entry.gap,
            }
            for entry in self.entries
        ]


def resolve_policy(policy: PolicySource, key: PairKey) -> MasterPolicy:
    """方策、または (μ₀ ラベル, ノイズラベル) からの写像から方策を取り出します。

    Raises:
        FlowMismatchError: 写像にキーが無い場合
    """
    if isinstance(policy, Mapping):
        try:
            return policy[key]
        except KeyError:
            raise FlowMismatchError(f'{key} に対応する方策がありません') from None
    return policy


def group_label(tree: NoiseTree | None) -> str:
    """評価グループの出力用ノイズラベル。"""
    return 'none' if tree is None else tree.label


def evaluate_group(
    env: EnvModel,
    policy: MasterPolicy,
    mu0: npt.NDArray[np.float64],
    mu0_label: str,
    tree: NoiseTree | None,
) -> tuple[ExploitabilityEntry, list[MeanFieldFlow]]:
    """1 つの (μ₀, ノイズ木) について最適応答値と方策の収益を計算します。

    最適応答は開示済みの履歴だけに依存し、木の経路についての期待値を
    最大化します。方策の収益も同じ経路の一様平均です。

    Returns:
        tuple: 評価結果と、経路ごとの誘導フロー
    """
    paths: tuple[CommonNoisePath | None, ...] = (None,) if tree is None else tree.paths
    flows = [induced_flow(env, policy, mu0, path, mu0_label) for path in paths]
    mdps = [FrozenMdp.along(env, flow) for flow in flows]
    q_star = best_response_tree(mdps, tree)
    br_value = float(np.mean([mu0 @ q[0].max(axis=1) for q in q_star]))
    policy_value = float(
        np.mean(
            [
                return_array(mdp, policy_tables(policy, flow), mu0)
                for mdp, flow in zip(mdps, flows, strict=True)
            ]
        )
    )
    entry = ExploitabilityEntry(mu0_label, group_label(tree), br_value, policy_value)
    return entry, flows


def _check_paths(env: EnvModel, paths: Sequence[CommonNoisePath] | None) -> None:
    if env.noise_kind is not None and not paths:
        raise NoiseError(f'環境 {env.name} の評価にはノイズ経路が必要です')


def evaluation_pairs(
    env: EnvModel,
    mu0_set: InitialDistributionSet,
    paths: Sequence[CommonNoisePath] | None,
) -> list[tuple[str, npt.NDArray[np.float64], CommonNoisePath | None]]:
    """経路ごとの (ラベル, μ₀, 経路) の組を列挙します(フローの書き出しと学習用)。

    Raises:
        NoiseError: 共通ノイズのある環境で経路が与えられない場合
    """
    _check_paths(env, paths)
    path_list: list[CommonNoisePath | None] = list(paths) if paths else [None]
    return [
        (label, mu0, path) for label, mu0 in mu0_set.members for path in path_list
    ]


def evaluation_groups(
    env: EnvModel,
    mu0_set: InitialDistributionSet,
    paths: Sequence[CommonNoisePath] | None,
) -> list[tuple[str, npt.NDArray[np.float64], NoiseTree | None]]:
    """exploitability を評価する (ラベル, μ₀, ノイズ木) の組を列挙します。

    経路は初期値 ξ₀ ごとの木にまとめます。ノイズなしの木は None です。

    Raises:
        NoiseError: 共通ノイズのある環境で経路が与えられない場合
    """
    _check_paths(env, paths)
    trees: list[NoiseTree | None] = list(split_by_origin(paths)) if paths else [None]
    return [(label, mu0, tree) for label, mu0 in mu0_set.members for tree in trees]


def exploitability(
    env: EnvModel,
    policy: PolicySource,
    mu0_set: InitialDistributionSet,
    paths: Sequence[CommonNoisePath] | None = None,
    iteration: int = 0,
    seed: int = 0,
    workers: int = 1,
) -> ExploitabilityReport:
    """方策の exploitability を厳密に計算します。

    各 (μ₀, ノイズ木) について方策自身の誘導フロー 𝝁^{μ₀,π} を経路ごとに作り、
    履歴に依存する最適応答値から方策の収益を引きます。

    Args:
        env: 環境
        policy: マスター方策、または (μ₀ ラベル, ノイズラベル) から方策への写像。
            ノイズラベルは group_label(木) です。
        mu0_set: 初期分布集合
        paths: 共通ノイズ経路(ノイズなし環境では None)
        iteration: レポートに記録する反復番号
        seed: レポートに記録するシード
        workers: 並列に評価するスレッド数

    Returns:
        ExploitabilityReport: (μ₀, ノイズ木) ごとの gap と一様平均

    Raises:
        PolicyKeyMissError: 表形式方策が誘導フロー上で未定義の場合
    """
    groups = evaluation_groups(env, mu0_set, paths)

    def _run(
        item: tuple[str, npt.NDArray[np.float64], NoiseTree | None],
    ) -> ExploitabilityEntry:
        label, mu0, tree = item
        key = (label, group_label(tree))
        entry, _ = evaluate_group(env, resolve_policy(policy, key), mu0, label, tree)
        return entry

    if workers > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            entries = list(executor.map(_run, groups))
    else:
        entries = [_run(item) for item in groups]

    report = ExploitabilityReport(
        tuple(entries),
        iteration=iteration,
        seed=seed,
        metadata={
            'flow_mode': 'exact',
            'pairs': len(entries),
            'paths': len(paths) if paths else 0,
        },
    )
    logger.debug('iteration=%d exploitability=%.6g', iteration, report.mean_gap)
    return report


def monotonicity_probe(
    env: EnvModel,
    mu: npt.ArrayLike,
    mu_prime: npt.ArrayLike,
    xi: float | None = None,
) -> float:
    """Lasry-Lions 単調性の内積 Σ_x (μ(x) - μ'(x))(r̄(x, μ) - r̄(x, μ')) を返します。

    単調な相互作用では 0 以下になります。診断用で、学習を止める判定には使いません。

    Raises:
        InteractionUndefinedError: 環境が相互作用報酬を宣言していない場合
    """
    first = np.asarray(mu, dtype=np.float64)
    second = np.asarray(mu_prime, dtype=np.float64)
    difference = env.interaction_reward(first, xi) - env.interaction_reward(second, xi)
    return float((first - second) @ difference)
