"""
Fictitious Play モジュール。

このモジュールは、古典的な Fictitious Play を表形式で実行します。
各反復で直前の方策のフローを平均分布に加え、平均分布に対する最適応答を
動的計画法で求め、最適応答の一様混合を FP の方策として返します。
共通ノイズ下の最適応答は、初期値 ξ₀ ごとのノイズ木の上で開示済みの履歴だけに
依存するように求めます。
"""

import logging
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from src.master_mfg.core.errors import PolicyKeyMissError
from src.master_mfg.core.policy import (
    HistoryTabularPolicy,
    MasterPolicy,
    TabularPolicy,
    UniformPolicy,
    noise_key_of,
)
from src.master_mfg.envs.initial import InitialDistributionSet
from src.master_mfg.envs.models import EnvModel
from src.master_mfg.exact.dynamic_programming import FrozenMdp, best_response_tree
from src.master_mfg.exact.exploitability import (
    PairKey,
    evaluation_groups,
    exploitability,
    group_label,
)
from src.master_mfg.meanfield.flow import MeanFieldFlow, induced_flow
from src.master_mfg.noise.processes import (
    CommonNoisePath,
    NoiseHistory,
    NoiseObservation,
    NoiseTree,
)
from src.master_mfg.solvers.trace import SolverTrace, TraceRecord

logger = logging.getLogger(__name__)

# (時刻, 開示済み履歴) → 分布
NodeKey = tuple[int, NoiseHistory | None]
NodeFlows = Mapping[NodeKey, npt.NDArray[np.float64]]


def flow_nodes(
    flows: Sequence[MeanFieldFlow],
) -> dict[NodeKey, npt.NDArray[np.float64]]:
    """経路ごとのフローを (時刻, 履歴) で索引付けた分布にまとめます。"""
    nodes: dict[NodeKey, npt.NDArray[np.float64]] = {}
    for flow in flows:
        for n in range(flow.horizon + 1):
            nodes.setdefault((n, flow.noise_key(n)), flow[n])
    return nodes


def _as_nodes(flow: NodeFlows | npt.NDArray[np.float64]) -> NodeFlows:
    if isinstance(flow, Mapping):
        return flow
    return {(n, None): row for n, row in enumerate(np.asarray(flow))}


class MixturePolicy:
    """集団非依存方策の混合。

    各方策 i を重み w_i で選んだ集団の混合として評価します。節点
    (n, Ξ_n) の状態 x では成分 i のフロー質量 μ^i_n(x) に比例して行動分布を
    混ぜるため、混合方策のフローは成分フローの重み付き平均に一致します。
    集団に依存する成分には、観測した μ ではなく成分自身のフロー μ^i_n を渡します。

    Attributes:
        components: 成分方策
        weights: 成分の重み
    """

    population_dependent = False

    def __init__(
        self,
        components: Sequence[MasterPolicy],
        flows: Sequence[NodeFlows | npt.NDArray[np.float64]],
        weights: npt.ArrayLike | None = None,
    ) -> None:
        """初期化メソッド。

        Args:
            components: 成分方策
            flows: 各成分が μ₀ から生成するフロー。ノイズなしは (N_T+1, |𝒳|)
                配列、共通ノイズ下は flow_nodes の節点分布。
            weights: 成分の重み(省略時は一様)
        """
        if not components or len(components) != len(flows):
            raise ValueError('成分方策とフローの数が一致しません')
        self.components = list(components)
        self._flows = [_as_nodes(flow) for flow in flows]
        if weights is None:
            self.weights = np.full(len(components), 1.0 / len(components))
        else:
            self.weights = np.asarray(weights, dtype=np.float64)
            if abs(float(self.weights.sum()) - 1.0) > 1e-9:
                raise ValueError(f'混合の重みの総和が 1 ではありません: {self.weights}')

    def __len__(self) -> int:
        return len(self.components)

    def distribution(
        self,
        n: int,
        mu: npt.NDArray[np.float64],
        obs: NoiseObservation | None = None,
    ) -> npt.NDArray[np.float64]:
        key = (n, noise_key_of(obs))
        try:
            masses = np.stack([flows[key] for flows in self._flows])
        except KeyError:
            raise PolicyKeyMissError(n, None, key[1]) from None
        tables = np.stack(
            [
                policy.distribution(n, own, obs)
                for policy, own in zip(self.components, masses, strict=True)
            ]
        )
        mass = self.weights[:, None] * masses
        numerator = np.einsum('ks,ksa->sa', mass, tables)
        denominator = mass.sum(axis=0)
        fallback = np.einsum('k,ksa->sa', self.weights, tables)
        reached = denominator > 0.0
        rows = fallback.copy()
        rows[reached] = numerator[reached] / denominator[reached, None]
        return rows


def average_flows(
    average: npt.NDArray[np.float64] | None,
    flow: npt.NDArray[np.float64],
    k: int,
) -> npt.NDArray[np.float64]:
    """平均分布を μ̄^k = ((k-1) μ̄^{k-1} + μ^k) / k で更新します。"""
    if average is None or k == 1:
        return flow.copy()
    return ((k - 1) * average + flow) / k


def greedy_response(
    q_star: Sequence[npt.NDArray[np.float64]], tree: NoiseTree | None
) -> MasterPolicy:
    """経路ごとの Q* から、開示済みの履歴に依存する決定的方策を作ります。"""
    if tree is None:
        return TabularPolicy.greedy(q_star[0])
    tables = [TabularPolicy.greedy(q).table for q in q_star]
    return HistoryTabularPolicy.from_paths(tables, tree.paths)


@dataclass
class _FpBranch:
    """1 つの (μ₀, ノイズ木) についての FP の状態。"""

    label: str
    mu0: npt.NDArray[np.float64]
    tree: NoiseTree | None
    averages: list[npt.NDArray[np.float64]] | None = None
    latest: list[npt.NDArray[np.float64]] | None = None
    responses: list[MasterPolicy] = field(default_factory=list)
    response_flows: list[NodeFlows] = field(default_factory=list)

    @property
    def key(self) -> PairKey:
        return (self.label, group_label(self.tree))

    @property
    def paths(self) -> tuple[CommonNoisePath | None, ...]:
        return (None,) if self.tree is None else self.tree.paths

    def mixture(self) -> MixturePolicy:
        return MixturePolicy(self.responses, self.response_flows)


def run_fp(
    env: EnvModel,
    mu0_set: InitialDistributionSet,
    iterations: int,
    paths: Sequence[CommonNoisePath] | None = None,
    workers: int = 1,
) -> tuple[dict[PairKey, MixturePolicy], SolverTrace]:
    """Fictitious Play を実行します。

    Args:
        env: 環境
        mu0_set: 初期分布集合
        iterations: 反復回数 K (≥ 1)
        paths: 共通ノイズ経路
        workers: exploitability 評価の並列数

    Returns:
        tuple: (μ₀ ラベル, ノイズ木ラベル) ごとの混合方策と反復トレース
    """
    if iterations < 1:
        raise ValueError(f'反復回数は 1 以上である必要があります: {iterations}')
    uniform = UniformPolicy(env.n_states, env.n_actions)
    branches = [
        _FpBranch(label, mu0, tree)
        for label, mu0, tree in evaluation_groups(env, mu0_set, paths)
    ]
    trace = SolverTrace('fp')

    for k in range(1, iterations + 1):
        started = time.perf_counter()
        for branch in branches:
            current = branch.latest or [
                induced_flow(env, uniform, branch.mu0, path).distributions
                for path in branch.paths
            ]
            previous = branch.averages or [None] * len(current)
            branch.averages = [
                average_flows(average, flow, k)
                for average, flow in zip(previous, current, strict=True)
            ]
            mdps = [
                FrozenMdp.along(env, MeanFieldFlow(average, branch.label, path))
                for average, path in zip(branch.averages, branch.paths, strict=True)
            ]
            q_star = best_response_tree(mdps, branch.tree)
            response = greedy_response(q_star, branch.tree)
            flows = [
                induced_flow(env, response, branch.mu0, path, branch.label)
                for path in branch.paths
            ]
            branch.responses.append(response)
            branch.response_flows.append(flow_nodes(flows))
            branch.latest = [flow.distributions for flow in flows]

        ensemble = {branch.key: branch.mixture() for branch in branches}
        report = exploitability(
            env, ensemble, mu0_set, paths, iteration=k, workers=workers
        )
        trace.append(TraceRecord(k, report, time.perf_counter() - started))
        logger.info(
            'FP iteration %d/%d: exploitability=%.6g', k, iterations, report.mean_gap
        )

    return {branch.key: branch.mixture() for branch in branches}, trace
