"""
古典 OMD モジュール。

このモジュールは、集団に依存しない表形式方策 π_n(a|x) の Online Mirror Descent を
実行します。各反復で現在の方策のフローを求め、そのフロー上の Q^π を
q̄ ← q̄ + Q^π/τ と累積し、π = softmax(q̄) とします。
共通ノイズ下では同じ初期値 ξ₀ を持つ経路のノイズ木の上で Q^π を評価し、
方策は開示済みの履歴 Ξ_n で索引付けます。
"""

import logging
import time
from collections.abc import Sequence

import numpy as np
import numpy.typing as npt

from src.master_mfg.core.policy import HistoryTabularPolicy, MasterPolicy, TabularPolicy
from src.master_mfg.envs.initial import InitialDistributionSet
from src.master_mfg.envs.models import EnvModel
from src.master_mfg.exact.dynamic_programming import (
    FrozenMdp,
    evaluate_policy_tree,
    policy_tables,
)
from src.master_mfg.exact.exploitability import exploitability
from src.master_mfg.meanfield.flow import induced_flow
from src.master_mfg.noise.processes import CommonNoisePath, NoiseTree
from src.master_mfg.solvers.trace import SolverTrace, TraceRecord

logger = logging.getLogger(__name__)


def _softmax_policy(
    accumulated: list[npt.NDArray[np.float64]], tree: NoiseTree | None
) -> MasterPolicy:
    # τ で割ってから累積するので softmax の温度は 1
    if tree is None:
        return TabularPolicy.softmax(accumulated[0], 1.0)
    tables = [TabularPolicy.softmax(values, 1.0).table for values in accumulated]
    return HistoryTabularPolicy.from_paths(tables, tree.paths)


def run_omd(
    env: EnvModel,
    mu0: npt.ArrayLike,
    iterations: int,
    tau: float,
    paths: Sequence[CommonNoisePath] | None = None,
    mu0_label: str = 'mu0',
) -> tuple[MasterPolicy, SolverTrace]:
    """古典 OMD を実行します。

    Args:
        env: 環境
        mu0: 初期分布
        iterations: 反復回数 K (≥ 0)。0 なら一様方策を返します。
        tau: 温度 τ (> 0)
        paths: 同じ初期値 ξ₀ を持つ共通ノイズ経路(ノイズなしは None)
        mu0_label: 初期分布のラベル

    Returns:
        tuple: softmax(q̄) の方策と反復トレース。ノイズなしは TabularPolicy、
            共通ノイズ下は履歴で索引付けた HistoryTabularPolicy です。
    """
    if iterations < 0:
        raise ValueError(f'反復回数は 0 以上である必要があります: {iterations}')
    if not tau > 0.0:
        raise ValueError(f'温度 τ は正である必要があります: {tau}')
    initial = np.asarray(mu0, dtype=np.float64)
    mu0_set = InitialDistributionSet(((mu0_label, initial),))
    tree = NoiseTree(tuple(paths)) if paths else None
    path_list: tuple[CommonNoisePath | None, ...] = (
        (None,) if tree is None else tree.paths
    )

    shape = (env.horizon + 1, env.n_states, env.n_actions)
    accumulated = [np.zeros(shape) for _ in path_list]
    policy = _softmax_policy(accumulated, tree)
    trace = SolverTrace('omd')

    for k in range(1, iterations + 1):
        started = time.perf_counter()
        flows = [
            induced_flow(env, policy, initial, path, mu0_label) for path in path_list
        ]
        mdps = [FrozenMdp.along(env, flow) for flow in flows]
        tables = [policy_tables(policy, flow) for flow in flows]
        for total, q in zip(
            accumulated, evaluate_policy_tree(mdps, tables, tree), strict=True
        ):
            total += q / tau
        policy = _softmax_policy(accumulated, tree)

        report = exploitability(
            env, policy, mu0_set, None if tree is None else tree.paths, iteration=k
        )
        trace.append(TraceRecord(k, report, time.perf_counter() - started))
        logger.info(
            'OMD iteration %d/%d: exploitability=%.6g', k, iterations, report.mean_gap
        )

    return policy, trace
