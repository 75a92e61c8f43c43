"""
系譜厳密 Master OMD モジュール。

このモジュールは、集団依存方策 π^k(·|n, x, μ) を表形式で厳密に評価する
参照実装を提供します。π^k は Q̃^k/τ の softmax で、Q̃^k は π^{k-1} が生成する
フローに沿って

    Q̃^k_n(x, μ, a) = r_n(x, a, μ) + τ ln π^{k-1}_n(a|x, μ)
        + Σ_{x'} p_n(x'|x, a, μ) Σ_{a'} π^{k-1}_{n+1}(a'|x', μ')
          (Q̃^k_{n+1}(x', μ', a') - τ ln π^{k-1}_{n+1}(a'|x', μ'))

で計算します(μ' は μ を π^{k-1} で 1 ステップ進めた分布)。
以前の反復のフロー上にない分布での π^{k-1} は、その (n, μ) から継続フローを
再帰的に生成して評価し、(反復, 時刻, 分布キー, ノイズ履歴) でメモ化します。
共通ノイズ下では、設定された経路を等確率の経験分布とみなしたノイズ木の上で
継続価値の期待値を取り、方策は開示済みの履歴だけに依存します。

比較用に、Q^i を明示的に合計する π^k = softmax(Σ_{i≤k} Q^i/τ) も実装し、
両者が生成フロー上で一致することを確かめる残差を計算します。
"""

import logging
import math
import sys
import threading
import time
from abc import ABC, abstractmethod
from collections.abc import Sequence
from typing import Literal

import numpy as np
import numpy.typing as npt

from src.master_mfg.config.settings import Settings, get_settings
from src.master_mfg.core.errors import LineageBudgetError, NoiseError
from src.master_mfg.core.numerics import (
    DistributionKey,
    clipped_log,
    distribution_key,
    softmax_policy,
)
from src.master_mfg.core.policy import KeyedTabularPolicy, noise_key_of
from src.master_mfg.core.tabular import TabularQ
from src.master_mfg.envs.initial import InitialDistributionSet
from src.master_mfg.envs.models import EnvModel
from src.master_mfg.exact.exploitability import evaluation_pairs, exploitability
from src.master_mfg.meanfield.flow import induced_flow, propagate
from src.master_mfg.noise.processes import (
    CommonNoisePath,
    NoiseHistory,
    NoiseObservation,
    NoiseTree,
)
from src.master_mfg.solvers.trace import SolverTrace, TraceRecord

logger = logging.getLogger(__name__)

# 生成フローが一致しているとみなす許容差
FLOW_AGREEMENT_TOLERANCE: float = 1e-9

# 再帰 1 段あたりのスタックフレーム数の見積もり
_FRAMES_PER_LEVEL: int = 4
_FRAME_MARGIN: int = 100

CacheKey = tuple[str, int, int, DistributionKey, NoiseHistory | None]
LineageMode = Literal['munchausen', 'explicit_sum']


class LineageCache:
    """挿入のみのスレッドセーフなメモ化キャッシュ。

    一度書き込んだ値は変更しません。enabled=False では何も保持せず、
    すべての参照がミスになります。
    """

    def __init__(self, enabled: bool = True) -> None:
        self.enabled = enabled
        self._entries: dict[CacheKey, npt.NDArray[np.float64]] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key: CacheKey) -> npt.NDArray[np.float64] | None:
        """値を返します。なければ None。"""
        with self._lock:
            value = self._entries.get(key)
            if value is None:
                self.misses += 1
            else:
                self.hits += 1
            return value

    def put(
        self, key: CacheKey, value: npt.NDArray[np.float64]
    ) -> npt.NDArray[np.float64]:
        """値を読み取り専用にして格納し、格納済みの値を返します。"""
        value.flags.writeable = False
        if not self.enabled:
            return value
        with self._lock:
            return self._entries.setdefault(key, value)

    def items(
        self, kind: str, level: int
    ) -> list[tuple[CacheKey, npt.NDArray[np.float64]]]:
        """種類と反復を指定してエントリを列挙します。"""
        with self._lock:
            return [
                (key, value)
                for key, value in self._entries.items()
                if key[0] == kind and key[1] == level
            ]

    def __len__(self) -> int:
        return len(self._entries)

    def stats(self) -> dict[str, int]:
        """エントリ数・ヒット数・ミス数。"""
        return {'entries': len(self), 'hits': self.hits, 'misses': self.misses}


class _LineageEngine(ABC):
    """ノイズ木の上で反復 j の方策を再帰的に評価するエンジン。

    共通ノイズがある場合、値は開示済みの履歴 Ξ_n をキーに持ち、時刻 n+1 の
    継続価値は Ξ_n を共有する経路の子 Ξ_{n+1} についての期待値です。
    """

    score_kind: str = 'scores'

    def __init__(
        self,
        env: EnvModel,
        tau: float,
        tree: NoiseTree | None,
        cache: LineageCache,
    ) -> None:
        if not tau > 0.0:
            raise ValueError(f'温度 τ は正である必要があります: {tau}')
        self.env = env
        self.tau = tau
        self.tree = tree
        self.cache = cache
        self._histories: frozenset[NoiseHistory] = frozenset(
            path.history(n)
            for path in (tree.paths if tree is not None else ())
            for n in range(path.horizon + 1)
        )
        self._uniform = np.full((env.n_states, env.n_actions), 1.0 / env.n_actions)
        self._uniform.flags.writeable = False

    def check_history(self, n: int, history: NoiseHistory | None) -> None:
        """履歴が時刻 n のノイズ木の節点であることを確かめます。

        Raises:
            NoiseError: 木に無い履歴、またはノイズの有無が一致しない場合
        """
        if self.tree is None:
            if history is not None:
                raise NoiseError('ノイズなしのエンジンにノイズ履歴が渡されました')
            return
        if history is None or len(history) != n + 1:
            raise NoiseError(f'時刻 {n} のノイズ履歴がありません: {history!r}')
        if history not in self._histories:
            raise NoiseError(f'ノイズ履歴 {history!r} はノイズ木にありません')

    def _xi(self, history: NoiseHistory | None) -> float | None:
        return None if history is None else history[-1]

    def _children(
        self, history: NoiseHistory | None
    ) -> list[tuple[NoiseHistory | None, float]]:
        if self.tree is None or history is None:
            return [(None, 1.0)]
        return [(child, weight) for child, weight in self.tree.branches(history)]

    def _memo(
        self,
        kind: str,
        level: int,
        n: int,
        mu: npt.NDArray[np.float64],
        history: NoiseHistory | None,
    ) -> tuple[CacheKey, npt.NDArray[np.float64] | None]:
        key = (kind, level, n, distribution_key(mu, n), history)
        return key, self.cache.get(key)

    @abstractmethod
    def scores(
        self,
        level: int,
        n: int,
        mu: npt.NDArray[np.float64],
        history: NoiseHistory | None,
    ) -> npt.NDArray[np.float64]:
        """π^level = softmax(scores/τ) となる値表 (|𝒳|, |𝒜|)。level ≥ 1。"""

    def policy(
        self,
        level: int,
        n: int,
        mu: npt.NDArray[np.float64],
        history: NoiseHistory | None = None,
    ) -> npt.NDArray[np.float64]:
        """反復 level の方策 π^level_n(·|·, μ, Ξ_n) を返します。π⁰ は一様です。"""
        if level == 0:
            return self._uniform
        key, cached = self._memo('policy', level, n, mu, history)
        if cached is not None:
            return cached
        rows = softmax_policy(self.scores(level, n, mu, history), self.tau)
        return self.cache.put(key, rows)

    def successor(
        self,
        level: int,
        n: int,
        mu: npt.NDArray[np.float64],
        history: NoiseHistory | None = None,
    ) -> npt.NDArray[np.float64]:
        """μ を π^level で時刻 n から n+1 へ進めた継続フローの分布。"""
        key, cached = self._memo('flow', level, n, mu, history)
        if cached is not None:
            return cached
        rows = self.policy(level, n, mu, history)
        nxt = propagate(mu, rows, self.env, n, self._xi(history))
        return self.cache.put(key, nxt)

    def scores_table(self, level: int) -> TabularQ:
        """反復 level で評価済みの値表を TabularQ として取り出します。"""
        q = TabularQ(self.env.n_states, self.env.n_actions)
        for (_, _, n, key, history), value in self.cache.items(self.score_kind, level):
            q.store(n, key, history, value)
        return q


class MunchausenEngine(_LineageEngine):
    """Q̃^k を Munchausen 形式の後退再帰で評価するエンジン。"""

    score_kind = 'q_tilde'

    def q_tilde(
        self,
        level: int,
        n: int,
        mu: npt.NDArray[np.float64],
        history: NoiseHistory | None = None,
    ) -> npt.NDArray[np.float64]:
        """Q̃^level_n(·, μ, Ξ_n, ·) を返します。Q̃⁰ ≡ 0。"""
        if level == 0:
            return np.zeros((self.env.n_states, self.env.n_actions))
        key, cached = self._memo(self.score_kind, level, n, mu, history)
        if cached is not None:
            return cached

        xi = self._xi(history)
        previous = self.policy(level - 1, n, mu, history)
        values = self.env.reward_table(n, mu, xi) + self.tau * clipped_log(previous)
        if n < self.env.horizon:
            nxt = self.successor(level - 1, n, mu, history)
            soft_value = np.zeros(self.env.n_states)
            for child, weight in self._children(history):
                previous_next = self.policy(level - 1, n + 1, nxt, child)
                soft_value += weight * (
                    previous_next
                    * (
                        self.q_tilde(level, n + 1, nxt, child)
                        - self.tau * clipped_log(previous_next)
                    )
                ).sum(axis=1)
            kernel = self.env.transition_tensor(n, mu, xi)
            values = values + kernel @ soft_value
        return self.cache.put(key, values)

    def scores(
        self,
        level: int,
        n: int,
        mu: npt.NDArray[np.float64],
        history: NoiseHistory | None,
    ) -> npt.NDArray[np.float64]:
        return self.q_tilde(level, n, mu, history)


class ExplicitSumEngine(_LineageEngine):
    """π^k = softmax(Σ_{i≤k} Q^i/τ) を明示的な和で評価するエンジン。

    Q^i は π^{i-1} が μ から生成するフロー上での π^{i-1} の Q 関数です。
    """

    score_kind = 'q_sum'

    def q_iteration(
        self,
        level: int,
        n: int,
        mu: npt.NDArray[np.float64],
        history: NoiseHistory | None = None,
    ) -> npt.NDArray[np.float64]:
        """Q^level_n(·, μ, Ξ_n, ·) を返します。"""
        key, cached = self._memo('q', level, n, mu, history)
        if cached is not None:
            return cached
        xi = self._xi(history)
        values = self.env.reward_table(n, mu, xi)
        if n < self.env.horizon:
            nxt = self.successor(level - 1, n, mu, history)
            value_next = np.zeros(self.env.n_states)
            for child, weight in self._children(history):
                previous_next = self.policy(level - 1, n + 1, nxt, child)
                value_next += weight * (
                    previous_next * self.q_iteration(level, n + 1, nxt, child)
                ).sum(axis=1)
            kernel = self.env.transition_tensor(n, mu, xi)
            values = values + kernel @ value_next
        return self.cache.put(key, np.array(values, dtype=np.float64))

    def q_sum(
        self,
        level: int,
        n: int,
        mu: npt.NDArray[np.float64],
        history: NoiseHistory | None = None,
    ) -> npt.NDArray[np.float64]:
        """Σ_{i=1}^{level} Q^i_n(·, μ, Ξ_n, ·) を返します。"""
        if level == 0:
            return np.zeros((self.env.n_states, self.env.n_actions))
        key, cached = self._memo(self.score_kind, level, n, mu, history)
        if cached is not None:
            return cached
        total = self.q_sum(level - 1, n, mu, history) + self.q_iteration(
            level, n, mu, history
        )
        return self.cache.put(key, total)

    def scores(
        self,
        level: int,
        n: int,
        mu: npt.NDArray[np.float64],
        history: NoiseHistory | None,
    ) -> npt.NDArray[np.float64]:
        return self.q_sum(level, n, mu, history)


class LineagePolicy:
    """系譜厳密に評価する集団依存方策 π^level。

    観測から開示済みの履歴 Ξ_n だけを取り出してエンジンに渡します。
    同じ履歴を共有する経路では、未来のノイズによらず同じ方策になります。
    """

    population_dependent = True

    def __init__(self, engine: _LineageEngine, level: int, tau: float) -> None:
        self.engine = engine
        self.level = level
        self.tau = tau

    def distribution(
        self,
        n: int,
        mu: npt.NDArray[np.float64],
        obs: NoiseObservation | None = None,
    ) -> npt.NDArray[np.float64]:
        history = noise_key_of(obs)
        self.engine.check_history(n, history)
        return self.engine.policy(self.level, n, mu, history)

    def at_level(self, level: int) -> 'LineagePolicy':
        """同じエンジンを共有する反復 level の方策を返します。"""
        return LineagePolicy(self.engine, level, self.tau)

    def freeze(self) -> KeyedTabularPolicy:
        """評価済みのキーだけを持つ表形式方策に書き出します。

        書き出した方策は未評価のキーで PolicyKeyMissError を送出します。
        """
        return KeyedTabularPolicy(self.engine.scores_table(self.level), self.tau)


def estimate_lineage_cost(roots: int, iterations: int, horizon: int) -> int:
    """系譜評価で生成されるキャッシュエントリ数を見積もります。

    反復 j の時刻 n で到達する分布は、反復番号が非増加な系列で数えられるため
    C(N_T + K, N_T) 程度になります。
    """
    return roots * (iterations + 1) * math.comb(horizon + iterations, horizon)


def check_lineage_budget(
    roots: int, iterations: int, horizon: int, limit: int
) -> int:
    """推定コストと再帰の深さを検査し、推定エントリ数を返します。

    Raises:
        LineageBudgetError: 推定エントリ数が上限を超える、または再帰が
            インタプリタの再帰上限に達する見込みの場合
    """
    estimated = estimate_lineage_cost(roots, iterations, horizon)
    logger.debug('系譜評価の推定エントリ数: %d (上限 %d)', estimated, limit)
    if estimated > limit:
        raise LineageBudgetError(
            estimated, limit, f'roots={roots}, K={iterations}, N_T={horizon}'
        )
    depth = _FRAMES_PER_LEVEL * (iterations + horizon) + _FRAME_MARGIN
    if depth > sys.getrecursionlimit():
        raise LineageBudgetError(
            estimated,
            limit,
            f'再帰の深さ {depth} が再帰上限 {sys.getrecursionlimit()} を超えます',
        )
    return estimated


def _build_policy(
    mode: LineageMode,
    env: EnvModel,
    paths: Sequence[CommonNoisePath] | None,
    tau: float,
    cache: LineageCache,
) -> LineagePolicy:
    engine_class = MunchausenEngine if mode == 'munchausen' else ExplicitSumEngine
    tree = NoiseTree(tuple(paths)) if paths else None
    return LineagePolicy(engine_class(env, tau, tree, cache), 0, tau)


def _run_reference(
    mode: LineageMode,
    env: EnvModel,
    mu0_set: InitialDistributionSet,
    paths: Sequence[CommonNoisePath] | None,
    iterations: int,
    tau: float,
    settings: Settings | None,
    use_cache: bool,
    workers: int,
) -> tuple[LineagePolicy, SolverTrace]:
    if iterations < 1:
        raise ValueError(f'反復回数は 1 以上である必要があります: {iterations}')
    settings = settings or get_settings()
    pairs = evaluation_pairs(env, mu0_set, paths)
    check_lineage_budget(
        len(pairs), iterations, env.horizon, settings.lineage_cache_limit
    )
    cache = LineageCache(enabled=use_cache)
    policy = _build_policy(mode, env, paths, tau, cache)
    trace = SolverTrace(f'lineage_{mode}')

    for k in range(1, iterations + 1):
        started = time.perf_counter()
        previous = policy.at_level(k - 1)
        current = policy.at_level(k)
        for label, mu0, path in pairs:
            # μ^k は π^{k-1} が生成するフロー。その上で π^k を評価する
            flow = induced_flow(env, previous, mu0, path, label)
            for n in range(env.horizon + 1):
                current.distribution(n, flow[n], flow.observation(n))
        report = exploitability(
            env, current, mu0_set, paths, iteration=k, workers=workers
        )
        trace.append(
            TraceRecord(k, report, time.perf_counter() - started, cache.stats())
        )
        logger.info(
            'lineage %s iteration %d/%d: exploitability=%.6g entries=%d',
            mode,
            k,
            iterations,
            report.mean_gap,
            len(cache),
        )
    return policy.at_level(iterations), trace


def master_omd_reference(
    env: EnvModel,
    mu0_set: InitialDistributionSet,
    paths: Sequence[CommonNoisePath] | None,
    iterations: int,
    tau: float,
    settings: Settings | None = None,
    use_cache: bool = True,
    workers: int = 1,
) -> tuple[LineagePolicy, SolverTrace]:
    """Munchausen 形式の系譜厳密 Master OMD を実行します。

    Args:
        env: 環境
        mu0_set: 初期分布集合
        paths: 共通ノイズ経路
        iterations: 反復回数 K (≥ 1)
        tau: 温度 τ
        settings: キャッシュ上限を読む設定
        use_cache: メモ化を使うかどうか(無効でも値は変わりません)
        workers: exploitability 評価の並列数

    Returns:
        tuple: 反復 K の方策 π^K と反復トレース

    Raises:
        LineageBudgetError: 推定コストが上限を超える場合
    """
    return _run_reference(
        'munchausen', env, mu0_set, paths, iterations, tau, settings, use_cache, workers
    )


def explicit_sum_omd_reference(
    env: EnvModel,
    mu0_set: InitialDistributionSet,
    paths: Sequence[CommonNoisePath] | None,
    iterations: int,
    tau: float,
    settings: Settings | None = None,
    use_cache: bool = True,
    workers: int = 1,
) -> tuple[LineagePolicy, SolverTrace]:
    """Q^i の明示的な和で方策を作る系譜厳密 OMD を実行します。"""
    return _run_reference(
        'explicit_sum',
        env,
        mu0_set,
        paths,
        iterations,
        tau,
        settings,
        use_cache,
        workers,
    )


def theorem1_residual(
    env: EnvModel,
    mu0_set: InitialDistributionSet,
    paths: Sequence[CommonNoisePath] | None,
    iterations: int,
    tau: float,
    settings: Settings | None = None,
) -> float:
    """Munchausen 形式と明示和形式の方策の最大差を返します。

    両者を同じ反復で並行に進め、各反復 k で π^{k-1} が生成するフロー上の
    全 (n, x) について ‖π_explicit - π_munchausen‖_∞ を取ります。
    生成フロー自体が食い違った場合は実装の不整合として 1.0 を返します。

    Raises:
        LineageBudgetError: 推定コストが上限を超える場合
    """
    if iterations < 1:
        raise ValueError(f'反復回数は 1 以上である必要があります: {iterations}')
    settings = settings or get_settings()
    pairs = evaluation_pairs(env, mu0_set, paths)
    # 2 つのエンジンがそれぞれキャッシュを持つ
    check_lineage_budget(
        2 * len(pairs), iterations, env.horizon, settings.lineage_cache_limit
    )
    munchausen = _build_policy('munchausen', env, paths, tau, LineageCache())
    explicit = _build_policy('explicit_sum', env, paths, tau, LineageCache())

    residual = 0.0
    for k in range(1, iterations + 1):
        for label, mu0, path in pairs:
            flow_m = induced_flow(env, munchausen.at_level(k - 1), mu0, path, label)
            flow_e = induced_flow(env, explicit.at_level(k - 1), mu0, path, label)
            divergence = float(
                np.abs(flow_m.distributions - flow_e.distributions).max()
            )
            if divergence > FLOW_AGREEMENT_TOLERANCE:
                worst = int(
                    np.abs(flow_m.distributions - flow_e.distributions)
                    .max(axis=1)
                    .argmax()
                )
                logger.error(
                    '生成フローが一致しません: k=%d, mu0=%s, noise=%s, n=%d, 差=%.3g',
                    k,
                    label,
                    flow_m.noise_label,
                    worst,
                    divergence,
                )
                return 1.0
            for n in range(env.horizon + 1):
                obs = flow_m.observation(n)
                gap = np.abs(
                    munchausen.at_level(k).distribution(n, flow_m[n], obs)
                    - explicit.at_level(k).distribution(n, flow_m[n], obs)
                ).max()
                residual = max(residual, float(gap))
        logger.debug('theorem1 residual after iteration %d: %.3g', k, residual)
    return residual
