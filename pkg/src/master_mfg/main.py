#!/usr/bin/env python
"""
平均場ゲーム実験のエントリーポイント。

このスクリプトは、設定ファイルに従って環境を構築し、ソルバーや学習器を
シードごとに実行して exploitability の推移、フロー、図を書き出します。

動詞:
    run            実験を実行します(--taus で τ のスイープ)
    check-theorem1 Munchausen 形式と明示和形式の一致を検証します
    adhoc          学習済みチェックポイントで途中合流シナリオを評価します
    sweep-buffer   リプレイバッファ容量ごとに学習を繰り返します
    sweep-arch     隠れ層の幅ごとに学習を繰り返します

終了コード: 0 成功、1 設定・引数の不正、2 実行時エラー
"""

import argparse
import logging
import sys
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NoReturn

import numpy as np
import yaml

from src.master_mfg.config.experiment import (
    ConfigValidationError,
    ConfigViolation,
    ExperimentConfig,
    ExperimentLoader,
    dump_config,
)
from src.master_mfg.config.settings import Settings, get_settings
from src.master_mfg.core.errors import MasterMfgError
from src.master_mfg.envs.initial import (
    InitialDistributionSet,
    InitialKind,
    inject_adhoc_team,
    make_initial_set,
)
from src.master_mfg.envs.models import EnvModel
from src.master_mfg.exact.exploitability import (
    PolicySource,
    evaluation_groups,
    evaluation_pairs,
    exploitability,
    group_label,
    resolve_policy,
)
from src.master_mfg.meanfield.flow import (
    MeanFieldFlow,
    continue_flow,
    export_flow_csv,
    induced_flow,
)
from src.master_mfg.neural.encoding import InputEncoder
from src.master_mfg.neural.network import MlpQNetwork
from src.master_mfg.neural.fictitious_play import train_neural_fp
from src.master_mfg.neural.trainer import NeuralMasterPolicy, train_master_omd
from src.master_mfg.noise.processes import CommonNoisePath, dump_paths_csv
from src.master_mfg.solvers.fictitious_play import run_fp
from src.master_mfg.solvers.lineage import (
    explicit_sum_omd_reference,
    master_omd_reference,
    theorem1_residual,
)
from src.master_mfg.solvers.omd import run_omd
from src.master_mfg.solvers.trace import SolverTrace
from src.master_mfg.utils.csv_io import (
    EXPLOITABILITY_COLUMNS,
    SUMMARY_COLUMNS,
    export_policy_csv,
    summarize_runs,
    write_rows,
)
from src.master_mfg.utils.logging import get_default_logger
from src.master_mfg.utils.plotting import plot_exploitability

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

# 定理の一致を合格とみなす残差
THEOREM1_TOLERANCE: float = 1e-8


class _ArgumentParser(argparse.ArgumentParser):
    """引数エラーを終了コード 1 で報告するパーサー。"""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f'{self.prog}: error: {message}\n')


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(',') if part.strip()]


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(',') if part.strip()]


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    """コマンドライン引数を解析します。

    Returns:
        argparse.Namespace: 解析された引数
    """
    parser = _ArgumentParser(
        prog='master-mfg', description='平均場ゲームのマスター方策学習ラボ'
    )
    verbs = parser.add_subparsers(dest='verb', required=True)

    run = verbs.add_parser('run', help='実験を実行します')
    run.add_argument('config', type=Path, help='実験設定ファイル')
    run.add_argument('--taus', type=_float_list, help='τ のスイープ(例: 1,10,50)')

    check = verbs.add_parser('check-theorem1', help='Munchausen 形式の一致を検証します')
    check.add_argument('config', type=Path, help='実験設定ファイル')

    adhoc = verbs.add_parser('adhoc', help='途中合流シナリオを評価します')
    adhoc.add_argument('config', type=Path, help='実験設定ファイル')
    adhoc.add_argument('--checkpoint', type=Path, required=True, help='Q ネットワーク')
    adhoc.add_argument('--join-step', type=int, required=True, help='合流する時刻')
    adhoc.add_argument(
        '--fraction', type=float, required=True, help='合流後の新規エージェントの割合'
    )
    adhoc.add_argument(
        '--newcomers',
        choices=('fixed_points', 'gaussians', 'random_points', 'uniform'),
        default='random_points',
        help='新規エージェントの初期分布の種類',
    )
    adhoc.add_argument('--seed', type=int, default=0, help='新規エージェント分布のシード')

    sweep = verbs.add_parser('sweep-buffer', help='バッファ容量ごとに学習します')
    sweep.add_argument('config', type=Path, help='実験設定ファイル')
    sweep.add_argument(
        '--capacities', type=_int_list, required=True, help='容量の一覧(例: 1000,30000)'
    )

    arch = verbs.add_parser('sweep-arch', help='隠れ層の幅ごとに学習します')
    arch.add_argument('config', type=Path, help='実験設定ファイル')
    arch.add_argument(
        '--widths', type=_int_list, required=True, help='幅の一覧(例: 64,128,256)'
    )
    return parser.parse_args(argv)


@dataclass
class Workspace:
    """設定から構築した実行対象。"""

    config: ExperimentConfig
    settings: Settings
    env: EnvModel
    training: InitialDistributionSet
    testing: InitialDistributionSet
    paths: list[CommonNoisePath] | None
    output_dir: Path
    workers: int

    @classmethod
    def build(cls, config: ExperimentConfig, settings: Settings) -> 'Workspace':
        env = config.env.build()
        return cls(
            config=config,
            settings=settings,
            env=env,
            training=config.initial.training.build(env, 'training'),
            testing=config.initial.testing.build(env, 'testing'),
            paths=config.noise.build(env.horizon),
            output_dir=config.output.resolve(settings),
            workers=config.runner.workers or settings.workers,
        )


@dataclass
class RunResult:
    """1 シード分の結果。"""

    seed: int
    policy: PolicySource
    trace: SolverTrace
    test_rows: list[dict[str, Any]] = field(default_factory=list)


def solve(
    ws: Workspace, seed: int, tau: float, **train_overrides: Any
) -> tuple[PolicySource, SolverTrace]:
    """設定されたソルバーを 1 シード分実行します。"""
    solver = ws.config.solver
    kind = solver.kind
    iterations = solver.iterations
    if kind == 'fp':
        return run_fp(ws.env, ws.training, iterations, ws.paths, ws.workers)
    if kind == 'omd':
        policies: dict[tuple[str, str], Any] = {}
        traces = []
        for label, mu0, tree in evaluation_groups(ws.env, ws.training, ws.paths):
            group_paths = None if tree is None else tree.paths
            policy, trace = run_omd(ws.env, mu0, iterations, tau, group_paths, label)
            policies[(label, group_label(tree))] = policy
            traces.append(trace)
        return policies, SolverTrace.merge('omd', traces)
    if kind in ('master_omd_reference', 'explicit_sum_reference'):
        reference = (
            master_omd_reference
            if kind == 'master_omd_reference'
            else explicit_sum_omd_reference
        )
        return reference(
            ws.env,
            ws.training,
            ws.paths,
            iterations,
            tau,
            ws.settings,
            solver.use_cache,
            ws.workers,
        )
    train_config = ws.config.train.to_train_config(
        iterations, tau, seed, **train_overrides
    )
    if train_config.fictitious_play:
        fp_policy, trace = train_neural_fp(ws.env, ws.training, ws.paths, train_config)
        return fp_policy.mixtures(ws.training, ws.paths), trace
    return train_master_omd(ws.env, ws.training, ws.paths, train_config)


def _stamp(rows: list[dict[str, Any]], seed: int) -> list[dict[str, Any]]:
    return [row | {'seed': seed} for row in rows]


def _export_run(ws: Workspace, result: RunResult, out_dir: Path) -> None:
    output = ws.config.output
    if isinstance(result.policy, NeuralMasterPolicy) and output.checkpoint:
        result.policy.net.save(out_dir / 'checkpoints' / f'seed_{result.seed}.qnet')
    if not (output.export_flows or output.export_policy):
        return
    for label, mu0, tree in evaluation_groups(ws.env, ws.training, ws.paths):
        policy = resolve_policy(result.policy, (label, group_label(tree)))
        for path in (None,) if tree is None else tree.paths:
            flow = induced_flow(ws.env, policy, mu0, path, label)
            stem = f'seed_{result.seed}/{label}__{flow.noise_label}.csv'
            if output.export_flows:
                export_flow_csv(flow, out_dir / 'flows' / stem)
            if output.export_policy:
                export_policy_csv(
                    policy, flow, ws.env.action_space.names, out_dir / 'policies' / stem
                )


def _evaluate_test_set(ws: Workspace, result: RunResult) -> None:
    if not ws.config.runner.evaluate_test_set:
        return
    if isinstance(result.policy, dict):
        # μ₀ ごとの方策は評価用の μ₀ では定義されない
        logger.warning(
            '%s の方策は学習用 μ₀ ごとに定義されるため評価用集合では評価しません',
            ws.config.solver.kind,
        )
        return
    iteration = result.trace.iterations[-1] if len(result.trace) else 0
    report = exploitability(
        ws.env,
        result.policy,
        ws.testing,
        ws.paths,
        iteration=iteration,
        seed=result.seed,
        workers=ws.workers,
    )
    result.test_rows = _stamp(report.rows(), result.seed)


def run_series(
    ws: Workspace, out_dir: Path, tau: float, **train_overrides: Any
) -> list[dict[str, Any]]:
    """全シードを実行して CSV を書き出し、反復ごとの要約を返します。"""
    rows: list[dict[str, Any]] = []
    trace_rows: list[dict[str, Any]] = []
    test_rows: list[dict[str, Any]] = []
    for seed in ws.config.runner.seeds:
        logger.info('seed=%d tau=%s を実行します', seed, tau)
        policy, trace = solve(ws, seed, tau, **train_overrides)
        result = RunResult(seed, policy, trace)
        stamped = _stamp(trace.rows(), seed)
        rows.extend(stamped)
        trace_rows.extend(stamped)
        _evaluate_test_set(ws, result)
        test_rows.extend(result.test_rows)
        _export_run(ws, result, out_dir)

    summary = summarize_runs(rows)
    write_rows(out_dir / 'exploitability.csv', EXPLOITABILITY_COLUMNS, rows)
    write_rows(out_dir / 'summary.csv', SUMMARY_COLUMNS, summary)
    write_rows(out_dir / 'trace.csv', SolverTrace.columns(), trace_rows)
    if test_rows:
        write_rows(
            out_dir / 'exploitability_test.csv', EXPLOITABILITY_COLUMNS, test_rows
        )
    (out_dir / 'config.yaml').write_text(dump_config(ws.config), encoding='utf-8')
    if ws.paths:
        dump_paths_csv(ws.paths, out_dir / 'noise_paths.csv')
    return summary


def _plot(
    ws: Workspace, curves: dict[str, list[dict[str, Any]]], out_dir: Path
) -> None:
    if ws.config.output.plot and any(curves.values()):
        plot_exploitability(
            curves, out_dir / 'exploitability.svg', title=ws.config.solver.kind
        )


def run_experiment(
    config: ExperimentConfig,
    settings: Settings,
    taus: Sequence[float] | None = None,
) -> int:
    """実験を実行して成果物を書き出します。

    Args:
        config: 実験設定
        settings: アプリケーション設定
        taus: τ のスイープ。指定時は τ ごとにサブディレクトリを作ります。

    Returns:
        int: 終了コード
    """
    ws = Workspace.build(config, settings)
    sweep = list(taus or config.solver.taus)
    curves: dict[str, list[dict[str, Any]]] = {}
    if sweep:
        if config.solver.kind == 'fp':
            raise ConfigValidationError(
                [ConfigViolation('solver.taus', 'fp は温度 τ を使いません')]
            )
        for tau in sweep:
            curves[f'tau={tau!r}'] = run_series(ws, ws.output_dir / f'tau_{tau!r}', tau)
    else:
        curves[config.solver.kind] = run_series(
            ws, ws.output_dir, config.solver.effective_tau
        )
    _plot(ws, curves, ws.output_dir)
    logger.info('成果物を %s に書き出しました', ws.output_dir)
    return EXIT_OK


def run_theorem1_check(config: ExperimentConfig, settings: Settings) -> int:
    """Munchausen 形式と明示和形式の方策の残差を計算して書き出します。"""
    ws = Workspace.build(config, settings)
    tau = config.solver.effective_tau
    iterations = config.solver.iterations
    residual = theorem1_residual(
        ws.env, ws.training, ws.paths, iterations, tau, settings
    )
    passed = residual <= THEOREM1_TOLERANCE
    write_rows(
        ws.output_dir / 'theorem1.csv',
        ('iterations', 'tau', 'residual', 'passed'),
        [
            {
                'iterations': iterations,
                'tau': tau,
                'residual': residual,
                'passed': passed,
            }
        ],
    )
    print(f'max residual = {residual!r}')
    if not passed:
        logger.error('残差 %.3g が許容値 %.0e を超えました', residual, THEOREM1_TOLERANCE)
        return EXIT_RUNTIME
    return EXIT_OK


def adhoc_flow(
    env: EnvModel,
    policy: NeuralMasterPolicy,
    mu0: np.ndarray,
    newcomers: np.ndarray,
    join_step: int,
    fraction: float,
    path: CommonNoisePath | None = None,
    label: str = 'mu0',
) -> tuple[MeanFieldFlow, MeanFieldFlow]:
    """時刻 join_step の直後に新規エージェントが合流したフローを計算します。

    合流は μ_{join_step+1} に適用し、以降は同じ方策で進めます。

    Returns:
        tuple: (合流なしのフロー, 合流ありのフロー)
    """
    if not 0 <= join_step < env.horizon:
        raise ValueError(
            f'join_step は [0, {env.horizon}) の範囲である必要があります: {join_step}'
        )
    base = induced_flow(env, policy, mu0, path, label)
    joined = inject_adhoc_team(base[join_step + 1], newcomers, fraction)
    tail = continue_flow(env, policy, joined, join_step + 1, path)
    distributions = np.concatenate(
        [base.distributions[: join_step + 1], np.stack(tail)]
    )
    distributions.flags.writeable = False
    perturbed = MeanFieldFlow(distributions, label, path, 'adhoc')
    return base, perturbed


def run_adhoc_eval(
    config: ExperimentConfig,
    settings: Settings,
    checkpoint: Path,
    join_step: int,
    fraction: float,
    newcomers_kind: InitialKind = 'random_points',
    seed: int = 0,
) -> int:
    """学習済みの方策で途中合流シナリオのフローを書き出します。"""
    violations = []
    if not 0 <= join_step < config.env.horizon:
        violations.append(
            ConfigViolation(
                'join_step', f'[0, {config.env.horizon}) の範囲である必要があります'
            )
        )
    if not 0.0 < fraction < 1.0:
        violations.append(
            ConfigViolation('fraction', '(0, 1) の範囲である必要があります')
        )
    if violations:
        raise ConfigValidationError(violations)
    ws = Workspace.build(config, settings)
    encoder = InputEncoder.for_env(ws.env, config.train.variant == 'master')
    policy = NeuralMasterPolicy(
        MlpQNetwork.load(checkpoint), encoder, config.solver.effective_tau
    )
    if not policy.population_dependent:
        logger.warning(
            '集団に依存しない方策では合流後も行動が変わらないため、'
            'このシナリオは何も検証しません'
        )
    newcomers = make_initial_set(newcomers_kind, 1, ws.env, seed).members[0][1]
    out_dir = ws.output_dir / 'adhoc'
    for label, mu0, path in evaluation_pairs(ws.env, ws.training, ws.paths):
        base, perturbed = adhoc_flow(
            ws.env, policy, mu0, newcomers, join_step, fraction, path, label
        )
        stem = f'{label}__{base.noise_label}'
        export_flow_csv(base, out_dir / f'{stem}__base.csv')
        export_flow_csv(perturbed, out_dir / f'{stem}__joined.csv')
    logger.info('合流シナリオのフローを %s に書き出しました', out_dir)
    return EXIT_OK


def _require_neural(config: ExperimentConfig, verb: str) -> None:
    if config.solver.kind != 'master_omd_neural':
        raise ConfigValidationError(
            [
                ConfigViolation(
                    'solver.kind', f'{verb} には master_omd_neural が必要です'
                )
            ]
        )


def run_buffer_sweep(
    config: ExperimentConfig, settings: Settings, capacities: Sequence[int]
) -> int:
    """バッファ容量ごとにニューラル学習器を実行します。"""
    _require_neural(config, 'sweep-buffer')
    if not capacities or any(c < 1 for c in capacities):
        raise ConfigValidationError(
            [ConfigViolation('capacities', '容量は 1 以上である必要があります')]
        )
    ws = Workspace.build(config, settings)
    curves = {
        f'buffer={capacity}': run_series(
            ws,
            ws.output_dir / f'buffer_{capacity}',
            config.solver.effective_tau,
            buffer_capacity=capacity,
        )
        for capacity in capacities
    }
    _plot(ws, curves, ws.output_dir)
    return EXIT_OK


def run_arch_sweep(
    config: ExperimentConfig, settings: Settings, widths: Sequence[int]
) -> int:
    """隠れ層の幅ごとにニューラル学習器を実行します。

    層の数は設定の train.hidden を保ち、各層の幅だけを置き換えます。
    """
    _require_neural(config, 'sweep-arch')
    if not widths or any(w < 1 for w in widths):
        raise ConfigValidationError(
            [ConfigViolation('widths', '幅は 1 以上である必要があります')]
        )
    depth = max(1, len(config.train.hidden))
    ws = Workspace.build(config, settings)
    curves = {
        f'hidden={width}': run_series(
            ws,
            ws.output_dir / f'hidden_{width}',
            config.solver.effective_tau,
            hidden=(width,) * depth,
        )
        for width in widths
    }
    _plot(ws, curves, ws.output_dir)
    return EXIT_OK


def dispatch(args: argparse.Namespace, settings: Settings) -> int:
    """動詞に応じて処理を実行します。"""
    config = ExperimentLoader(settings).load(args.config)
    if args.verb == 'run':
        return run_experiment(config, settings, args.taus)
    if args.verb == 'check-theorem1':
        return run_theorem1_check(config, settings)
    if args.verb == 'adhoc':
        return run_adhoc_eval(
            config,
            settings,
            args.checkpoint,
            args.join_step,
            args.fraction,
            args.newcomers,
            args.seed,
        )
    if args.verb == 'sweep-arch':
        return run_arch_sweep(config, settings, args.widths)
    return run_buffer_sweep(config, settings, args.capacities)


def main(argv: Sequence[str] | None = None) -> int:
    """メイン関数。"""
    args = parse_args(argv)
    try:
        settings = get_settings()
    except ValueError as e:
        print(f'設定の読み込みに失敗しました: {e}', file=sys.stderr)
        return EXIT_VALIDATION
    run_logger = get_default_logger(settings)

    try:
        return dispatch(args, settings)
    except (ConfigValidationError, FileNotFoundError, yaml.YAMLError) as e:
        run_logger.error(f'設定エラー: {e}', exc_info=True)
        print(f'設定エラー: {e}', file=sys.stderr)
        return EXIT_VALIDATION
    except MasterMfgError as e:
        run_logger.error(f'実行エラー: {e}', exc_info=True)
        print(f'実行エラー: {e}', file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        run_logger.error(f'予期しないエラーが発生しました: {e}', exc_info=True)
        print(f'予期しないエラーが発生しました: {e}', file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
