"""
実験設定モジュール。

このモジュールは、ドット区切りのキーを持つフラットな YAML 文書を
pydantic モデルで検証し、環境・初期分布集合・ノイズ経路を組み立てます。
検証は最初の違反で止めず、すべての違反をパス付きで集めて報告します。
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.master_mfg.config.settings import Settings
from src.master_mfg.core.errors import EnvConfigurationError, MasterMfgError
from src.master_mfg.envs.beach_bar import make_beach_bar
from src.master_mfg.envs.exploration import make_exploration
from src.master_mfg.envs.initial import (
    InitialDistributionSet,
    SetRole,
    make_initial_set,
    make_protocol_set,
)
from src.master_mfg.envs.linear_quadratic import make_linear_quadratic
from src.master_mfg.envs.models import EnvModel
from src.master_mfg.neural.network import OptimizerName
from src.master_mfg.neural.trainer import FlowMode, LearnerVariant, TrainConfig
from src.master_mfg.noise.processes import (
    CommonNoisePath,
    LqVariant,
    default_closure_window,
    lq_step_process,
    sample_closure_paths,
)

DEFAULT_SEEDS: tuple[int, ...] = (42, 3407, 303, 109, 312)

SolverKind = Literal[
    'fp', 'omd', 'master_omd_reference', 'explicit_sum_reference', 'master_omd_neural'
]

InitialSetKind = Literal[
    'protocol', 'fixed_points', 'gaussians', 'random_points', 'uniform'
]


@dataclass(frozen=True)
class ConfigViolation:
    """設定の違反 1 件。

    Attributes:
        path: ドット区切りのキー
        message: 違反の内容
    """

    path: str
    message: str

    def __str__(self) -> str:
        return f'{self.path}: {self.message}'


class ConfigValidationError(MasterMfgError, ValueError):
    """設定の検証エラー。すべての違反を保持します。"""

    def __init__(self, violations: list[ConfigViolation]) -> None:
        self.violations = violations
        lines = '\n'.join(f'  - {v}' for v in violations)
        super().__init__(f'設定に {len(violations)} 件の違反があります:\n{lines}')


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)


class EnvSection(_Section):
    """環境の設定。name に応じて該当するパラメータだけを使います。"""

    name: Literal['exploration', 'beach_bar', 'linear_quadratic'] = 'exploration'
    horizon: int = Field(default=30, ge=0)
    # exploration
    geometry: Literal['one_room', 'four_rooms'] = 'one_room'
    width: int = Field(default=11, ge=1)
    height: int = Field(default=11, ge=1)
    # beach_bar
    dimension: Literal['1d', '2d'] = '1d'
    size: int = Field(default=11, ge=1)
    closure_noise: bool = False
    # linear_quadratic
    L: int = Field(default=50, ge=1)
    M: int = Field(default=3, ge=1)
    sigma: float = Field(default=1.0, ge=0.0)
    q: float = 0.01
    kappa: float = 0.5
    c_term: float = 1.0
    delta: float = Field(default=1.0, gt=0.0)
    rho: float | None = Field(default=None, ge=0.0, le=1.0)
    noise_variant: Literal['none', 'xi1', 'xi2'] = 'none'

    def build(self) -> EnvModel:
        """環境を構築します。"""
        if self.name == 'exploration':
            return make_exploration(
                self.geometry, self.width, self.height, self.horizon
            )
        if self.name == 'beach_bar':
            return make_beach_bar(
                self.dimension, self.size, self.closure_noise, self.horizon
            )
        return make_linear_quadratic(
            L=self.L,
            M=self.M,
            sigma=self.sigma,
            q=self.q,
            kappa=self.kappa,
            c_term=self.c_term,
            delta=self.delta,
            rho=self.rho,
            noise_variant=self.noise_variant,
            horizon=self.horizon,
        )

    @property
    def noise_kind(self) -> str:
        """この環境が必要とするノイズの種類。"""
        if self.name == 'beach_bar' and self.closure_noise:
            return 'closure'
        if self.name == 'linear_quadratic' and self.noise_variant != 'none':
            return 'lq'
        return 'none'


class SolverSection(_Section):
    """ソルバーの設定。"""

    kind: SolverKind = 'master_omd_reference'
    iterations: int = Field(default=20, ge=0)
    tau: float | None = Field(default=None, gt=0.0)
    taus: tuple[float, ...] = ()
    use_cache: bool = True

    @property
    def effective_tau(self) -> float:
        """τ の実効値(未指定なら 50)。"""
        return 50.0 if self.tau is None else self.tau


class TrainSection(_Section):
    """ニューラル学習器の設定(反復数・τ・シードはソルバーと実行設定から)。"""

    episodes_per_iteration: int | None = Field(default=None, gt=0)
    max_steps: int = Field(default=30000, gt=0)
    gamma: float = Field(default=0.99, ge=0.0, le=1.0)
    exploration_fraction: float = Field(default=0.1, gt=0.0, le=1.0)
    epsilon_start: float = Field(default=1.0, ge=0.0, le=1.0)
    epsilon_end: float = Field(default=0.05, ge=0.0, le=1.0)
    batch_size: int = Field(default=32, gt=0)
    gradient_steps: int = Field(default=1, gt=0)
    update_period: int = Field(default=1, gt=0)
    target_sync_period: int = Field(default=4, gt=0)
    buffer_capacity: int = Field(default=30000, gt=0)
    learning_rate: float = Field(default=1e-4, gt=0.0)
    optimizer: OptimizerName = 'adam'
    hidden: tuple[int, ...] = (64, 64)
    variant: LearnerVariant = 'master'
    alpha: float = Field(default=1.0, ge=0.0)
    flow_mode: FlowMode = 'exact'
    n_agents: int = Field(default=500, gt=0)

    def to_train_config(
        self, iterations: int, tau: float, seed: int, **overrides: Any
    ) -> TrainConfig:
        """TrainConfig に変換します。"""
        values = self.model_dump() | overrides
        return TrainConfig(iterations=iterations, tau=tau, seed=seed, **values)


class InitialSetSection(_Section):
    """初期分布集合の設定。kind='protocol' は 5 要素の標準集合です。"""

    kind: InitialSetKind = 'protocol'
    count: int = Field(default=5, ge=1)
    seed: int = 0

    def build(self, env: EnvModel, role: SetRole) -> InitialDistributionSet:
        """初期分布集合を構築します。"""
        if self.kind == 'protocol':
            return make_protocol_set(env, role, self.seed)
        return make_initial_set(self.kind, self.count, env, self.seed, role)


class InitialSection(_Section):
    training: InitialSetSection = InitialSetSection()
    testing: InitialSetSection = InitialSetSection()


class NoiseSection(_Section):
    """共通ノイズ経路の設定。"""

    kind: Literal['none', 'closure', 'lq'] = 'none'
    paths: int = Field(default=3, ge=1)
    window_lo: int | None = Field(default=None, ge=0)
    window_hi: int | None = Field(default=None, ge=1)
    seed: int = 0
    lq_variants: tuple[LqVariant, ...] = ('xi1',)

    def build(self, horizon: int) -> list[CommonNoisePath] | None:
        """ノイズ経路を構築します(ノイズなしは None)。"""
        if self.kind == 'none':
            return None
        if self.kind == 'lq':
            return [lq_step_process(variant, horizon) for variant in self.lq_variants]
        window = self.window(horizon)
        return sample_closure_paths(horizon, window, self.paths, self.seed)

    def window(self, horizon: int) -> tuple[int, int]:
        """開閉切替ウィンドウ(未指定の端は既定値)。"""
        lo, hi = default_closure_window(horizon)
        return (
            lo if self.window_lo is None else self.window_lo,
            hi if self.window_hi is None else self.window_hi,
        )


class OutputSection(_Section):
    """出力の設定。directory 未指定なら出力ルート直下の name。"""

    name: str = 'experiment'
    directory: Path | None = None
    export_flows: bool = True
    export_policy: bool = False
    plot: bool = True
    checkpoint: bool = True

    def resolve(self, settings: Settings) -> Path:
        """出力ディレクトリを決定します。"""
        return self.directory or settings.output_root / self.name


class RunnerSection(_Section):
    """実行の設定。"""

    seeds: tuple[int, ...] = DEFAULT_SEEDS
    workers: int | None = Field(default=None, ge=1)
    evaluate_test_set: bool = True


class ExperimentConfig(_Section):
    """実験設定全体。"""

    env: EnvSection = EnvSection()
    solver: SolverSection = SolverSection()
    train: TrainSection = TrainSection()
    initial: InitialSection = InitialSection()
    noise: NoiseSection = NoiseSection()
    output: OutputSection = OutputSection()
    runner: RunnerSection = RunnerSection()


def unflatten(flat: dict[str, Any]) -> tuple[dict[str, Any], list[ConfigViolation]]:
    """ドット区切りのキーを入れ子の辞書に展開します。"""
    nested: dict[str, Any] = {}
    violations: list[ConfigViolation] = []
    for dotted, value in flat.items():
        key = str(dotted)
        if isinstance(value, dict):
            violations.append(
                ConfigViolation(key, 'ドット区切りのフラットなキーで指定してください')
            )
            continue
        parts = key.split('.')
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                violations.append(ConfigViolation(key, f'{part} は値として定義済みです'))
                break
            node = child
        else:
            if isinstance(node.get(parts[-1]), dict):
                violations.append(ConfigViolation(key, 'セクション名に値は指定できません'))
            else:
                node[parts[-1]] = value
    return nested, violations


def flatten(nested: dict[str, Any], prefix: str = '') -> dict[str, Any]:
    """入れ子の辞書をドット区切りのキーに平坦化します。"""
    flat: dict[str, Any] = {}
    for key, value in nested.items():
        dotted = f'{prefix}{key}'
        if isinstance(value, dict):
            flat.update(flatten(value, f'{dotted}.'))
        else:
            flat[dotted] = value
    return flat


def _cross_field_violations(config: ExperimentConfig) -> list[ConfigViolation]:
    violations = []
    env = config.env
    solver = config.solver
    if env.name == 'exploration' and env.geometry == 'four_rooms':
        for axis in ('width', 'height'):
            if getattr(env, axis) % 2 == 0:
                violations.append(
                    ConfigViolation(
                        f'env.{axis}', 'four_rooms では奇数である必要があります'
                    )
                )
    if solver.kind == 'fp' and (solver.tau is not None or solver.taus):
        violations.append(
            ConfigViolation('solver.tau', 'fp は温度 τ を使いません')
        )
    if solver.kind in ('fp', 'master_omd_reference', 'explicit_sum_reference') and (
        solver.iterations < 1
    ):
        violations.append(
            ConfigViolation('solver.iterations', f'{solver.kind} は 1 回以上の反復が必要です')
        )
    if any(t <= 0.0 for t in solver.taus):
        violations.append(ConfigViolation('solver.taus', 'τ は正である必要があります'))
    if config.noise.kind != env.noise_kind:
        violations.append(
            ConfigViolation(
                'noise.kind',
                f'環境 {env.name} には noise.kind={env.noise_kind} が必要です',
            )
        )
    if config.noise.kind == 'closure':
        lo, hi = config.noise.window(env.horizon)
        if not 0 <= lo < hi <= env.horizon:
            violations.append(
                ConfigViolation(
                    'noise.window_lo',
                    f'切替ウィンドウ ({lo}, {hi}) は 0 ≤ lo < hi ≤ {env.horizon} を'
                    '満たす必要があります',
                )
            )
    if config.train.epsilon_end > config.train.epsilon_start:
        violations.append(
            ConfigViolation('train.epsilon_end', 'epsilon_start 以下である必要があります')
        )
    if not config.runner.seeds:
        violations.append(ConfigViolation('runner.seeds', 'シードが空です'))
    if not violations:
        try:
            env.build()
        except EnvConfigurationError as e:
            violations.append(ConfigViolation('env', str(e)))
    return violations


def parse_config(text: str) -> ExperimentConfig:
    """設定文書を検証して ExperimentConfig を返します。

    Args:
        text: ドット区切りキーのフラットな YAML 文書

    Returns:
        ExperimentConfig: 既定値を補った設定

    Raises:
        ConfigValidationError: 違反が 1 件以上ある場合(すべての違反を含む)
        yaml.YAMLError: YAML として解析できない場合
    """
    document = yaml.safe_load(text) or {}
    if not isinstance(document, dict):
        raise ConfigValidationError(
            [ConfigViolation('<root>', 'キーと値の対応である必要があります')]
        )
    nested, violations = unflatten(document)
    try:
        config = ExperimentConfig.model_validate(nested)
    except ValidationError as e:
        for error in e.errors():
            path = '.'.join(str(part) for part in error['loc']) or '<root>'
            violations.append(ConfigViolation(path, error['msg']))
        raise ConfigValidationError(violations) from None
    violations.extend(_cross_field_violations(config))
    if violations:
        raise ConfigValidationError(violations)
    return config


def dump_config(config: ExperimentConfig) -> str:
    """キーをソートしたフラットな正準形の YAML を返します。"""
    flat = flatten(config.model_dump(mode='json'))
    return yaml.safe_dump(flat, sort_keys=True, allow_unicode=True)


class ExperimentLoader:
    """実験設定ローダークラス。

    YAML ファイルから実験設定を読み込み、検証済みの設定を提供します。

    Attributes:
        settings: アプリケーション設定
    """

    def __init__(self, settings: Settings | None = None) -> None:
        """初期化メソッド。

        Args:
            settings: アプリケーション設定。指定されない場合はデフォルト設定を使用。
        """
        from src.master_mfg.config.settings import get_settings

        self.settings = settings or get_settings()

    def load(self, file_path: Path | None = None) -> ExperimentConfig:
        """実験設定を読み込みます。

        Args:
            file_path: 設定ファイルのパス。指定されない場合は既定の設定を使用。

        Returns:
            ExperimentConfig: 検証済みの設定

        Raises:
            FileNotFoundError: ファイルが見つからない場合
            yaml.YAMLError: YAML の解析エラーが発生した場合
            ConfigValidationError: 設定に違反がある場合
        """
        path = file_path or self.settings.default_config_path

        try:
            with open(path, encoding='utf-8') as f:
                text = f.read()
        except FileNotFoundError:
            raise FileNotFoundError(f'実験設定が見つかりません: {path}') from None
        try:
            return parse_config(text)
        except yaml.YAMLError as e:
            raise yaml.YAMLError(f'実験設定の解析エラー: {e}') from e
