"""
設定管理モジュール。

このモジュールは、アプリケーション全体の設定を管理します。
環境変数(.env を含む)からの読み込みや、デフォルト値の設定を行います。
"""

from pathlib import Path

from pydantic import BaseModel, Field

DEFAULT_CONFIG_PATH = Path(__file__).parent.parent / 'data' / 'default_experiment.yaml'


class Settings(BaseModel):
    """アプリケーション設定クラス。

    環境変数から設定を読み込み、デフォルト値を提供します。

    Attributes:
        output_root: 実験成果物(CSV、SVG、チェックポイント)の出力ルート
        log_level: ログレベル名
        log_dir: ログファイルの出力ディレクトリ
        lineage_cache_limit: 系譜厳密評価のキャッシュ推定エントリ数の上限
        workers: (μ₀, ノイズ経路) 評価を並列化するワーカー数
        default_config_path: 既定の実験設定ファイルのパス
    """

    output_root: Path = Path('outputs')
    log_level: str = 'INFO'
    log_dir: Path = Path('logs')
    lineage_cache_limit: int = Field(10_000_000, gt=0)
    workers: int = Field(1, ge=1)
    default_config_path: Path = DEFAULT_CONFIG_PATH


def get_settings() -> Settings:
    """設定インスタンスを取得します。

    環境変数から設定を読み込みます。

    Returns:
        Settings: 設定インスタンス

    Raises:
        ValueError: 環境変数の値が不正な場合
    """
    try:
        # 環境変数から読み込み
        import os

        from dotenv import load_dotenv

        load_dotenv()

        output_root = os.getenv('MASTER_MFG_OUTPUT_ROOT', 'outputs')
        log_level = os.getenv('MASTER_MFG_LOG_LEVEL', 'INFO')
        log_dir = os.getenv('MASTER_MFG_LOG_DIR', 'logs')
        lineage_cache_limit = int(
            os.getenv('MASTER_MFG_LINEAGE_CACHE_LIMIT', '10000000')
        )
        workers = int(os.getenv('MASTER_MFG_WORKERS', '1'))
        default_config_path = os.getenv(
            'MASTER_MFG_DEFAULT_CONFIG', str(DEFAULT_CONFIG_PATH)
        )

        return Settings(
            output_root=Path(output_root),
            log_level=log_level.upper(),
            log_dir=Path(log_dir),
            lineage_cache_limit=lineage_cache_limit,
            workers=workers,
            default_config_path=Path(default_config_path),
        )
    except Exception as e:
        raise ValueError(f'設定の読み込みに失敗しました: {e}') from e
