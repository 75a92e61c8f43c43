"""
ロギングユーティリティモジュール。

ライブラリ側のモジュールは `logging.getLogger(__name__)` だけを使います。
ハンドラはエントリーポイントが get_default_logger で一度だけ設定し、
パッケージのルートロガー `src.master_mfg` に集約します。
"""

import logging
import sys
from datetime import date
from pathlib import Path

from src.master_mfg.config.settings import Settings, get_settings

PACKAGE_LOGGER_NAME = 'src.master_mfg'

LOG_FORMAT = '%(asctime)s [%(levelname)s] %(name)s: %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


def resolve_level(name: str) -> int:
    """レベル名を数値に変換します。未知の名前は INFO です。"""
    level = logging.getLevelName(name.upper())
    return level if isinstance(level, int) else logging.INFO


def log_file_for(settings: Settings, day: date | None = None) -> Path:
    """日付ごとのログファイルのパス。"""
    day = day or date.today()
    return settings.log_dir / f'master_mfg_{day.isoformat()}.log'


def setup_logger(
    name: str,
    level: int = logging.INFO,
    log_file: Path | None = None,
    log_to_console: bool = True,
) -> logging.Logger:
    """ロガーにハンドラを設定します。

    既存のハンドラは閉じてから置き換えます。コンソール出力は標準エラーに
    書きます(check-theorem1 は標準出力に結果を出すため)。

    Args:
        name: ロガー名
        level: ログレベル
        log_file: ログファイルのパス。None ならファイルに出力しません。
        log_to_console: 標準エラーに出力するかどうか

    Returns:
        logging.Logger: 設定済みのロガー
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)
    logger.propagate = False
    for handler in logger.handlers[:]:
        logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)
    handlers: list[logging.Handler] = []
    if log_to_console:
        handlers.append(logging.StreamHandler(sys.stderr))
    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))
    for handler in handlers:
        handler.setFormatter(formatter)
        logger.addHandler(handler)
    return logger


def get_default_logger(
    settings: Settings | None = None, log_file: Path | None = None
) -> logging.Logger:
    """パッケージのルートロガーを設定から構成します。

    Args:
        settings: アプリケーション設定。指定されない場合はデフォルト設定を使用。
        log_file: ログファイルのパス。指定されない場合は日付ごとのファイル。

    Returns:
        logging.Logger: `src.master_mfg` ロガー
    """
    settings = settings or get_settings()
    return setup_logger(
        PACKAGE_LOGGER_NAME,
        level=resolve_level(settings.log_level),
        log_file=log_file or log_file_for(settings),
    )
