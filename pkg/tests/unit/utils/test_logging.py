"""
ロギングユーティリティモジュールのテスト。
"""

import logging
from datetime import date
from pathlib import Path

from src.master_mfg.utils.logging import (
    PACKAGE_LOGGER_NAME,
    get_default_logger,
    log_file_for,
    resolve_level,
    setup_logger,
)
from tests.conftest import MockSettings


def _close(logger: logging.Logger) -> None:
    for handler in logger.handlers[:]:
        logger.removeHandler(handler)
        handler.close()


def test_resolve_level() -> None:
    """レベル名の変換のテスト。"""
    assert resolve_level('debug') == logging.DEBUG
    assert resolve_level('WARNING') == logging.WARNING
    assert resolve_level('verbose') == logging.INFO


def test_log_file_for(mock_settings: MockSettings) -> None:
    """日付ごとのログファイル名のテスト。"""
    path = log_file_for(mock_settings, date(2025, 1, 2))
    assert path == mock_settings.log_dir / 'master_mfg_2025-01-02.log'


def test_setup_logger_console_only() -> None:
    """コンソールのみのロガーのテスト。"""
    logger = setup_logger('src.master_mfg.test_console', level=logging.DEBUG)
    assert logger.level == logging.DEBUG
    assert not logger.propagate
    assert len(logger.handlers) == 1
    assert isinstance(logger.handlers[0], logging.StreamHandler)
    _close(logger)


def test_setup_logger_replaces_handlers(tmp_path: Path) -> None:
    """再設定で既存のハンドラが置き換わり、ファイルに書き出されることのテスト。"""
    log_file = tmp_path / 'nested' / 'test.log'
    name = 'src.master_mfg.test_file'
    setup_logger(name)
    logger = setup_logger(name, log_file=log_file, log_to_console=False)
    assert len(logger.handlers) == 1
    logger.info('テストメッセージ')
    for handler in logger.handlers:
        handler.flush()
    assert 'テストメッセージ' in log_file.read_text(encoding='utf-8')
    _close(logger)


def test_default_logger_uses_settings(mock_settings: MockSettings) -> None:
    """デフォルトロガーが設定のレベルとログディレクトリを使うことのテスト。"""
    logger = get_default_logger(mock_settings)
    assert logger.name == PACKAGE_LOGGER_NAME
    assert logger.level == logging.DEBUG
    files = [
        handler
        for handler in logger.handlers
        if isinstance(handler, logging.FileHandler)
    ]
    assert len(files) == 1
    assert Path(files[0].baseFilename).parent == mock_settings.log_dir.resolve()
