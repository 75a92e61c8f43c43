"""
設定モジュールのテスト。

このモジュールは、設定モジュールの機能をテストします。
"""

from pathlib import Path
from unittest.mock import patch

import pytest
from _pytest.monkeypatch import MonkeyPatch

from src.master_mfg.config.settings import DEFAULT_CONFIG_PATH, Settings, get_settings


def test_settings_default_values() -> None:
    """デフォルト設定値のテスト。"""
    settings = Settings()
    assert settings.output_root == Path('outputs')
    assert settings.log_level == 'INFO'
    assert settings.lineage_cache_limit == 10_000_000
    assert settings.workers == 1
    assert settings.default_config_path == DEFAULT_CONFIG_PATH


def test_settings_custom_values() -> None:
    """カスタム設定値のテスト。"""
    settings = Settings(
        output_root=Path('/tmp/out'),
        log_level='DEBUG',
        lineage_cache_limit=100,
        workers=4,
    )
    assert settings.output_root == Path('/tmp/out')
    assert settings.log_level == 'DEBUG'
    assert settings.lineage_cache_limit == 100
    assert settings.workers == 4


def test_settings_rejects_invalid_workers() -> None:
    """ワーカー数 0 は拒否されることのテスト。"""
    with pytest.raises(ValueError):
        Settings(workers=0)


def test_get_settings_with_env_vars(mock_env_vars: None) -> None:
    """環境変数からの設定読み込みテスト。"""
    with patch('dotenv.load_dotenv'):
        settings = get_settings()
    assert settings.output_root == Path('env-outputs')
    assert settings.log_level == 'DEBUG'
    assert settings.lineage_cache_limit == 12345
    assert settings.workers == 3


def test_get_settings_with_invalid_env_var(monkeypatch: MonkeyPatch) -> None:
    """数値でない環境変数は ValueError になることのテスト。"""
    monkeypatch.setenv('MASTER_MFG_WORKERS', 'many')
    with patch('dotenv.load_dotenv'):
        with pytest.raises(ValueError, match='設定の読み込みに失敗しました'):
            get_settings()


def test_mock_settings_fixture(mock_settings: Settings, tmp_path: Path) -> None:
    """モック設定フィクスチャのテスト。"""
    assert mock_settings.output_root == tmp_path / 'outputs'
    assert mock_settings.log_level == 'DEBUG'
    assert mock_settings.lineage_cache_limit == 2_000_000
