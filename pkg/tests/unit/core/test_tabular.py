"""
表形式 Q モジュールのテスト。
"""

import numpy as np
import pytest

from src.master_mfg.core.errors import FlowMismatchError, PolicyKeyMissError
from src.master_mfg.core.numerics import distribution_key
from src.master_mfg.core.tabular import TabularQ
from src.master_mfg.meanfield.flow import MeanFieldFlow


def test_store_and_lookup() -> None:
    """格納した値表の参照のテスト。"""
    q = TabularQ(2, 3)
    key = distribution_key([0.5, 0.5], 0)
    stored = q.store(0, key, None, np.arange(6.0).reshape(2, 3))
    assert not stored.flags.writeable
    assert q.value(0, 1, key, None, 2) == 5.0
    assert (0, key, None) in q
    assert len(q) == 1


def test_store_keeps_first_value() -> None:
    """同じキーへの再格納では既存の値が返ることのテスト。"""
    q = TabularQ(1, 1)
    key = distribution_key([1.0], 0)
    q.store(0, key, 'p', [[1.0]])
    assert q.store(0, key, 'p', [[2.0]])[0, 0] == 1.0


def test_store_validates_shape_and_values() -> None:
    """形状不一致と非有限値のテスト。"""
    q = TabularQ(2, 2)
    key = distribution_key([0.5, 0.5], 0)
    with pytest.raises(ValueError):
        q.store(0, key, None, np.zeros((2, 3)))
    with pytest.raises(ValueError):
        q.store(0, key, None, [[np.nan, 0.0], [0.0, 0.0]])


def test_missing_key_raises_with_context() -> None:
    """未登録のキーで時刻とキーを含むエラーになることのテスト。"""
    q = TabularQ(2, 2)
    key = distribution_key([0.5, 0.5], 3)
    with pytest.raises(PolicyKeyMissError) as excinfo:
        q.table(3, key, 'closure_0')
    assert excinfo.value.timestep == 3
    assert excinfo.value.key == key
    assert excinfo.value.noise_key == 'closure_0'


def test_from_flow_and_along() -> None:
    """フローに沿った格納と取り出しのテスト。"""
    flow = MeanFieldFlow(np.array([[1.0, 0.0], [0.5, 0.5], [0.2, 0.8]]))
    values = np.random.default_rng(0).normal(size=(3, 2, 2))
    q = TabularQ.from_flow(values, flow)
    np.testing.assert_array_equal(q.along(flow), values)
    assert sorted(n for n, _, _ in q) == [0, 1, 2]
    with pytest.raises(FlowMismatchError):
        TabularQ.from_flow(values[:2], flow)
