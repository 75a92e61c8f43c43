"""
ソルバートレースモジュールのテスト。
"""

import pytest

from src.master_mfg.exact.exploitability import (
    ExploitabilityEntry,
    ExploitabilityReport,
)
from src.master_mfg.solvers.trace import SolverTrace, TraceRecord


def _report(label: str, gap: float, iteration: int) -> ExploitabilityReport:
    return ExploitabilityReport(
        (ExploitabilityEntry(label, 'none', gap, 0.0),), iteration=iteration, seed=7
    )


def test_append_requires_increasing_iterations() -> None:
    """反復番号が単調増加でない記録を拒否することのテスト。"""
    trace = SolverTrace('omd')
    trace.append(TraceRecord(1, _report('a', 1.0, 1)))
    trace.append(TraceRecord(2, _report('a', 0.5, 2)))
    with pytest.raises(ValueError):
        trace.append(TraceRecord(2, _report('a', 0.1, 2)))
    assert trace.iterations == [1, 2]
    assert trace.mean_gaps == [1.0, 0.5]
    assert len(trace) == 2


def test_rows_include_cache_columns() -> None:
    """行にキャッシュ統計の列が付くことのテスト。"""
    trace = SolverTrace('lineage_munchausen')
    trace.append(
        TraceRecord(1, _report('a', 1.0, 1), cache={'entries': 5, 'hits': 2})
    )
    rows = trace.rows()
    assert rows[0]['cache_entries'] == 5
    assert rows[0]['cache_hits'] == 2
    assert rows[0]['cache_misses'] == 0
    assert tuple(rows[0]) == SolverTrace.columns()


def test_merge_groups_by_iteration() -> None:
    """(μ₀, 経路) ごとのトレースを反復ごとにまとめることのテスト。"""
    first = SolverTrace('omd')
    second = SolverTrace('omd')
    for k in (1, 2):
        first.append(TraceRecord(k, _report('a', 2.0 / k, k), elapsed=1.0))
        second.append(TraceRecord(k, _report('b', 4.0 / k, k), elapsed=0.5))

    merged = SolverTrace.merge('omd', [first, second])
    assert merged.iterations == [1, 2]
    assert merged.mean_gaps == [pytest.approx(3.0), pytest.approx(1.5)]
    record = merged.records[0]
    assert [entry.mu0_label for entry in record.report.entries] == ['a', 'b']
    assert record.elapsed == pytest.approx(1.5)
    assert record.report.metadata['pairs'] == 2
    assert record.report.seed == 7
