"""
ソルバートレースモジュール。

このモジュールは、反復ごとの exploitability レポート・経過時間・
キャッシュ統計を記録する SolverTrace を提供します。
"""

from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

from src.master_mfg.exact.exploitability import REPORT_COLUMNS, ExploitabilityReport

CACHE_COLUMNS: tuple[str, ...] = ('cache_entries', 'cache_hits', 'cache_misses')


@dataclass(frozen=True)
class TraceRecord:
    """1 反復分の記録。

    Attributes:
        iteration: 反復番号 (≥ 1)
        report: exploitability レポート
        elapsed: 反復に要した秒数(CSV には出力しません)
        cache: キャッシュ統計
    """

    iteration: int
    report: ExploitabilityReport
    elapsed: float = 0.0
    cache: Mapping[str, int] = field(default_factory=dict)


@dataclass
class SolverTrace:
    """ソルバー 1 回分の反復記録。"""

    solver: str
    records: list[TraceRecord] = field(default_factory=list)

    def append(self, record: TraceRecord) -> None:
        """記録を追加します。

        Raises:
            ValueError: 反復番号が直前の記録より大きくない場合
        """
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError(
                f'反復番号は単調増加である必要があります: '
                f'{self.records[-1].iteration} -> {record.iteration}'
            )
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    @property
    def iterations(self) -> list[int]:
        """記録済みの反復番号。"""
        return [record.iteration for record in self.records]

    @property
    def mean_gaps(self) -> list[float]:
        """反復ごとの集約 exploitability。"""
        return [record.report.mean_gap for record in self.records]

    def rows(self) -> list[dict[str, Any]]:
        """exploitability の列にキャッシュ統計の列を加えた行を返します。"""
        rows = []
        for record in self.records:
            for row in record.report.rows():
                for column in CACHE_COLUMNS:
                    stat = column.removeprefix('cache_')
                    row[column] = int(record.cache.get(stat, 0))
                rows.append(row)
        return rows

    @staticmethod
    def columns() -> tuple[str, ...]:
        """rows() の列順。"""
        return REPORT_COLUMNS + CACHE_COLUMNS

    @classmethod
    def merge(cls, solver: str, traces: Sequence['SolverTrace']) -> 'SolverTrace':
        """(μ₀, 経路) ごとに実行したトレースを反復ごとに 1 つのレポートへまとめます。"""
        grouped: dict[int, list[TraceRecord]] = {}
        for trace in traces:
            for record in trace.records:
                grouped.setdefault(record.iteration, []).append(record)
        merged = cls(solver)
        for iteration in sorted(grouped):
            records = grouped[iteration]
            first = records[0].report
            entries = tuple(
                entry for record in records for entry in record.report.entries
            )
            report = ExploitabilityReport(
                entries,
                iteration=iteration,
                seed=first.seed,
                metadata={**first.metadata, 'pairs': len(entries)},
            )
            merged.append(
                TraceRecord(iteration, report, sum(r.elapsed for r in records))
            )
        return merged
