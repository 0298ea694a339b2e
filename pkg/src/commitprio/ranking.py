"""Execution orders: predicted (by failure probability) and the recorded chronological one."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .corpus import ExecutionRecord
from .errors import EmptySuiteSet, MissingOrderIndex

PREDICTED = "predicted"
CHRONOLOGICAL = "chronological"


@dataclass(frozen=True)
class Ranking:
    commit_id: str
    entries: tuple[tuple[str, float], ...]
    strategy: str

    @property
    def suites(self) -> list[str]:
        return [s for s, _ in self.entries]

    def positions(self) -> dict[str, int]:
        """1-based position of every suite."""
        return {s: i + 1 for i, (s, _) in enumerate(self.entries)}

    def __len__(self) -> int:
        return len(self.entries)


def prioritize(commit_id: str, scores: Mapping[str, float],
               signals: Mapping[str, float] | None = None) -> Ranking:
    """Descending score; ties go to the higher coverage-diff signal, then suite id.

    Pass ``signals=None`` when the diff is not supposed to be visible (the
    ablated scenario); ties then fall straight through to the suite id.
    """
    if not scores:
        raise EmptySuiteSet(f"no suites to rank for {commit_id}")
    signals = signals or {}
    order = sorted(scores, key=lambda s: (-float(scores[s]), -float(signals.get(s, 0.0)), s))
    return Ranking(commit_id, tuple((s, float(scores[s])) for s in order), PREDICTED)


def chronological(commit_id: str, executions: Iterable[ExecutionRecord] | Mapping[str, int]) -> Ranking:
    if isinstance(executions, Mapping):
        pairs = list(executions.items())
    else:
        pairs = [(e.suite.class_path, e.order_index) for e in executions]
    if not pairs:
        raise EmptySuiteSet(f"no suites to rank for {commit_id}")
    missing = [s for s, o in pairs if o is None]
    if missing:
        raise MissingOrderIndex(f"{commit_id}: no order_index for {missing}")
    pairs.sort(key=lambda p: (int(p[1]), p[0]))
    return Ranking(commit_id, tuple((s, float(o)) for s, o in pairs), CHRONOLOGICAL)


RANKING_COLUMNS = ("position", "suite", "score", "strategy")


def write_ranking_csv(rankings: Iterable[Ranking], path: str | Path, with_commit: bool = False) -> None:
    """``position,suite,score,strategy``; multi-commit files prepend a ``commit_id`` column."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((("commit_id",) if with_commit else ()) + RANKING_COLUMNS)
        for r in rankings:
            for pos, (suite, score) in enumerate(r.entries, 1):
                row = [pos, suite, repr(score), r.strategy]
                w.writerow(([r.commit_id] if with_commit else []) + row)
