"""
Label store - the current task's executed observations keyed by (query, label).

Only real executions are recorded; estimates never enter the store.
"""

from collections import defaultdict
from collections.abc import Callable, Iterable
from pathlib import Path

import pandas as pd

from .errors import LogFormatError, ProvenanceError
from .models import CategoryLabel, EvaluationRecord

STORE_COLUMNS = ["query_id", "config_id", "latency", "label"]


def write_csv(frame: pd.DataFrame, path: str | Path, config_hash: str) -> None:
    """Write ``frame`` after a ``# config_hash=...`` comment line."""
    with open(path, "w", newline="") as handle:
        handle.write(f"# config_hash={config_hash}\n")
        frame.to_csv(handle, index=False, lineterminator="\n")


def read_csv(path: str | Path) -> tuple[pd.DataFrame, str]:
    """Read a file written by ``write_csv``; every column comes back as text."""
    with open(path) as handle:
        first = handle.readline()
        config_hash = first.strip().removeprefix("# config_hash=") if first.startswith("#") else ""
        if not first.startswith("#"):
            handle.seek(0)
        try:
            frame = pd.read_csv(handle, dtype=str, keep_default_na=False)
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise LogFormatError(f"{path}: {e}") from e
    return frame, config_hash


class LabelStore:
    """Append-only mapping (query id, label) -> latencies for one task."""

    def __init__(self, task_id: str):
        self.task_id = task_id
        self._records: list[EvaluationRecord] = []
        self._index: dict[tuple[str, str], list[float]] = defaultdict(list)

    def add(self, record: EvaluationRecord) -> None:
        self._records.append(record)
        self._index[(record.query_id, str(record.label))].append(record.latency)

    def extend(self, records: Iterable[EvaluationRecord]) -> None:
        for record in records:
            self.add(record)

    def count(self, query_id: str, label: CategoryLabel) -> int:
        return len(self._index.get((query_id, str(label)), ()))

    def latencies(self, query_id: str, label: CategoryLabel) -> list[float]:
        return list(self._index.get((query_id, str(label)), ()))

    def mean(self, query_id: str, label: CategoryLabel) -> float:
        values = self._index.get((query_id, str(label)))
        if not values:
            raise KeyError((query_id, str(label)))
        return sum(values) / len(values)

    @property
    def records(self) -> list[EvaluationRecord]:
        return list(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def require_task(self, task_id: str) -> None:
        """Reject stores that belong to another tuning task."""
        if self.task_id != task_id:
            raise ProvenanceError(f"label store belongs to task {self.task_id!r}, not {task_id!r}")

    def relabel(self, labeler: Callable[[EvaluationRecord], CategoryLabel]) -> "LabelStore":
        """New store with every record's label replaced by ``labeler(record)``."""
        fresh = LabelStore(self.task_id)
        for record in self._records:
            fresh.add(record.model_copy(update={"label": labeler(record)}))
        return fresh

    # --- Persistence ---

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [[r.query_id, r.config_id, repr(r.latency), str(r.label)] for r in self._records],
            columns=STORE_COLUMNS,
        )

    def save(self, path: str | Path, config_hash: str = "") -> None:
        write_csv(self.to_frame(), path, config_hash)

    @classmethod
    def load(cls, path: str | Path, task_id: str) -> "LabelStore":
        frame, _ = read_csv(path)
        missing = [c for c in STORE_COLUMNS if c not in frame.columns]
        if missing:
            raise LogFormatError(f"{path}: missing columns {missing}")
        store = cls(task_id)
        for position, row in enumerate(frame.itertuples(index=False), start=3):
            try:
                store.add(
                    EvaluationRecord(
                        query_id=row.query_id,
                        config_id=row.config_id,
                        latency=float(row.latency),
                        label=CategoryLabel.parse(row.label),
                    )
                )
            except ValueError as e:
                raise LogFormatError(f"{path}: line {position}: {e}") from e
        return store
