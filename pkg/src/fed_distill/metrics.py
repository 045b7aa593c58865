"""Metrics records, the communication transcript and run output writers."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Literal, Optional, Sequence

from pydantic import BaseModel, Field, field_validator

STAGE_ORDER = (
    "prepare",
    "client_train",
    "upload",
    "aggregate",
    "distill",
    "incentive",
    "fedavg_round",
    "report",
)

SUMMARY_METRICS = frozenset({
    "accuracy",
    "accuracy_full",
    "accuracy_ownclasses",
    "accuracy_pre_incentive",
    "accuracy_post_incentive",
    "accuracy_ownclasses_pre_incentive",
    "accuracy_ownclasses_post_incentive",
    "global_accuracy_ownclasses",
    "accuracy_upper_bound",
    "clients_avg",
    "clients_avg_post_incentive",
    "comm_cost",
    "comm_cost_incremental",
    "transcript_scalars",
    "transcript_scalars_down",
    "messages_up",
    "messages_down",
})


class MetricsRecord(BaseModel):
    """One measured value of a run."""

    run_id: str = Field(description="Hash of the run's serialized configuration")
    protocol: str = Field(description="dlsh, dlmh, idlmh or fedavg")
    stage: str = Field(description="Pipeline stage that produced the value")
    entity: str = Field(description="Client index, or 'global'")
    metric: str = Field(description="Metric name")
    value: float = Field(description="Finite metric value")
    seed: int = Field(description="Seed of the computation that produced the value")

    @field_validator("value")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("metric values must be finite")
        return value


@dataclass(frozen=True)
class Message:
    """One simulated transfer between a client and the server."""

    sender: str
    receiver: str
    kind: Literal["upload", "incentive", "model_down", "model_up"]
    scalars: int
    round: int = 0


def client_entity(client_index: int) -> str:
    """Entity name of a client in metrics and transcripts."""
    return f"client-{client_index}"


def _entity_order(entity: str) -> tuple[int, int]:
    if entity.startswith("client-"):
        return (0, int(entity.removeprefix("client-")))
    return (1, 0)


def ordered(records: Iterable[MetricsRecord]) -> list[MetricsRecord]:
    """Sort records by stage, then entity; stable within ties."""
    def key(r: MetricsRecord) -> tuple[int, tuple[int, int]]:
        stage = STAGE_ORDER.index(r.stage) if r.stage in STAGE_ORDER else len(STAGE_ORDER)
        return stage, _entity_order(r.entity)

    return sorted(records, key=key)


@dataclass
class RunResult:
    """Everything a protocol run produced."""

    run_id: str
    protocol: str
    records: list[MetricsRecord]
    transcript: list[Message]
    seeds: dict[str, int]
    state: dict[str, Any] = field(default_factory=dict, repr=False)

    def metric(self, entity: str, name: str) -> float:
        """Return the last value recorded for ``(entity, name)``."""
        values = self.values(entity, name)
        if not values:
            raise KeyError(f"no metric {name!r} for {entity!r}")
        return values[-1]

    def values(self, entity: str, name: str) -> list[float]:
        """Return every value recorded for ``(entity, name)`` in order."""
        return [r.value for r in self.records if r.entity == entity and r.metric == name]

    def messages(self, kind: Optional[str] = None, sender: Optional[str] = None,
                 receiver: Optional[str] = None) -> list[Message]:
        """Filter the transcript."""
        return [
            m for m in self.transcript
            if (kind is None or m.kind == kind)
            and (sender is None or m.sender == sender)
            and (receiver is None or m.receiver == receiver)
        ]


def write_jsonl(records: Sequence[MetricsRecord], path: Path) -> None:
    """Write one JSON object per record."""
    with path.open("w", encoding="utf-8", newline="\n") as fp:
        for record in records:
            fp.write(record.model_dump_json() + "\n")


def read_jsonl(path: Path) -> list[MetricsRecord]:
    """Read records written by ``write_jsonl``."""
    return [
        MetricsRecord.model_validate_json(line)
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]


def summary_rows(records: Sequence[MetricsRecord]) -> list[tuple[str, str, float]]:
    """Pick the last value of every summary metric per entity."""
    latest: dict[tuple[str, str], float] = {}
    for r in records:
        if r.metric in SUMMARY_METRICS:
            latest[(r.entity, r.metric)] = r.value
    return sorted(
        ((entity, metric, value) for (entity, metric), value in latest.items()),
        key=lambda row: (_entity_order(row[0]), row[1]),
    )


def write_summary(records: Sequence[MetricsRecord], path: Path) -> None:
    """Write the ``entity,metric,value`` summary CSV."""
    with path.open("w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(("entity", "metric", "value"))
        writer.writerows((e, m, repr(v)) for e, m, v in summary_rows(records))


def write_seeds(seeds: dict[str, int], path: Path) -> None:
    """Write the seed ledger as sorted JSON."""
    path.write_text(json.dumps(seeds, indent=2, sort_keys=True) + "\n", encoding="utf-8")
