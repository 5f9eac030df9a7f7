"""Result reports: deterministic CSV / JSON-lines emission, parsing and seed aggregation."""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Tuple, Union

import numpy as np
from pydantic import Field

from ..models.base import BaseLCCSModel
from ..models.results import REPORT_COLUMNS, ResultRecord
from ..utils.errors import ContractError

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("csv", "jsonl")
GROUP_COLUMNS = ("strategy", "k", "n", "stream_batch", "stream_order", "alpha", "metric")
AGGREGATE_COLUMNS = GROUP_COLUMNS + ("mean", "std", "count")


class AggregateRow(BaseLCCSModel):
    """Mean and population std of one metric over seeds."""
    strategy: str
    k: int
    n: int
    stream_batch: int
    stream_order: str
    alpha: float
    metric: str
    mean: float
    std: float = Field(ge=0.0)
    count: int = Field(ge=1)


def _csv_text(columns: Tuple[str, ...], rows: Iterable[Dict]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({column: row[column] for column in columns})
    return buffer.getvalue()


def render_report(records: Iterable[ResultRecord], fmt: str = "csv") -> str:
    """Report text with rows sorted by every key column."""
    if fmt not in REPORT_FORMATS:
        raise ContractError(f"unknown report format {fmt!r}; expected one of {REPORT_FORMATS}", stage="report")
    ordered = sorted(records, key=lambda record: record.sort_key())
    rows = [record.model_dump(mode="json") for record in ordered]
    if fmt == "csv":
        return _csv_text(REPORT_COLUMNS, rows)
    return "".join(json.dumps({column: row[column] for column in REPORT_COLUMNS}) + "\n" for row in rows)


def emit_report(records: Iterable[ResultRecord], path: Union[str, Path], fmt: str = "csv") -> Path:
    path = Path(path)
    text = render_report(records, fmt)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info(f"Wrote {fmt} report to {path}")
    return path


def load_report(path: Union[str, Path]) -> List[ResultRecord]:
    """Parse a report written by emit_report; the format follows the file suffix."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".jsonl":
        return [ResultRecord.model_validate_json(line) for line in text.splitlines() if line.strip()]
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
        raise ContractError(f"{path} does not carry the report header", stage="report")
    return [ResultRecord.model_validate(row) for row in reader]


def aggregate_records(records: Iterable[ResultRecord]) -> List[AggregateRow]:
    """Collapse per-seed rows into mean / std / count per (strategy, k, n, stream, metric)."""
    groups: Dict[Tuple, List[float]] = {}
    for record in records:
        key = tuple(getattr(record, column) for column in GROUP_COLUMNS)
        groups.setdefault(key, []).append(record.value)
    rows = []
    for key in sorted(groups):
        values = np.asarray(groups[key])
        rows.append(AggregateRow(
            **dict(zip(GROUP_COLUMNS, key)),
            mean=float(values.mean()),
            std=float(values.std()),
            count=len(values),
        ))
    return rows


def render_aggregate(rows: Iterable[AggregateRow]) -> str:
    return _csv_text(AGGREGATE_COLUMNS, (row.model_dump(mode="json") for row in rows))
