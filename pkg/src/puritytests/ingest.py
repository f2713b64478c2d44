"""Reading (run, position, value) observations from CSV or JSON Lines."""
from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from .nptests import Sample
from .purity import RunSet

FORMATS = ("csv", "jsonl")
MISSING_POLICIES = ("error", "skip-with-warning")


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class IngestSchema:
    format: str | None = None
    run_col: str = "run"
    index_col: str = "t"
    value_col: str = "v"
    missing_policy: str = "error"

    def __post_init__(self):
        if self.format is not None and self.format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.missing_policy not in MISSING_POLICIES:
            raise ValueError(f"missing_policy must be one of {MISSING_POLICIES}")

    def resolve_format(self, path: Path) -> str:
        if self.format:
            return self.format
        return "jsonl" if path.suffix.lower() in (".jsonl", ".ndjson") else "csv"


def run_sort_key(run_id: str):
    try:
        return (0, float(run_id), run_id)
    except ValueError:
        return (1, 0.0, run_id)


def _number(raw, what: str) -> float:
    if raw is None or (isinstance(raw, str) and raw.strip() == ""):
        raise ValueError(f"missing {what}")
    if isinstance(raw, bool):
        raise ValueError(f"{what} is not numeric: {raw!r}")
    try:
        x = float(raw)
    except (TypeError, ValueError):
        raise ValueError(f"{what} is not numeric: {raw!r}") from None
    if not math.isfinite(x):
        raise ValueError(f"{what} is not finite: {raw!r}")
    return x


def _records(path: Path, schema: IngestSchema):
    fmt = schema.resolve_format(path)
    with open(path, encoding="utf-8", newline="") as fh:
        if fmt == "csv":
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise IngestError(f"{path}: empty file, header row required")
            missing = {schema.run_col, schema.index_col, schema.value_col} - set(reader.fieldnames)
            if missing:
                raise IngestError(f"{path}: header lacks columns {sorted(missing)}")
            for row in reader:
                yield reader.line_num, row
        else:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    yield lineno, exc
                    continue
                yield lineno, obj if isinstance(obj, dict) else ValueError("not a JSON object")


def ingest(path, schema: IngestSchema = IngestSchema()) -> RunSet:
    """Load a RunSet: runs ordered by run id, values ordered by position.

    Malformed rows raise :class:`IngestError` naming the row, or are skipped
    with a warning (kept in ``metadata["ingest_warnings"]``) under the
    ``skip-with-warning`` policy.  Duplicate (run, position) pairs always
    raise.
    """
    path = Path(path)
    warnings: list[str] = []
    runs: dict[str, dict[float, float]] = defaultdict(dict)
    for row_no, rec in _records(path, schema):
        try:
            if isinstance(rec, Exception):
                raise ValueError(str(rec))
            run = rec.get(schema.run_col)
            if run is None or str(run).strip() == "":
                raise ValueError(f"missing {schema.run_col}")
            pos = _number(rec.get(schema.index_col), schema.index_col)
            value = _number(rec.get(schema.value_col), schema.value_col)
        except ValueError as exc:
            msg = f"{path.name}: row {row_no}: {exc}"
            if schema.missing_policy == "error":
                raise IngestError(msg) from None
            warnings.append(msg + " (skipped)")
            continue
        run_id = str(run).strip()
        if pos in runs[run_id]:
            raise IngestError(f"{path.name}: row {row_no}: duplicate position {pos:g} in run {run_id!r}")
        runs[run_id][pos] = value
    if not runs:
        raise IngestError(f"{path}: no observations")
    samples = [
        Sample(run_id, [vals[p] for p in sorted(vals)])
        for run_id, vals in sorted(runs.items(), key=lambda kv: run_sort_key(kv[0]))
    ]
    meta = {"source": str(path), "ingest_warnings": warnings}
    return RunSet(path.stem, samples, meta)


def write_runset(rs: RunSet, path, schema: IngestSchema = IngestSchema()) -> Path:
    """Write ``rs`` in the ingest format; values use round-trip exact ``repr``."""
    path = Path(path)
    fmt = schema.resolve_format(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if fmt == "csv":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([schema.run_col, schema.index_col, schema.value_col])
            for run in rs.runs:
                for t, v in enumerate(run.values):
                    writer.writerow([run.run_id, t, repr(float(v))])
        else:
            for run in rs.runs:
                for t, v in enumerate(run.values):
                    rec = {schema.run_col: run.run_id, schema.index_col: t,
                           schema.value_col: float(v)}
                    fh.write(json.dumps(rec) + "\n")
    return path
