"""Versioned machine-readable reports.

Only the ``timing`` block may differ between two runs with the same inputs
and flags; everything under ``results`` is deterministic.  Floats are
written with ``repr``, which round-trips every double exactly.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "puritytests.report/1"


def jsonable(obj):
    """Plain JSON types; NaN and infinities become None."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    return obj


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class Report:
    command: str
    inputs: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION

    @contextmanager
    def stage(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timing[name] = time.perf_counter() - start

    def add_input_file(self, path) -> None:
        self.inputs.setdefault("files", []).append(
            {"path": str(path), "sha256": file_digest(path)}
        )

    def to_dict(self) -> dict:
        return jsonable({
            "schema_version": self.schema_version,
            "command": self.command,
            "inputs": self.inputs,
            "results": self.results,
            "warnings": self.warnings,
            "timing": self.timing,
        })

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def results_bytes(self) -> bytes:
        """Canonical bytes of the deterministic part of the report."""
        return json.dumps(jsonable(self.results), sort_keys=True, allow_nan=False).encode()

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.dumps(), encoding="utf-8")
        return path


def load(path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if "schema_version" not in doc:
        raise ValueError(f"{path}: not a report (schema_version missing)")
    return doc
