"""On-disk evaluation trace and log-to-metrics parsing.

One evaluation per line, JSON-encoded, flushed and fsynced before
``append`` returns, so any acknowledged record survives an abrupt kill.
Line granularity makes truncation recovery trivial: a trailing line
without its newline terminator is a partial write and is dropped on load;
a malformed line anywhere else means real corruption.
"""

from __future__ import annotations

import json
import os
import re
import warnings
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .space import Configuration, ParamSpace, encode

TRACE_FIELDS = ("step", "config", "metrics", "objectives", "wall_seconds", "seed")


class CorruptTraceError(Exception):
    """A non-trailing trace line failed to parse."""


class LogParseWarning(UserWarning):
    """Sparse or partially unparseable log input."""


@dataclass(frozen=True)
class LogAnnotation:
    """User-supplied one-line regex mapping log lines to (key, value) pairs."""

    pattern: str

    def __post_init__(self):
        try:
            rx = re.compile(self.pattern)
        except re.error as e:
            raise ValueError(f"annotation regex does not compile: {e}") from e
        if rx.groups != 2:
            raise ValueError(
                f"annotation regex must have exactly 2 capture groups, has {rx.groups}"
            )

    @property
    def regex(self) -> re.Pattern:
        return re.compile(self.pattern)


def split_key(key: str) -> list[str]:
    """Split a dotted metric key into its path segments."""
    segments = key.split(".")
    if not all(segments):
        raise ValueError(f"metric key has empty segment: {key!r}")
    return segments


def parse_log(text: str, ann: LogAnnotation) -> dict[str, float]:
    """Extract metrics from raw log text.

    One entry per matching line; a later duplicate key overwrites the
    earlier value. Lines whose value group is not a finite float are
    skipped. Zero matches is not an error (some tasks emit sparse logs)
    but does produce a warning.
    """
    rx = ann.regex
    metrics: dict[str, float] = {}
    dropped = 0
    for line in text.splitlines():
        m = rx.search(line)
        if m is None:
            continue
        key, raw = m.group(1), m.group(2)
        try:
            value = float(raw)
        except ValueError:
            dropped += 1
            continue
        if not np.isfinite(value):
            dropped += 1
            continue
        metrics[key] = value
    if dropped:
        warnings.warn(f"dropped {dropped} unparseable/non-finite metric line(s)", LogParseWarning)
    if not metrics:
        warnings.warn("log annotation matched no lines", LogParseWarning)
    return metrics


@dataclass
class TraceRecord:
    step: int
    config: Configuration
    metrics: dict[str, float]
    objectives: dict[str, float]
    wall_seconds: float
    seed: int

    @property
    def finalized(self) -> bool:
        """A record without objectives marks a failed evaluation."""
        return bool(self.objectives)

    def to_json(self) -> str:
        payload = {
            "step": self.step,
            "config": self.config,
            "metrics": self.metrics,
            "objectives": self.objectives,
            "wall_seconds": self.wall_seconds,
            "seed": self.seed,
        }
        # allow_nan=False: the trace must round-trip bit-exactly through JSON
        return json.dumps(payload, allow_nan=False)

    @classmethod
    def from_json(cls, line: str) -> "TraceRecord":
        obj = json.loads(line)
        missing = [k for k in TRACE_FIELDS if k not in obj]
        if missing:
            raise ValueError(f"trace record missing fields {missing}")
        return cls(
            step=int(obj["step"]),
            config=dict(obj["config"]),
            metrics={str(k): float(v) for k, v in obj["metrics"].items()},
            objectives={str(k): float(v) for k, v in obj["objectives"].items()},
            wall_seconds=float(obj["wall_seconds"]),
            seed=int(obj["seed"]),
        )


class TraceStore:
    """Append-only trace backed by a JSON-lines file.

    Single writer; loaded records are an immutable snapshot safe to share
    with readers. Use :meth:`open` to create or resume a store.
    """

    def __init__(self, path: str | os.PathLike, records: list[TraceRecord]):
        self.path = os.fspath(path)
        self.records = records
        self._fh = None

    @classmethod
    def open(cls, path: str | os.PathLike) -> "TraceStore":
        """Load all complete records from ``path``, creating it if absent.

        A trailing partially-written line is discarded with a warning; a
        malformed line anywhere else raises :class:`CorruptTraceError`.
        """
        path = os.fspath(path)
        records: list[TraceRecord] = []
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                data = fh.read()
            lines = data.split("\n")
            # a complete record is always newline-terminated, so the final
            # split element is either empty or a partial write
            trailing = lines.pop() if lines else ""
            if trailing:
                warnings.warn(
                    f"discarding partially-written trailing record in {path}",
                    LogParseWarning,
                )
            for i, line in enumerate(lines):
                if not line.strip():
                    continue
                try:
                    rec = TraceRecord.from_json(line)
                except (ValueError, KeyError) as e:
                    raise CorruptTraceError(f"{path}:{i + 1}: bad trace line: {e}") from e
                if rec.step != len(records):
                    raise CorruptTraceError(
                        f"{path}:{i + 1}: step {rec.step} out of order (expected {len(records)})"
                    )
                records.append(rec)
        return cls(path, records)

    def __len__(self) -> int:
        return len(self.records)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def append(self, record: TraceRecord) -> None:
        """Durably append one record; returns only after flush + fsync."""
        if record.step != len(self.records):
            raise ValueError(
                f"step mismatch: record.step={record.step}, store has {len(self.records)} records"
            )
        if self._fh is None:
            parent = os.path.dirname(self.path)
            if parent:
                os.makedirs(parent, exist_ok=True)
            self._fh = open(self.path, "a", encoding="utf-8")
        try:
            self._fh.write(record.to_json() + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())
        except OSError as e:
            raise OSError(f"trace append failed for {self.path}: {e}") from e
        self.records.append(record)

    def finalized_records(self) -> list[TraceRecord]:
        return [r for r in self.records if r.finalized]


def to_matrix(
    store: TraceStore, space: ParamSpace
) -> tuple[list[str], np.ndarray]:
    """Assemble the raw trace matrix: encoded params, metrics, objectives.

    Columns are encoded parameter dimensions, then the sorted union of
    metric keys, then sorted objective names. A metric or objective absent
    from a record leaves NaN as the missing-value marker in its row.
    """
    if not store.records:
        raise ValueError("trace is empty")
    metric_names = sorted({k for r in store.records for k in r.metrics})
    objective_names = sorted({k for r in store.records for k in r.objectives})
    names = list(space.names) + metric_names + objective_names
    n = len(store.records)
    out = np.full((n, len(names)), np.nan)
    d = space.dim
    for i, rec in enumerate(store.records):
        out[i, :d] = encode(space, rec.config)
        for j, k in enumerate(metric_names):
            if k in rec.metrics:
                out[i, d + j] = rec.metrics[k]
        for j, k in enumerate(objective_names):
            if k in rec.objectives:
                out[i, d + len(metric_names) + j] = rec.objectives[k]
    return names, out
