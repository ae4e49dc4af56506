"""Convergence traces and their CSV/JSON serialization."""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import List

FIELDS = ("k", "grads", "objective", "consensus_residual", "seconds")


@dataclass
class TraceRecord:
    k: int
    grads: int
    objective: float
    consensus_residual: float
    seconds: float = 0.0


@dataclass
class Trace:
    records: List[TraceRecord] = field(default_factory=list)

    def append(self, k, grads, objective, consensus_residual, seconds=0.0):
        if self.records:
            last = self.records[-1]
            if k < last.k or grads < last.grads:
                raise ValueError("trace records must be ordered by k with nondecreasing gradient counts")
        self.records.append(TraceRecord(int(k), int(grads), float(objective),
                                        float(consensus_residual), float(seconds)))

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    @property
    def last(self):
        return self.records[-1]

    def best_objective(self):
        """Running minimum of the recorded objective (non-finite entries skipped)."""
        vals = [r.objective for r in self.records if math.isfinite(r.objective)]
        return min(vals) if vals else math.inf

    def best_until(self, grads):
        vals = [r.objective for r in self.records if r.grads <= grads and math.isfinite(r.objective)]
        return min(vals) if vals else math.inf


def _fmt(v):
    if isinstance(v, int):
        return str(v)
    return format(v, ".17g")


def trace_to_csv(trace):
    buf = io.StringIO()
    buf.write(",".join(FIELDS) + "\n")
    for r in trace.records:
        buf.write(",".join(_fmt(getattr(r, f)) for f in FIELDS) + "\n")
    return buf.getvalue()


def trace_to_json(trace):
    rows = ",\n".join(
        "  {" + ", ".join(f'"{f}": {_json_num(getattr(r, f))}' for f in FIELDS) + "}"
        for r in trace.records)
    return "[\n" + rows + "\n]\n" if rows else "[]\n"


def _json_num(v):
    if isinstance(v, float) and not math.isfinite(v):
        return json.dumps(str(v))
    return _fmt(v)


def emit_trace(trace, fmt, path):
    """Write ``trace`` to ``path`` as ``csv`` or ``json`` (17 significant digits)."""
    if fmt == "csv":
        text = trace_to_csv(trace)
    elif fmt == "json":
        text = trace_to_json(trace)
    else:
        raise ValueError(f"unknown trace format {fmt!r}")
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc}") from exc
    return path


def _record(row):
    return TraceRecord(int(row["k"]), int(row["grads"]), float(row["objective"]),
                       float(row["consensus_residual"]), float(row["seconds"]))


def read_trace(path):
    with open(path, newline="") as fh:
        text = fh.read()
    if text.lstrip().startswith("["):
        return Trace([_record(r) for r in json.loads(text)])
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != FIELDS:
        raise ValueError(f"unexpected trace header {reader.fieldnames}")
    return Trace([_record(r) for r in reader])
