"""Report serialization: report.jsonl, summary.csv, and plot-data
files.

Rows are written in the order given, one JSON object per line with the
fixed field order {check, lhs, rhs, slack, tolerance, passed, metadata}.
All numpy scalars and containers are converted to plain Python values
first so that float repr, and therefore the emitted bytes, do not
depend on array machinery or thread scheduling.
"""
from __future__ import annotations

import json
import os

import numpy as np

from .evi import CheckReport
from .verify import InequalityReport


def _plain(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, float) or obj is None or isinstance(obj, (bool, int,
                                                                 str)):
        return obj
    return repr(obj)


def report_row(rep) -> dict:
    """Common emission schema for both report flavors."""
    if isinstance(rep, InequalityReport):
        return {"check": rep.check, "lhs": _plain(rep.lhs),
                "rhs": _plain(rep.rhs), "slack": _plain(rep.slack),
                "tolerance": _plain(rep.tolerance), "passed": rep.passed,
                "metadata": _plain(rep.metadata)}
    if isinstance(rep, CheckReport):
        md = {"samples": rep.samples, "indicative": rep.indicative,
              "worst_case": _plain(rep.worst_case)}
        return {"check": rep.check_name, "lhs": _plain(-rep.worst_slack),
                "rhs": 0.0, "slack": _plain(rep.worst_slack),
                "tolerance": _plain(rep.tolerance), "passed": rep.passed,
                "metadata": md}
    raise TypeError(f"cannot emit {type(rep).__name__}")


def row_counts_as_failure(row: dict) -> bool:
    md = row.get("metadata", {})
    if md.get("indicative", False) or not md.get("applicable", True):
        return False
    return not row["passed"]


def _json_line(row: dict) -> str:
    return json.dumps(row, allow_nan=True, separators=(", ", ": "))


def emit_report(reports, out_dir: str, studies=None) -> list[dict]:
    """Write report.jsonl, summary.csv, and any (name, rows) plot-data
    studies into out_dir; returns the emitted rows."""
    os.makedirs(out_dir, exist_ok=True)
    rows = [report_row(r) for r in reports]
    with open(os.path.join(out_dir, "report.jsonl"), "w") as fh:
        for row in rows:
            fh.write(_json_line(row) + "\n")
    with open(os.path.join(out_dir, "summary.csv"), "w") as fh:
        fh.write("check,slack,tolerance,passed\n")
        for row in rows:
            fh.write(f"{row['check']},{row['slack']!r},"
                     f"{row['tolerance']!r},"
                     f"{'true' if row['passed'] else 'false'}\n")
    for name, pairs in (studies or []):
        ordered = sorted(pairs, key=lambda ab: -ab[0])
        with open(os.path.join(out_dir, f"{name}.dat"), "w") as fh:
            for a, b in ordered:
                fh.write(f"{float(a)!r} {float(b)!r}\n")
    return rows


def read_report(path: str) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
