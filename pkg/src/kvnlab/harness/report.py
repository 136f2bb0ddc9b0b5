"""Run reports and artifact writers."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

OUTPUT_ROOT_ENV = "KVNLAB_OUTPUT_ROOT"

SERIES_COLUMNS = ("time", "q_mean", "p_mean", "q_var", "p_var", "Q_mean", "P_mean", "norm")
SCAN_COLUMNS = ("parameter", "metric", "t_final", "descriptor", "runtime_seconds")


def fmt_float(x) -> str:
    """17 significant digits, the fixed decimal form used in every CSV."""
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _clean(value):
    """JSON-safe copy: infinities become strings, numpy scalars become floats."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, int):
        return value
    try:
        f = float(value)
    except (TypeError, ValueError):
        return str(value)
    if math.isinf(f) or math.isnan(f):
        return str(f)
    return f


@dataclass
class Check:
    id: str
    name: str
    value: Any
    threshold: str
    passed: bool

    def as_dict(self) -> Dict[str, Any]:
        return {"id": self.id, "name": self.name, "value": _clean(self.value),
                "threshold": self.threshold, "passed": bool(self.passed)}


@dataclass
class RunReport:
    experiment: str
    config: Dict[str, Any]
    metrics: Dict[str, Any] = field(default_factory=dict)
    series: Dict[str, str] = field(default_factory=dict)
    checks: List[Check] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)
    runtime_seconds: float = 0.0

    def check(self, id: str, name: str, value, passed: bool, threshold: str) -> Check:
        c = Check(id, name, value, threshold, bool(passed))
        self.checks.append(c)
        return c

    @property
    def passed(self) -> bool:
        return not self.errors and all(c.passed for c in self.checks)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "experiment": self.experiment,
            "config": _clean(self.config),
            "metrics": _clean(self.metrics),
            "series": dict(self.series),
            "status": {c.id: ("pass" if c.passed else "fail") for c in self.checks},
            "checks": [c.as_dict() for c in self.checks],
            "warnings": list(self.warnings),
            "errors": list(self.errors),
            "passed": self.passed,
            "runtime_seconds": self.runtime_seconds,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=False)

    def summary_lines(self) -> List[str]:
        lines = []
        for c in self.checks:
            val = c.value if isinstance(c.value, str) else fmt_float(c.value) \
                if isinstance(c.value, (int, float)) else json.dumps(_clean(c.value))
            lines.append(f"[{'PASS' if c.passed else 'FAIL'}] {c.id} {c.name}: "
                         f"{val} (threshold {c.threshold})")
        for e in self.errors:
            lines.append(f"[ERROR] {e}")
        return lines


def strip_runtime(data):
    """Drop runtime keys and runtime checks (recursively) for determinism checks."""
    if isinstance(data, dict):
        return {k: strip_runtime(v) for k, v in data.items() if "runtime" not in k}
    if isinstance(data, list):
        return [strip_runtime(v) for v in data
                if not (isinstance(v, dict) and "runtime" in str(v.get("id", "")))]
    return data


def output_root(configured: str) -> Path:
    """The env var, when set, replaces the configured output root."""
    return Path(os.environ.get(OUTPUT_ROOT_ENV) or configured)


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[Dict[str, Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt_float(row.get(c, math.nan)) if not isinstance(row.get(c), str)
                        else row[c] for c in columns])


def write_json(path: Path, data: Dict[str, Any]) -> None:
    path.write_text(json.dumps(_clean(data), indent=2) + "\n")


def series_columns(extra: Optional[Sequence[str]] = None) -> List[str]:
    return list(SERIES_COLUMNS) + list(extra or ())
