"""Result reports: assertions with anchors, JSON and CSV writers."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np


@lru_cache(maxsize=1)
def anchors() -> dict:
    text = resources.files("srbkit").joinpath("data/anchors.json").read_text()
    return json.loads(text)


def plain(obj):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


_OPS = {
    "<": lambda v, b: v < b,
    "<=": lambda v, b: v <= b,
    ">": lambda v, b: v > b,
    ">=": lambda v, b: v >= b,
    "==": lambda v, b: v == b,
}


@dataclass
class Report:
    pipeline: str
    assertions: list = field(default_factory=list)
    values: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    def check(self, kind: str, value, op: str, bound, system: str = "", note: str = "",
              label: str = ""):
        """Record one assertion; ``kind`` keys the anchor table."""
        if kind not in anchors():
            raise KeyError(f"no anchor registered for {kind!r}")
        v = float(value) if not isinstance(value, (bool, np.bool_)) else bool(value)
        ok = bool(_OPS[op](v, bound)) if not (isinstance(v, float) and math.isnan(v)) else False
        self.assertions.append({
            "id": "/".join(t for t in (system, kind, label) if t),
            "anchor": anchors()[kind],
            "system": system,
            "value": v,
            "op": op,
            "bound": bound,
            "passed": ok,
            "note": note,
        })
        return ok

    def table(self, name: str, header, rows):
        self.tables[name] = (list(header), [list(r) for r in rows])

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    def failures(self):
        return [a for a in self.assertions if not a["passed"]]

    def to_dict(self, config: dict, version: str, timestamp: dict) -> dict:
        return plain({
            "pipeline": self.pipeline,
            "version": version,
            "seed": config["seed"],
            "systems": [s["name"] for s in config["system"]],
            "passed": self.passed,
            "assertions": self.assertions,
            "values": self.values,
            "tables": sorted(f"{n}.csv" for n in self.tables),
            "timestamp": timestamp,
        })


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def write_artifacts(out: Path, config: dict, report: Report, version: str, timestamp: dict,
                    config_text: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.json").write_text(config_text)
    for name, (header, rows) in report.tables.items():
        write_csv(out / f"{name}.csv", header, rows)
    data = report.to_dict(config, version, timestamp)
    (out / "result.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return data
