"""Experiment configuration: JSON schema, defaults and validation.

A config is a JSON object with the keys

    pipeline    one of ``PIPELINES``
    system      {"name": ..., "params": {...}} or a list of such objects
                (omitted for the symbolic ``gibbs`` pipeline)
    seed        unsigned 64-bit integer, default 0
    params      pipeline parameters; missing ones take the defaults below
    output_dir  where artifacts go, default "results"

Unknown keys at any level raise :class:`ConfigInvalid`. ``null`` for a
pipeline parameter means "choose per system" and is resolved by the
pipeline; the resolved value is reported in ``result.json``.
"""

from __future__ import annotations

import copy
import inspect
import json
from pathlib import Path

from .errors import ConfigInvalid
from .systems import BUILTINS, linear

U64_MAX = 2 ** 64 - 1

PIPELINES = {
    "lyapunov": {
        "n": 10_000, "burn_in": 100, "tolerance": None,
    },
    "manifold": {
        "orbit_length": 30, "steps": 30, "lam1": None, "delta2": 0.05, "pairs": 3,
        "metric": "adapted",
    },
    "srb-density": {
        "mode": "density", "N": 60, "nodes": 257, "grow": 3, "n_push": 10, "windows": 32,
        "bins": 4096, "uniform_tolerance": 1e-8, "l1_tolerance": 1e-2,
        "leaf_pairs": 8, "leaf_distances": [0.02, 0.1], "chart_steps": 20,
        "distortion_bound": 3.0, "linear_tolerance": 1e-8,
    },
    "empirical": {
        "n": 200, "bins": 64, "marginal_tolerance": 0.02, "tv_n": 400, "grow": 4,
        "grow_nodes": 2049, "cells": 8, "tv_tolerance": 0.02,
    },
    "holonomy": {
        "n_base": 2000, "cells": 16, "ratio_bound": 3.0, "halving_tolerance": 0.05,
        "unit_tolerance": 1e-8, "min_pairs": 1000,
    },
    "shadow": {
        "length": 1000, "alpha": 1e-4, "beta": 1e-3, "max_newton": 10,
        "periods": [1, 2, 3, 4, 5, 6, 7, 8], "closing_seeds": 20000, "return_tol": 0.25,
    },
    "markov": {
        "gamma": 0.005, "alpha": 0.02, "beta": 0.2, "samples": 10000,
        "coding_lengths": [1, 2, 3, 4, 5, 6], "entropy_tolerance": 0.01, "rate_slack": 0.05,
    },
    "gibbs": {
        "matrix": [[1, 1], [1, 0]], "potential": "constant", "potential_k": 3,
        "potential_scale": 1.0, "max_len": 14, "perturbations": 20,
        "pressure_tolerance": 1e-10, "identity_tolerance": 1e-10,
    },
    "equilibrium": {
        "k": 8, "partition_depths": [3, 5], "pressure_bound": None, "empirical_n": 1000,
        "cells": 8, "tv_tolerance": 0.03,
    },
    "entropy-check": {
        "depth": None, "empirical_n": 1000, "gap_tolerance": 0.02, "ruelle_gap": 0.5,
        "atom": True,
    },
    "observability": {
        "n": 100_000, "points": 1000, "tolerance": 0.02, "offset": 0.2, "kato_delta": 0.05,
        "reference_n": 200, "fraction": 0.99,
    },
    "hoelder": {
        "which": "s", "pairs": 400, "fit_slack": 0.05, "report_unstable": False,
    },
}

TOP_KEYS = {"pipeline", "system", "seed", "params", "output_dir"}
SYSTEM_KEYS = {"name", "params"}
SYSTEM_NAMES = sorted(BUILTINS) + ["linear"]
CHOICES = {
    ("srb-density", "mode"): {"density", "distortion"},
    ("manifold", "metric"): {"adapted", "euclidean"},
    ("gibbs", "potential"): {"constant", "random"},
    ("hoelder", "which"): {"s", "u"},
}


def _factory_params(name):
    fn = linear if name == "linear" else BUILTINS[name]
    return [p for p in inspect.signature(fn).parameters]


def _check_system(entry, where):
    if not isinstance(entry, dict):
        raise ConfigInvalid(f"{where}: expected an object")
    extra = set(entry) - SYSTEM_KEYS
    if extra:
        raise ConfigInvalid(f"{where}: unknown keys {sorted(extra)}")
    name = entry.get("name")
    if name not in SYSTEM_NAMES:
        raise ConfigInvalid(f"{where}.name: unknown system {name!r}")
    params = entry.get("params", {})
    if not isinstance(params, dict):
        raise ConfigInvalid(f"{where}.params: expected an object")
    allowed = set(_factory_params(name))
    bad = set(params) - allowed
    if bad:
        raise ConfigInvalid(f"{where}.params: unknown keys {sorted(bad)}")
    if name == "linear" and "matrix" not in params:
        raise ConfigInvalid(f"{where}.params: 'matrix' is required for linear")
    return {"name": name, "params": dict(params)}


def _same_kind(default, value):
    if default is None:
        return True
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, list):
        return isinstance(value, list)
    return isinstance(value, type(default))


def validate(raw) -> dict:
    """Return the effective config with every default materialized."""
    if not isinstance(raw, dict):
        raise ConfigInvalid("config must be a JSON object")
    extra = set(raw) - TOP_KEYS
    if extra:
        raise ConfigInvalid(f"unknown keys {sorted(extra)}")
    pipe = raw.get("pipeline")
    if pipe not in PIPELINES:
        raise ConfigInvalid(f"pipeline must be one of {sorted(PIPELINES)}, got {pipe!r}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed <= U64_MAX:
        raise ConfigInvalid("seed must be an unsigned 64-bit integer")
    if "system" in raw:
        sysraw = raw["system"]
        entries = sysraw if isinstance(sysraw, list) else [sysraw]
        if not entries and pipe != "gibbs":
            raise ConfigInvalid("system list is empty")
        systems = [_check_system(e, f"system[{i}]") for i, e in enumerate(entries)]
    elif pipe == "gibbs":
        systems = []
    else:
        raise ConfigInvalid("'system' is required")
    if pipe == "gibbs" and systems:
        raise ConfigInvalid("the gibbs pipeline works on a shift and takes no system")
    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise ConfigInvalid("params must be an object")
    defaults = PIPELINES[pipe]
    bad = set(params) - set(defaults)
    if bad:
        raise ConfigInvalid(f"params: unknown keys {sorted(bad)} for pipeline {pipe!r}")
    merged = copy.deepcopy(defaults)
    for k, v in params.items():
        if v is not None and not _same_kind(defaults[k], v):
            raise ConfigInvalid(f"params.{k}: expected {type(defaults[k]).__name__}")
        choices = CHOICES.get((pipe, k))
        if choices is not None and v not in choices:
            raise ConfigInvalid(f"params.{k}: must be one of {sorted(choices)}")
        merged[k] = v
    out_dir = raw.get("output_dir", "results")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigInvalid("output_dir must be a non-empty string")
    return {"pipeline": pipe, "system": systems, "seed": seed, "params": merged,
            "output_dir": out_dir}


def load(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigInvalid(f"cannot read config: {e}")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigInvalid(f"config is not valid JSON: {e}")
    return validate(raw)


def dumps(cfg: dict) -> str:
    """Canonical JSON; Python's float repr is the shortest round-trip form."""
    return json.dumps(cfg, indent=2, sort_keys=True, allow_nan=False) + "\n"
