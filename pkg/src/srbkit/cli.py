"""Command-line runner: ``srbkit run``, ``srbkit list-systems``, ``srbkit --version``."""

from __future__ import annotations

import argparse
import datetime as _dt
import inspect
import json
import sys as _sys
import time
from pathlib import Path

from . import __version__, config as _config
from .errors import ConfigInvalid, SrbkitError
from .io import Report, plain, write_artifacts
from .systems import BUILTINS, linear, make_system

EXIT_OK, EXIT_ASSERTION, EXIT_CONFIG = 0, 1, 2


def systems_table() -> list:
    """Static description of every built-in system at its default parameters."""
    rows = []
    for name in sorted(BUILTINS):
        fn = BUILTINS[name]
        params = {k: v.default for k, v in inspect.signature(fn).parameters.items()}
        sys = make_system(name)
        rows.append({"name": name, "dim": sys.dim, "unstable_dim": sys.unstable_dim,
                     "parameters": params, "metadata": sys.metadata})
    params = {k: (None if v.default is inspect.Parameter.empty else v.default)
              for k, v in inspect.signature(linear).parameters.items()}
    rows.append({"name": "linear", "dim": None, "unstable_dim": None, "parameters": params,
                 "metadata": {"formula": "x ↦ Mx", "exponents": "log|eigenvalues of M|"}})
    return plain(rows)


def list_systems(stream=None) -> int:
    stream = stream or _sys.stdout
    stream.write(json.dumps(systems_table(), indent=2, sort_keys=True, ensure_ascii=False) + "\n")
    return EXIT_OK


def run(config_path, out=None, seed=None, stream=None) -> int:
    stream = stream or _sys.stderr
    try:
        raw = json.loads(Path(config_path).read_text())
    except OSError as e:
        stream.write(f"config-invalid: cannot read {config_path}: {e}\n")
        return EXIT_CONFIG
    except json.JSONDecodeError as e:
        stream.write(f"config-invalid: {e}\n")
        return EXIT_CONFIG
    if isinstance(raw, dict):
        if seed is not None:
            raw["seed"] = seed
        if out is not None:
            raw["output_dir"] = str(out)
    try:
        cfg = _config.validate(raw)
    except ConfigInvalid as e:
        stream.write(f"config-invalid: {e}\n")
        return EXIT_CONFIG
    from . import pipelines

    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    error = None
    rep = Report(cfg["pipeline"])
    try:
        pipelines.RUNNERS[cfg["pipeline"]](cfg, rep)
    except SrbkitError as e:
        error = {"code": e.code, "message": str(e)}
    stamp = {"started_utc": started, "elapsed_seconds": round(time.perf_counter() - t0, 3)}
    data = write_artifacts(Path(cfg["output_dir"]), cfg, rep, __version__, stamp,
                           _config.dumps(cfg))
    if error is not None:
        data["passed"] = False
        data["error"] = error
        (Path(cfg["output_dir"]) / "result.json").write_text(
            json.dumps(data, indent=2, sort_keys=True) + "\n")
    for a in data["assertions"]:
        mark = "PASS" if a["passed"] else "FAIL"
        stream.write(f"{mark} {a['id']} [{a['anchor']}] {a['value']} {a['op']} {a['bound']}\n")
    if error is not None:
        stream.write(f"FAIL {error['code']}: {error['message']}\n")
    return EXIT_OK if data["passed"] else EXIT_ASSERTION


def build_parser():
    ap = argparse.ArgumentParser(prog="srbkit", description=__doc__)
    ap.add_argument("--version", action="version", version=f"srbkit {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one pipeline from a JSON config")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--out", type=Path, default=None, help="output directory (overrides config)")
    r.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed (overrides config)")
    sub.add_parser("list-systems", help="print the built-in systems as JSON")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-systems":
        return list_systems()
    return run(args.config, args.out, args.seed)


if __name__ == "__main__":
    raise SystemExit(main())
