"""Acceptance suite: one pipeline invocation per criterion.

Each test runs the documented config under ``configs/`` in-process, checks
the exit status, the runtime budget, and that the bounds written to
``result.json`` are the pinned tolerances below (so a config edit cannot
quietly loosen a criterion). One PASS/FAIL line per criterion is printed
in the terminal summary.
"""

import json
import math
import time
from pathlib import Path

import pytest

from srbkit.cli import run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

LN_LAMBDA = math.log((3 + math.sqrt(5)) / 2)

# criterion -> (config stem, runtime budget in s, {assertion id: pinned bound})
CRITERIA = {
    1: ("criterion_01_lyapunov", 10.0, {
        "fat-cat/lyapunov-exponents": 1e-4,
        "solenoid/lyapunov-exponents": 1e-3,
    }),
    2: ("criterion_02_graph_transform", 30.0, {
        "solenoid/graph-transform-c0-rate": 0.6 - 2 * 0.05 - 0.05,
        "solenoid/graph-transform-c1-rate": 0.9 * 0.6,
    }),
    3: ("criterion_03_srb_density", 60.0, {
        "warped-solenoid/srb-density": 1e-2,
        "solenoid/srb-density-uniform": 1e-8,
    }),
    4: ("criterion_04_empirical", 60.0, {
        "solenoid/empirical-marginal": 0.02,
        "solenoid/empirical-uniqueness": 0.02,
    }),
    5: ("criterion_05_distortion", 30.0, {
        "solenoid/cocycle-distortion": 3.0,
        "warped-solenoid/cocycle-distortion": 3.0,
        "fat-cat/cocycle-distortion": 1e-8,
        "linear/cocycle-distortion": 1e-8,
        "solenoid/determinant-distortion": 3.0,
        "warped-solenoid/determinant-distortion": 3.0,
    }),
    6: ("criterion_06_holonomy", 60.0, {
        "warped-solenoid/holonomy-absolute-continuity": 3.0,
        "warped-solenoid/holonomy-cell-stability": 0.05,
        "fat-cat/holonomy-absolute-continuity": 1e-8,
    }),
    7: ("criterion_07_shadowing", 60.0, dict({
        "fat-cat/shadowing": 1e-3,
        "fat-cat/shadowing/newton-steps": 10,
    }, **{f"fat-cat/periodic-closing/period-{n}": 0 for n in range(1, 9)})),
    8: ("criterion_08_markov", 120.0, {
        "solenoid/markov-partition": 0,
        "fat-cat/markov-partition": 0,
        "solenoid/partition-entropy": 0.01,
        "fat-cat/partition-entropy": 0.01,
        "solenoid/coding-diameter": math.log(2) - 0.05,
        "fat-cat/coding-diameter": LN_LAMBDA - 0.05,
    }),
    9: ("criterion_09_gibbs", 10.0, {
        "pressure": 1e-10,
        "gibbs-band": True,
        "variational-identity": 1e-10,
        "variational-inequality": 1e-12,
    }),
    10: ("criterion_10_equilibrium", 120.0, {
        "warped-solenoid/equilibrium-pressure": 1e-3,
        "fat-cat/equilibrium-pressure": 1e-12,
        "warped-solenoid/equilibrium-pushforward": 0.03,
        "fat-cat/equilibrium-pushforward": 0.03,
    }),
    11: ("criterion_11_entropy", 60.0, {
        "solenoid/pesin-equality": 0.02,
        "warped-solenoid/pesin-equality": 0.02,
        "fat-cat/pesin-equality": 0.02,
        "solenoid/ruelle-inequality": 0.5,
        "warped-solenoid/ruelle-inequality": 0.5,
        "fat-cat/ruelle-inequality": 0.5,
    }),
    12: ("criterion_12_observability", 60.0, {
        "solenoid/observability": 0.99,
        "solenoid/observability-perturbed": 0.99,
    }),
    13: ("criterion_13_hoelder", 60.0, {}),
}


def _describe(data):
    parts = []
    for a in data["assertions"]:
        v = a["value"]
        v = f"{v:.3g}" if isinstance(v, float) else str(v)
        parts.append(f"{a['id']}={v}{a['op']}{a['bound']:.3g}" if isinstance(a["bound"], float)
                     else f"{a['id']}={v}{a['op']}{a['bound']}")
    return "; ".join(parts)


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, tmp_path, acceptance_log):
    stem, budget, pinned = CRITERIA[number]
    out = tmp_path / stem
    t0 = time.perf_counter()
    status = run(CONFIGS / f"{stem}.json", out=out)
    elapsed = time.perf_counter() - t0
    data = json.loads((out / "result.json").read_text())
    bounds = {a["id"]: a["bound"] for a in data["assertions"]}
    problems = []
    for key, bound in pinned.items():
        if key not in bounds:
            problems.append(f"missing assertion {key}")
        elif isinstance(bound, float) and not math.isclose(bounds[key], bound, rel_tol=1e-12):
            problems.append(f"{key} bound {bounds[key]} != pinned {bound}")
        elif not isinstance(bound, float) and bounds[key] != bound:
            problems.append(f"{key} bound {bounds[key]} != pinned {bound}")
    if number == 13:
        # the bound is computed from measured constants; the slack is pinned
        a = data["assertions"][0]
        r = data["values"]["warped-solenoid/s"]
        if not math.isclose(a["bound"], r["beta_star"] - 0.05, rel_tol=1e-12):
            problems.append("hoelder bound is not beta_star - 0.05")
    if elapsed > budget:
        problems.append(f"runtime {elapsed:.1f}s exceeds {budget}s")
    ok = status == 0 and not problems
    acceptance_log.append(
        f"criterion {number:2d} {'PASS' if ok else 'FAIL'} ({elapsed:5.1f}s / {budget:.0f}s) "
        f"{_describe(data)}" + (f" PROBLEMS: {problems}" if problems else ""))
    assert status == 0, [a for a in data["assertions"] if not a["passed"]] or data.get("error")
    assert not problems, problems
