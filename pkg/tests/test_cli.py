import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from srbkit import __version__, cli, config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return p


def _gibbs(**params):
    return {"pipeline": "gibbs", "seed": 3, "params": params}


def test_gibbs_run_writes_artifacts_and_exits_zero(tmp_path):
    out = tmp_path / "out"
    code = cli.run(_write(tmp_path, _gibbs()), out=out, stream=io.StringIO())
    assert code == 0
    names = {p.name for p in out.iterdir()}
    assert {"effective_config.json", "result.json"} <= names
    assert any(n.endswith(".csv") for n in names)
    data = json.loads((out / "result.json").read_text())
    assert data["passed"] and data["seed"] == 3
    assert all(a["anchor"] for a in data["assertions"])


def test_failed_assertion_exits_one_and_still_reports(tmp_path):
    # a pressure tolerance of −1 cannot be met
    out = tmp_path / "out"
    code = cli.run(_write(tmp_path, _gibbs(pressure_tolerance=-1.0)), out=out,
                   stream=io.StringIO())
    assert code == 1
    data = json.loads((out / "result.json").read_text())
    assert not data["passed"]
    assert [a["id"] for a in data["assertions"] if not a["passed"]] == ["pressure"]


@pytest.mark.parametrize("raw", [
    {"pipeline": "gibbs", "bogus": 1},
    {"pipeline": "gibbs", "params": {"nope": 1}},
    {"pipeline": "lyapunov"},
    {"pipeline": "lyapunov", "system": {"name": "solenoid", "params": {"warp": 1}}},
    {"pipeline": "lyapunov", "system": {"name": "solenoid", "extra": {}}},
    {"pipeline": "lyapunov", "system": {"name": "linear"}},
    {"pipeline": "gibbs", "seed": -1},
    {"pipeline": "gibbs", "seed": 2 ** 64},
    {"pipeline": "gibbs", "params": {"potential": "cubic"}},
    {"pipeline": "gibbs", "params": {"max_len": "14"}},
    {"pipeline": "gibbs", "system": {"name": "solenoid"}},
    {"pipeline": "unknown"},
    [1, 2],
])
def test_invalid_config_exits_two_without_artifacts(tmp_path, raw):
    out = tmp_path / "out"
    assert cli.run(_write(tmp_path, raw), out=out, stream=io.StringIO()) == 2
    assert not out.exists()


def test_unparseable_config_exits_two(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert cli.run(p, out=tmp_path / "o", stream=io.StringIO()) == 2
    assert cli.run(tmp_path / "missing.json", out=tmp_path / "o", stream=io.StringIO()) == 2
    assert not (tmp_path / "o").exists()


def _strip_time(path):
    d = json.loads(path.read_text())
    d.pop("timestamp")
    return d


def test_results_are_deterministic_apart_from_timestamp(tmp_path):
    cfg = _write(tmp_path, {"pipeline": "lyapunov", "seed": 7,
                            "system": [{"name": "fat-cat"}, {"name": "solenoid"}],
                            "params": {"n": 500}})
    for name in ("a", "b"):
        assert cli.run(cfg, out=tmp_path / name, stream=io.StringIO()) == 0
    assert _strip_time(tmp_path / "a" / "result.json") == _strip_time(tmp_path / "b" / "result.json")
    for f in (tmp_path / "a").glob("*.csv"):
        assert f.read_text() == (tmp_path / "b" / f.name).read_text()


def test_seed_and_out_override(tmp_path):
    cfg = _write(tmp_path, {"pipeline": "lyapunov", "seed": 1, "output_dir": str(tmp_path / "x"),
                            "system": {"name": "fat-cat"}, "params": {"n": 300}})
    seed = 2 ** 64 - 1
    assert cli.run(cfg, out=tmp_path / "y", seed=seed, stream=io.StringIO()) == 0
    assert not (tmp_path / "x").exists()
    eff = json.loads((tmp_path / "y" / "effective_config.json").read_text())
    assert eff["seed"] == seed and eff["output_dir"] == str(tmp_path / "y")
    assert eff["params"]["burn_in"] == 100  # defaults are materialized


def test_effective_config_floats_round_trip(tmp_path):
    val = 0.1 + 0.2
    cfg = _write(tmp_path, _gibbs(potential="random", potential_scale=val))
    assert cli.run(cfg, out=tmp_path / "o", stream=io.StringIO()) == 0
    eff = json.loads((tmp_path / "o" / "effective_config.json").read_text())
    assert eff["params"]["potential_scale"] == val
    again = config.validate(eff)
    assert config.dumps(again) == (tmp_path / "o" / "effective_config.json").read_text()


def test_csv_floats_round_trip(tmp_path):
    cfg = _write(tmp_path, _gibbs())
    cli.run(cfg, out=tmp_path / "o", stream=io.StringIO())
    rows = (tmp_path / "o" / "cylinders.csv").read_text().splitlines()
    for cell in rows[1].split(",")[1:]:
        assert repr(float(cell)) == cell


def test_list_systems_content_and_stability():
    a, b = io.StringIO(), io.StringIO()
    cli.list_systems(a)
    cli.list_systems(b)
    assert a.getvalue() == b.getvalue()
    rows = {r["name"]: r for r in json.loads(a.getvalue())}
    assert {"solenoid", "warped-solenoid", "fat-cat", "galerkin-rd", "linear"} <= set(rows)
    sol = rows["solenoid"]
    assert sol["parameters"]["lam_c"] == 0.25
    assert sol["metadata"]["exponents"] == [[pytest.approx(0.6931471805599453), 1],
                                            [pytest.approx(-1.3862943611198906), 2]]
    assert rows["fat-cat"]["parameters"]["c"] == 0.2


def test_console_entry_point(tmp_path):
    exe = [sys.executable, "-m", "srbkit.cli"]
    v = subprocess.run(exe + ["--version"], capture_output=True, text=True)
    assert v.returncode == 0 and __version__ in v.stdout
    l1 = subprocess.run(exe + ["list-systems"], capture_output=True, text=True).stdout
    l2 = subprocess.run(exe + ["list-systems"], capture_output=True, text=True).stdout
    assert l1 == l2 and l1.startswith("[")
    r = subprocess.run(exe + ["run", "--config", str(_write(tmp_path, _gibbs())), "--out",
                              str(tmp_path / "o"), "--seed", "5"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "PASS pressure" in r.stderr


def test_every_criterion_config_validates():
    files = sorted(CONFIGS.glob("criterion_*.json"))
    assert len(files) == 13
    pipelines = set()
    for f in files:
        cfg = config.load(f)
        pipelines.add(cfg["pipeline"])
    assert pipelines == set(config.PIPELINES)


def test_each_anchor_kind_is_used_by_some_pipeline():
    src = (Path(cli.__file__).parent / "pipelines.py").read_text()
    from srbkit.io import anchors
    for kind in anchors():
        assert f'"{kind}"' in src, kind
