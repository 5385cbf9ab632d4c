import copy
import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest

from invshuttle.cli import main, parse_durations
from invshuttle.config import ConfigError, example_config, parse_config

GOLDEN = Path(__file__).parent / "golden" / "tiny_schema.json"
RUN_CSVS = ["means.csv", "covariance.csv", "control.csv", "centers.csv", "diagnostics.csv", "populations.csv"]


def write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data, indent=2))
    return path


@pytest.fixture
def tiny(tmp_path):
    data = example_config()
    data["duration"] = {"value": 1.0, "unit": "1/omega_t"}
    data["grid"] = {"steps": 1400, "fock_cutoff": 2}
    return write_config(tmp_path, data)


def csv_body_hashes(out):
    return {name: hashlib.sha256((out / name).read_bytes()).hexdigest() for name in RUN_CSVS}


def test_run_writes_expected_schema(tiny, tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(tiny), "--out", str(out)]) == 0
    golden = json.loads(GOLDEN.read_text())
    for name, entry in golden["csv"].items():
        lines = (out / name).read_text().splitlines()
        assert lines[0].split(",") == entry["header"], name
        assert len(lines) - 1 == entry["rows"], name
    assert len(golden["csv"]["covariance.csv"]["header"]) == 37
    manifest = json.loads((out / "manifest.json").read_text())
    assert {"config_hash", "version", "started", "finished", "outputs", "summary"} <= set(manifest)
    assert manifest["summary"]["fidelity"] == pytest.approx(golden["fidelity"], abs=1e-10)
    assert sorted(o["file"] for o in manifest["outputs"]) == sorted(RUN_CSVS + ["snapshots.json"])
    snaps = json.loads((out / "snapshots.json").read_text())["snapshots"]
    assert [snaps[k]["t"] for k in ("t0", "t_half", "t_final")] == [0.0, 0.5, 1.0]


def test_csv_numbers_round_trip(tiny, tmp_path):
    out = tmp_path / "out"
    main(["run", str(tiny), "--out", str(out)])
    row = (out / "means.csv").read_text().splitlines()[5].split(",")
    assert all(repr(float(v)) == v for v in row)


def test_runs_are_byte_identical(tiny, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(tiny), "--out", str(a)]) == 0
    assert main(["run", str(tiny), "--out", str(b)]) == 0
    assert csv_body_hashes(a) == csv_body_hashes(b)
    assert (a / "snapshots.json").read_bytes() == (b / "snapshots.json").read_bytes()


def test_reference_config_fidelity(tmp_path):
    cfg = write_config(tmp_path, example_config())
    out = tmp_path / "ref"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["summary"]["fidelity"] >= 0.96


def test_inverted_frequencies_rejected(tmp_path, capsys):
    data = example_config()
    data["omega_r"] = {"value": 0.5, "unit": "MHz"}
    cfg = write_config(tmp_path, data)
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "omega_r > omega_t" in err
    line = int(err.split(":")[2])
    assert '"omega_r"' in cfg.read_text().splitlines()[line - 1]


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d["ion"].pop("mass"),
        lambda d: d.__setitem__("dimension", 4),
        lambda d: d.__setitem__("separation", {"value": 200, "unit": "furlong"}),
        lambda d: d.__setitem__("extra", 1),
        lambda d: d.pop("duration"),
    ],
    ids=["missing-mass", "dimension-4", "bad-unit", "unknown-key", "missing-duration"],
)
def test_validate_rejects(tmp_path, mutate):
    data = copy.deepcopy(example_config())
    mutate(data)
    assert main(["validate", str(write_config(tmp_path, data))]) == 2


def test_validate_prints_derived_parameters(tmp_path, capsys):
    assert main(["validate", str(write_config(tmp_path, example_config()))]) == 0
    out = capsys.readouterr().out
    assert "kappa" in out
    d0_line = next(l for l in out.splitlines() if l.startswith("d0"))
    assert float(d0_line.split("=")[1].split()[0]) == pytest.approx(3.45, abs=0.01)


def test_invalid_json_is_line_anchored(tmp_path, capsys):
    cfg = tmp_path / "broken.json"
    cfg.write_text('{\n  "omega_t": {"value": 1, "unit": "MHz"},\n  oops\n}\n')
    assert main(["validate", str(cfg)]) == 2
    assert f"{cfg}:3:" in capsys.readouterr().err


def test_unreadable_config(tmp_path):
    assert main(["run", str(tmp_path / "missing.json")]) == 2


def test_sweep_single_point_matches_run(tiny, tmp_path):
    run_out, sweep_out = tmp_path / "r", tmp_path / "s"
    assert main(["run", str(tiny), "--out", str(run_out)]) == 0
    assert main(["sweep", str(tiny), "--durations", "1", "--out", str(sweep_out)]) == 0
    fid_run = json.loads((run_out / "manifest.json").read_text())["summary"]["fidelity"]
    lines = (sweep_out / "fidelity_sweep.csv").read_text().splitlines()
    assert lines[0] == "T,fidelity,residual,status,wall_time"
    assert float(lines[1].split(",")[1]) == pytest.approx(fid_run, abs=1e-12)


def test_sweep_records_failed_points(tiny, tmp_path):
    out = tmp_path / "s"
    # T = 0.001 gets a proportionally scaled grid of 2 steps, too coarse for the unitarity check
    assert main(["sweep", str(tiny), "--durations", "0.001,1", "--out", str(out)]) == 0
    rows = [l.split(",") for l in (out / "fidelity_sweep.csv").read_text().splitlines()[1:]]
    assert [r[3] for r in rows] == ["error", "ok"]


def test_sweep_all_failures_exit_3(tmp_path):
    data = example_config()
    data["grid"] = {"steps": 20}
    assert main(["sweep", str(write_config(tmp_path, data)), "--durations", "3", "--out", str(tmp_path / "s")]) == 3


def test_run_numerical_failure_exit_3(tmp_path):
    data = example_config()
    data["grid"] = {"steps": 20}
    assert main(["run", str(write_config(tmp_path, data)), "--out", str(tmp_path / "o")]) == 3


@pytest.mark.parametrize("text", ["", ",", "3,-1", "a,b"])
def test_bad_duration_lists(text, tiny):
    with pytest.raises(ConfigError):
        parse_durations(text)
    assert main(["sweep", str(tiny), "--durations", text]) == 2


def test_parse_config_units():
    data = example_config()
    data["separation"] = {"value": 0.2, "unit": "mm"}
    data["omega_t"] = {"value": 2e6 * 3.141592653589793, "unit": "rad/s"}
    _, spec = parse_config(json.dumps(data))
    assert spec.separation == pytest.approx(200e-6)
    assert spec.omega_t == pytest.approx(2e6 * 3.141592653589793)


def test_worker_env_var(tiny, tmp_path, monkeypatch):
    monkeypatch.setenv("INVSHUTTLE_WORKERS", "2")
    out = tmp_path / "s"
    assert main(["sweep", str(tiny), "--durations", "1,1.5", "--out", str(out)]) == 0
    rows = (out / "fidelity_sweep.csv").read_text().splitlines()[1:]
    assert [float(r.split(",")[0]) for r in rows] == [1.0, 1.5]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "invshuttle", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "invshuttle" in res.stdout
    res = subprocess.run([sys.executable, "-m", "invshuttle", "frobnicate"], capture_output=True, text=True)
    assert res.returncode == 2
