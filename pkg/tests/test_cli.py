import json

import pytest

from lifecycle_sim.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, compare, main

SHORT = "scenario:\n  base: scale-up\n  duration_s: 300\n"


@pytest.fixture
def short_cfg(tmp_path):
    p = tmp_path / "short.yaml"
    p.write_text(SHORT)
    return str(p)


def test_validate_exit_codes(tmp_path, short_cfg, capsys):
    assert main(["validate", short_cfg]) == EXIT_OK
    bad = tmp_path / "bad.yaml"
    bad.write_text("demand:\n  sigma: 10\n  u_min: 5\n  u_max: 12\n")
    assert main(["validate", str(bad)]) == EXIT_CONFIG
    assert "demand (line 1)" in capsys.readouterr().out
    assert main(["validate", str(tmp_path / "missing.yaml")]) == EXIT_IO


def test_run_writes_outputs(tmp_path, short_cfg):
    out = tmp_path / "run"
    assert main(["run", "--config", short_cfg, "--seed", "7", "--out", str(out)]) == EXIT_OK
    for name in ("summary.json", "timeseries.csv", "ledger.csv", "events.log", "config.yaml"):
        assert (out / name).exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seed"] == 7 and summary["scenario"]["name"] == "scale-up"


def test_env_overrides_out(tmp_path, short_cfg, monkeypatch):
    target = tmp_path / "from-env"
    monkeypatch.setenv("SCAREY_SIM_OUT", str(target))
    assert main(["run", "--config", short_cfg, "--out", str(tmp_path / "ignored")]) == EXIT_OK
    assert (target / "summary.json").exists()
    assert not (tmp_path / "ignored").exists()


def test_unwritable_out_is_io_error(tmp_path, short_cfg):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--config", short_cfg, "--out", str(blocker / "sub")]) == EXIT_IO


def test_bad_config_run_exit(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("policy: sometimes\n")
    assert main(["run", "--config", str(bad)]) == EXIT_CONFIG


def test_seeded_runs_byte_identical(tmp_path, short_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["run", "--config", short_cfg, "--seed", "7", "--out", str(d)]) == EXIT_OK
    for name in ("timeseries.csv", "ledger.csv", "events.log", "config.yaml"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    sa, sb = (json.loads((d / "summary.json").read_text()) for d in (a, b))
    sa.pop("meta"), sb.pop("meta")
    assert sa == sb


def test_compare_identical_is_zero(tmp_path, short_cfg, capsys):
    run = tmp_path / "r"
    main(["run", "--config", short_cfg, "--out", str(run)])
    capsys.readouterr()
    assert main(["compare", str(run), str(run), "--out", str(tmp_path / "cmp")]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert all(v in (0.0, None) for v in report["cost"].values())
    assert (tmp_path / "cmp" / "compare.json").exists()


def test_compare_missing_dir(tmp_path):
    assert main(["compare", str(tmp_path / "x"), str(tmp_path / "y")]) == EXIT_IO


def test_compare_warns_on_kind_mismatch():
    base = {"cost_usd": {"total": 2.0}, "power_wh": {"total": 1.0}, "emissions_kg": {"total": 1.0}}
    a = dict(base, scenario={"kind": "annual"}, cost_usd={"total": 1.0})
    b = dict(base, scenario={"kind": "scale-up"})
    rep = compare(a, b)
    assert rep["warnings"] and rep["cost"]["total"] == -50.0


def test_scenarios_verb(capsys):
    assert main(["scenarios"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("scale-up", "scale-down", "underprovision", "annual"):
        assert name in out
