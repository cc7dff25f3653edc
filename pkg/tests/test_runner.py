import json
import os

import numpy as np
import pytest

from ptsb import cli, io, runner
from ptsb.config import load_config
from ptsb.tdvp import TrajectoryRecord, integrate


def run_cli(argv, tmp_path):
    return cli.main([*argv, "--out-dir", str(tmp_path)])


# -- io ----------------------------------------------------------------------------------------

def test_fmt_round_trips():
    for x in (0.1, 1 / 3, -2.5e-300, 1e22, np.float64(0.7)):
        assert float(io.fmt(x)) == x
    assert io.fmt(True) == "1" and io.fmt(np.int64(4)) == "4"
    assert io.fmt(float("nan")) == "nan" and io.fmt(-float("inf")) == "-inf"


def test_csv_round_trip(tmp_path):
    path = io.write_csv(tmp_path / "a.csv", ("x", "y"), [(0.1, 2), (1 / 3, -1)])
    header, rows = io.read_csv(path)
    assert header == ["x", "y"] and float(rows[1][0]) == 1 / 3


def test_json_handles_complex_and_nonfinite(tmp_path):
    path = io.write_json(tmp_path / "a.json", {"z": 1 + 2j, "v": np.array([np.inf, 1.0])})
    assert json.loads(path.read_text()) == {"v": ["inf", 1.0], "z": [1.0, 2.0]}


def test_atomic_write_failure_leaves_nothing(tmp_path, monkeypatch):
    target = tmp_path / "out.csv"

    def boom(fd):
        raise OSError("disk full")

    monkeypatch.setattr(os, "fsync", boom)
    with pytest.raises(OSError):
        io.write_csv(target, ("x",), [(1.0,)])
    assert list(tmp_path.iterdir()) == []


def test_atomic_write_keeps_old_file_on_failure(tmp_path, monkeypatch):
    target = io.write_csv(tmp_path / "out.csv", ("x",), [(1.0,)])
    before = target.read_bytes()
    monkeypatch.setattr(os, "replace", lambda *a: (_ for _ in ()).throw(OSError("no")))
    with pytest.raises(OSError):
        io.write_csv(target, ("x",), [(2.0,)])
    assert target.read_bytes() == before
    assert [p.name for p in tmp_path.iterdir()] == ["out.csv"]


# -- runs ------------------------------------------------------------------------------------

def test_bath_dump(tmp_path):
    assert run_cli(["bath", "--M", "5"], tmp_path) == 0
    header, rows = io.read_csv(tmp_path / "bath.csv")
    assert header == list(runner.BATH_COLUMNS) and len(rows) == 5
    assert [r[0] for r in rows] == ["1", "2", "3", "4", "5"]
    # 17 significant digits
    assert len(rows[0][1].replace(".", "").lstrip("0").split("e")[0]) >= 15
    meta = json.loads((tmp_path / "bath.json").read_text())
    assert meta["config"]["M"] == 5 and meta["modes"] == 5


def test_spectrum_run_and_sidecar(tmp_path):
    argv = ["spectrum", "--delta", "0.3", "--eps", "0.1", "--M", "20", "--grid-count", "5",
            "--grid-max", "0.2"]
    assert run_cli(argv, tmp_path) == 0
    header, rows = io.read_csv(tmp_path / "spectrum.csv")
    assert header == list(runner.SPECTRUM_COLUMNS) and len(rows) == 5
    assert all(r[5] == "1" for r in rows)
    meta = json.loads((tmp_path / "spectrum.json").read_text())
    assert meta["config"]["delta"] == 0.3
    assert meta["config"]["grid_count"] == 5
    assert meta["bath"] == {"scheme": "wilson", "Lambda": 1.2, "M": 20}
    assert "version" in meta and meta["elapsed_seconds"] >= 0


def test_validate_run(tmp_path):
    argv = ["validate", "--grid-count", "4", "--grid-max", "0.3", "--name", "v"]
    assert run_cli(argv, tmp_path) == 0
    header, rows = io.read_csv(tmp_path / "v.csv")
    assert header == list(runner.VALIDATE_COLUMNS)
    assert [r[5] for r in rows[:2]] == ["ed", "projection"] and len(rows) == 8
    meta = json.loads((tmp_path / "v.json").read_text())
    assert meta["pt_defect_max"] <= 1e-12


def test_dynamics_run(tmp_path):
    argv = ["dynamics", "--M", "50", "--t-end", "5", "--stride", "1"]
    assert run_cli(argv, tmp_path) == 0
    header, rows = io.read_csv(tmp_path / "dynamics.csv")
    assert header == list(TrajectoryRecord.COLUMNS) and len(rows) == 6
    meta = json.loads((tmp_path / "dynamics.json").read_text())
    assert meta["stats"]["status"] == "ok" and meta["r_floor"] == 1e-8
    assert meta["cutoff"] == "exponential"


def test_csv_is_deterministic(tmp_path):
    argv = ["spectrum", "--M", "20", "--grid-count", "6", "--axis", "eps", "--grid-max", "0.4",
            "--branches", "2"]
    assert run_cli([*argv, "--name", "a"], tmp_path) == 0
    assert run_cli([*argv, "--name", "b"], tmp_path) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_preset_variants_write_separate_files(tmp_path):
    cfg = load_config("validate", preset="fig6", overrides={"out_dir": str(tmp_path),
                                                            "grid_count": 3, "grid_max": 0.2},
                      environ={})
    arts = runner.run(cfg)
    assert [a.stem for a in arts] == ["fig6_M3", "fig6_M5"]
    assert all(a.csv.exists() and a.json.exists() for a in arts)


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("PTSB_OUTPUT_DIR", str(tmp_path / "env"))
    assert cli.main(["bath", "--M", "3"]) == 0
    assert (tmp_path / "env" / "bath.csv").exists()


# -- exit codes --------------------------------------------------------------------------------

@pytest.mark.parametrize("argv", [
    ["spectrum", "--lambda", "-0.1"],
    ["spectrum", "--preset", "fig5"],
    ["bath", "--scheme", "chain"],
])
def test_config_errors_exit_2(argv, tmp_path, capsys):
    assert run_cli(argv, tmp_path) == 2
    assert "config error" in capsys.readouterr().err
    assert list(tmp_path.iterdir()) == []


def test_bad_file_key_exits_2(tmp_path, capsys):
    path = tmp_path / "c.ini"
    path.write_text("[model]\ngamma = 1\n")
    assert run_cli(["spectrum", "--config", str(path)], tmp_path / "out") == 2
    assert "model.gamma" in capsys.readouterr().err


def test_argparse_errors_exit_2(tmp_path):
    with pytest.raises(SystemExit) as info:
        run_cli(["spectrum", "--delta", "abc"], tmp_path)
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["fit"])
    assert info.value.code == 2


def test_numerical_failure_exits_3(tmp_path, monkeypatch, capsys):
    def starved(*args, **kwargs):
        return integrate(*args, **{**kwargs, "max_steps": 3})

    monkeypatch.setattr(runner, "integrate", starved)
    argv = ["dynamics", "--M", "20", "--t-end", "50", "--name", "bad"]
    assert run_cli(argv, tmp_path) == 3
    err = capsys.readouterr().err
    assert "numerical failure" in err and "[bad]" in err
    # the partial trajectory is still written
    meta = json.loads((tmp_path / "bad.json").read_text())
    assert meta["stats"]["status"] == "aborted"
