from __future__ import annotations

import json

import pytest

from nestedpf.cli import build_parser, main


@pytest.fixture
def lg_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(
        json.dumps(
            {
                "model": "linear_gaussian",
                "seed": 3,
                "n": 10,
                "m": 10,
                "n_obs": 5,
                "repeats": 2,
                "sweep_sizes": [5, 10],
            }
        )
    )
    return path


def _csv_bytes(out_dir, names):
    return {name: (out_dir / name).read_bytes() for name in names}


def test_parser_requires_subcommand():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_simulate_then_run_round_trip(tmp_path, lg_config, capsys):
    sim_dir = tmp_path / "sim"
    assert main(["simulate", "--config", str(lg_config), "--out", str(sim_dir)]) == 0
    assert (sim_dir / "observations.csv").is_file()
    run_dir = tmp_path / "fit"
    code = main(
        [
            "run",
            "--config", str(lg_config),
            "--out", str(run_dir),
            "--observations", str(sim_dir / "observations.csv"),
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "final normalized errors" in out
    assert (run_dir / "steps.csv").is_file()


def test_run_is_byte_deterministic(tmp_path, lg_config, monkeypatch):
    names = ("steps.csv", "ness.csv", "final.csv")
    dirs = (tmp_path / "a", tmp_path / "b", tmp_path / "c")
    monkeypatch.setenv("NPF_THREADS", "1")
    main(["run", "--config", str(lg_config), "--out", str(dirs[0])])
    main(["run", "--config", str(lg_config), "--out", str(dirs[1])])
    monkeypatch.setenv("NPF_THREADS", "4")
    main(["run", "--config", str(lg_config), "--out", str(dirs[2])])
    first = _csv_bytes(dirs[0], names)
    assert first == _csv_bytes(dirs[1], names)
    assert first == _csv_bytes(dirs[2], names)


def test_seed_flag_changes_outputs(tmp_path, lg_config):
    a = tmp_path / "a"
    b = tmp_path / "b"
    main(["run", "--config", str(lg_config), "--out", str(a)])
    main(["run", "--config", str(lg_config), "--seed", "77", "--out", str(b)])
    assert (a / "steps.csv").read_bytes() != (b / "steps.csv").read_bytes()
    manifest = json.loads((b / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 77


def test_no_jitter_flag_recorded(tmp_path, lg_config):
    out = tmp_path / "nj"
    assert main(["run", "--config", str(lg_config), "--no-jitter", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["jitter"] is False


def test_sweep_and_sizes_flag(tmp_path, lg_config, capsys):
    out = tmp_path / "sweep"
    code = main(
        ["sweep", "--config", str(lg_config), "--out", str(out), "--sizes", "5", "10"]
    )
    assert code == 0
    assert "rate fits" in capsys.readouterr().out
    rows = (out / "sweep.csv").read_text().splitlines()[1:]
    assert {r.split(",")[0] for r in rows} == {"5", "10"}


def test_kalman_check_pass_and_model_guard(tmp_path, capsys):
    cfg = tmp_path / "k.json"
    cfg.write_text(
        json.dumps(
            {"model": "linear_gaussian", "seed": 5, "n": 1, "m": 300, "n_obs": 8,
             "repeats": 2}
        )
    )
    assert main(["kalman-check", "--config", str(cfg), "--out", str(tmp_path / "k")]) == 0
    assert "kalman-check PASS" in capsys.readouterr().out

    lorenz = tmp_path / "l.json"
    lorenz.write_text(json.dumps({"model": "lorenz63"}))
    code = main(["kalman-check", "--config", str(lorenz), "--out", str(tmp_path / "l")])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_missing_config_file_is_reported(tmp_path, capsys):
    code = main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_out_defaults_to_config_output_dir(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    target = tmp_path / "from_config"
    cfg.write_text(
        json.dumps(
            {"model": "linear_gaussian", "n": 6, "m": 6, "n_obs": 3,
             "output_dir": str(target)}
        )
    )
    assert main(["simulate", "--config", str(cfg)]) == 0
    assert (target / "observations.csv").is_file()
