"""Command-line interface: flag parsing, config files, precedence, exit codes."""
import json

import pytest

from gchrl.cli import main


FAST = {"hidden": [12, 12], "batch_size": 8, "warmup_steps": 30,
        "t_dm": 10**9, "eval_every": 50, "eval_episodes": 1,
        "n_landmark_cov": 3, "n_landmark_nov": 3, "landmark_subsample": 30,
        "landmark_refresh_every": 5, "adj_hidden": [12, 12],
        "adj_train_every": 10**9, "rnd_hidden": [8, 8], "rnd_dim": 4,
        "dyn_hidden": [12, 12], "n_members": 2,
        "buffer_size_lo": 3000, "buffer_size_hi": 300, "steps": 150}


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "fast.json"
    p.write_text(json.dumps(FAST))
    return str(p)


def run_doc(out_dir):
    return json.loads((out_dir / "run.json").read_text())


def test_full_invocation(tmp_path, cfg_file, capsys):
    out = tmp_path / "run"
    rc = main(["--env", "point_maze_u", "--algo", "aclg", "--seed", "7",
               "--steps", "100", "--out", str(out), "--config", cfg_file])
    assert rc == 0
    doc = run_doc(out)
    assert doc["config"]["algo"] == "aclg"
    assert doc["config"]["seed"] == 7
    assert doc["config"]["steps"] == 100          # flag beats the file's 150
    assert doc["config"]["batch_size"] == 8       # file beats the default
    assert doc["final"]["step"] == 100
    assert "done: 100 steps" in capsys.readouterr().out
    for name in ("progress.csv", "timings.csv", "gcmr_log.csv", "run.json"):
        assert (out / name).exists()


def test_config_file_values_survive_when_flags_absent(tmp_path, cfg_file):
    out = tmp_path / "run"
    assert main(["--env", "point_maze_u", "--out", str(out),
                 "--config", cfg_file]) == 0
    doc = run_doc(out)
    assert doc["config"]["steps"] == 150
    assert doc["config"]["algo"] == "aclg+gcmr"   # untouched default


def test_dump_graph_flag(tmp_path, cfg_file):
    out = tmp_path / "run"
    assert main(["--env", "point_maze_u", "--steps", "100", "--out", str(out),
                 "--config", cfg_file, "--dump-graph"]) == 0
    graphs = list((out / "graphs").glob("step_*.json"))
    assert len(graphs) == 2


def test_preset(tmp_path, cfg_file):
    out = tmp_path / "run"
    assert main(["--env", "point_maze_u", "--steps", "100", "--out", str(out),
                 "--preset", "desk", "--config", cfg_file]) == 0
    doc = run_doc(out)
    # the config file is applied on top of the preset
    assert doc["config"]["hidden"] == [12, 12]
    assert doc["config"]["explore_sigma_lo"] == 0.2


def test_missing_env_flag_exits_2(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["--steps", "100", "--out", str(tmp_path)])
    assert e.value.code == 2


def test_unknown_flag_exits_2(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["--env", "point_maze_u", "--frobnicate", "--out", str(tmp_path)])
    assert e.value.code == 2


def test_unknown_env_reports_and_returns_2(tmp_path, capsys):
    rc = main(["--env", "point_maze_q", "--steps", "100",
               "--out", str(tmp_path)])
    assert rc == 2
    assert "invalid config" in capsys.readouterr().err


def test_bad_config_json_returns_2(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    rc = main(["--env", "point_maze_u", "--out", str(tmp_path / "run"),
               "--config", str(p)])
    assert rc == 2
    assert capsys.readouterr().err


def test_unknown_config_field_returns_2(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"learning_rate": 1.0}))
    rc = main(["--env", "point_maze_u", "--out", str(tmp_path / "run"),
               "--config", str(p)])
    assert rc == 2
    assert "learning_rate" in capsys.readouterr().err


def test_invalid_value_returns_2(tmp_path, cfg_file, capsys):
    rc = main(["--env", "point_maze_u", "--steps", "-5",
               "--out", str(tmp_path), "--config", cfg_file])
    assert rc == 2
    assert "invalid config" in capsys.readouterr().err
