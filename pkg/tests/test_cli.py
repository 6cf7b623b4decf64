"""Config parsing and the command-line verbs, run end to end on tiny data.

One shared tiny run (2 buildings, 12 days, 3 epochs) backs the train /
evaluate / report assertions so the suite stays fast.
"""

import csv
import math
import os

import numpy as np
import pytest

from enercast.cli import main
from enercast.data import load_csv
from enercast.errors import ConfigError
from enercast.experiment import (
    METRIC_CSV_COLUMNS,
    ExperimentConfig,
    apply_overrides,
    config_hash,
    parse_config_text,
    validate_config,
)


# --- config file parsing --------------------------------------------------------


def test_parse_config_defaults_and_values():
    cfg = parse_config_text("")
    assert cfg == ExperimentConfig()
    cfg = parse_config_text(
        """
        # a comment
        out_dir = my_run
        frameworks = single, multi_channel
        vectors = electric
        buildings = 0, 1, 5
        epochs = 12            # trailing comment
        learning_rate = 0.005
        weather = false
        calendar_months = no
        gradient_threshold = inf
        """)
    assert cfg.out_dir == "my_run"
    assert cfg.frameworks == ("single", "multi_channel")
    assert cfg.vectors == ("electric",)
    assert cfg.buildings == (0, 1, 5)
    assert cfg.epochs == 12
    assert cfg.learning_rate == 0.005
    assert cfg.weather is False and cfg.calendar_months is False
    assert math.isinf(cfg.gradient_threshold)


def test_parse_config_rejects_unknown_key_with_line_number():
    with pytest.raises(ConfigError) as info:
        parse_config_text("epochs = 5\nwarp_factor = 9\n")
    assert "warp_factor" in str(info.value)
    assert "line 2" in str(info.value)


def test_parse_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        parse_config_text("epochs = soon")
    with pytest.raises(ConfigError):
        parse_config_text("weather = maybe")
    with pytest.raises(ConfigError):
        parse_config_text("epochs 5")            # no equals sign


def test_overrides_and_validation():
    cfg = apply_overrides(ExperimentConfig(), {"epochs": "3", "vectors": "heat"})
    assert cfg.epochs == 3 and cfg.vectors == ("heat",)
    with pytest.raises(ConfigError):
        apply_overrides(cfg, {"nonsense": "1"})
    with pytest.raises(ConfigError):
        validate_config(apply_overrides(cfg, {"frameworks": "cnn_7"}))
    with pytest.raises(ConfigError):
        validate_config(apply_overrides(cfg, {"vectors": "plasma"}))
    with pytest.raises(ConfigError):
        validate_config(apply_overrides(cfg, {"epochs": "0"}))
    with pytest.raises(ConfigError):
        validate_config(apply_overrides(cfg, {"add_temperature": "true",
                                              "weather": "false"}))


def test_config_hash_tracks_content():
    a = config_hash(ExperimentConfig())
    b = config_hash(ExperimentConfig())
    assert a == b and len(a) == 64
    assert a != config_hash(ExperimentConfig(epochs=3))


# --- CLI verbs --------------------------------------------------------------------


BASE_CONFIG = """
frameworks = single
vectors = electric
buildings = 0
synth_days = 12
synth_buildings = 2
calendar_months = false
epochs = 3
batch_size = 64
filters = 3
kernel_height = 5
log_every = 1
"""


def write_config(tmp_path, body=BASE_CONFIG):
    path = tmp_path / "run.conf"
    path.write_text(body, encoding="utf-8")
    return str(path)


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_synth_verb_round_trips(tmp_path):
    out = tmp_path / "campus.csv"
    rc = main(["synth", "--out", str(out), "--days", "3", "--buildings", "4",
               "--seed", "11"])
    assert rc == 0
    ds = load_csv(out)
    assert ds.num_buildings == 4 and ds.num_days == 3
    assert ds.temperature is not None
    rc = main(["synth", "--out", str(out), "--days", "3", "--buildings", "4",
               "--no-weather"])
    assert rc == 0
    assert load_csv(out).temperature is None


def test_train_evaluate_report_pipeline(tmp_path):
    cfg = write_config(tmp_path)
    run_dir = tmp_path / "run1"

    assert main(["train", "--config", cfg, "--out", str(run_dir)]) == 0
    assert (run_dir / "manifest.json").is_file()
    rows = read_rows(run_dir / "metrics.csv")
    assert rows[0] == list(METRIC_CSV_COLUMNS)
    assert len(rows) > 1
    assert (run_dir / "summary.csv").is_file()
    models = list((run_dir / "models").glob("*.npz"))
    assert len(models) == 1
    preds = list(run_dir.glob("predictions_*.csv"))
    assert preds

    # Re-scoring the saved models reproduces the training-run metrics.
    assert main(["evaluate", str(run_dir)]) == 0
    eval_rows = read_rows(run_dir / "metrics_eval.csv")
    trained = {tuple(r[:5]): r[5:] for r in rows[1:]}
    rescored = {tuple(r[:5]): r[5:] for r in eval_rows[1:]}
    assert set(rescored) == set(trained)
    for key in trained:
        assert rescored[key] == trained[key], key

    assert main(["report", str(run_dir)]) == 0
    assert (run_dir / "report.txt").is_file()
    plots = run_dir / "plotdata"
    assert list(plots.glob("overlay_*.csv"))
    assert list(plots.glob("loss_*.csv"))


def test_train_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path)
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(["train", "--config", cfg, "--out", str(a)]) == 0
    assert main(["train", "--config", cfg, "--out", str(b)]) == 0
    for name in ["metrics.csv", "summary.csv"] + \
            [p.name for p in a.glob("predictions_*.csv")]:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    # History differs only in its wall-clock column.
    for path in a.glob("history_*.csv"):
        rows_a = read_rows(path)
        rows_b = read_rows(b / path.name)
        drop = rows_a[0].index("ElapsedSeconds")
        for ra, rb in zip(rows_a, rows_b):
            del ra[drop], rb[drop]
        assert rows_a == rows_b


def test_correlate_verb(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "corr"
    assert main(["correlate", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "corr_next_prev_electric.csv").is_file()
    assert (out / "corr_cross_building_electric.csv").is_file()
    cross = list(out.glob("corr_cross_vector_building_*.csv"))
    assert cross
    rows = read_rows(out / "corr_next_prev_electric.csv")
    assert rows[0] == ["row", "col", "value"]


def test_sweep_verb(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", cfg, "--out", str(out),
                 "--epochs-list", "1,2,3"]) == 0
    rows = read_rows(out / "sweep.csv")
    assert rows[0] == ["Framework", "Vector", "Budget", "SnrDb", "Nrmse", "TrainMse"]
    assert [r[2] for r in rows[1:]] == ["1", "2", "3"]


def test_sweep_budgets_match_full_runs(tmp_path):
    # A sweep snapshot at budget E must equal a fresh run capped at E epochs,
    # because the shuffle is seeded per epoch.
    cfg = write_config(tmp_path)
    sweep_dir = tmp_path / "sweep"
    assert main(["sweep", "--config", cfg, "--out", str(sweep_dir),
                 "--epochs-list", "2,3"]) == 0
    run_dir = tmp_path / "full3"
    assert main(["train", "--config", cfg, "--set", "epochs=3",
                 "--out", str(run_dir)]) == 0
    sweep_rows = read_rows(sweep_dir / "sweep.csv")
    at3 = [r for r in sweep_rows[1:] if r[2] == "3"][0]
    metric_rows = read_rows(run_dir / "metrics.csv")
    total_test = [r for r in metric_rows[1:]
                  if r[2] == "total" and r[3] == "test"][0]
    assert float(at3[3]) == pytest.approx(float(total_test[5]), rel=1e-12)
    assert float(at3[4]) == pytest.approx(float(total_test[6]), rel=1e-12)


def test_fed_verb(tmp_path):
    body = BASE_CONFIG.replace("frameworks = single", "frameworks = fed_local")
    body = body.replace("synth_buildings = 2", "synth_buildings = 5")
    cfg = write_config(tmp_path, body)
    out = tmp_path / "fed"
    assert main(["fed", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "fed_rounds_electric.csv").is_file()
    rows = read_rows(out / "fed_rounds_electric.csv")
    assert rows[0] == ["Round", "NodeId", "LocalLoss", "PostAvgDeltaNorm"]
    assert len(rows) > 1
    metrics = read_rows(out / "metrics.csv")
    scopes = {r[2] for r in metrics[1:]}
    assert "total" in scopes
    assert any(s.startswith("node_") for s in scopes)


def test_exit_codes(tmp_path, capsys):
    # 1: usage / config problems.
    assert main(["train", "--config", str(tmp_path / "missing.conf")]) == 1
    cfg = write_config(tmp_path)
    assert main(["train", "--config", cfg, "--set", "frameworks=cnn_9",
                 "--out", str(tmp_path / "x")]) == 1
    assert main(["no-such-verb"]) == 1
    assert main([]) == 1
    # 2: runtime errors on well-formed requests.
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["report", str(empty)]) == 2
    assert main(["evaluate", str(empty)]) == 2
    capsys.readouterr()                    # swallow the accumulated noise


def test_cli_set_overrides_config_file(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "override"
    assert main(["train", "--config", cfg, "--set", "epochs=1",
                 "--out", str(out)]) == 0
    import json
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["config"]["epochs"] == 1
    assert manifest["config"]["out_dir"] == str(out)
