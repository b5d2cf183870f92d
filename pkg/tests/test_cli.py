import csv
import json

import pytest

from gnss_sentry.cli import main
from gnss_sentry.config import SEED_ENV, load_config, parse_config_text
from gnss_sentry.errors import FormatError
from gnss_sentry.geodesy import GeoPoint
from gnss_sentry.spoofsim import Route, format_kml_route
from gnss_sentry.streams import write_can_csv, write_gnss_csv, write_imu_csv
from gnss_sentry.synthetic import make_synthetic_drive


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    drive = make_synthetic_drive(400, seed=11)
    write_gnss_csv(drive.gnss, d / "gnss.csv")
    write_can_csv(drive.can, d / "can.csv")
    write_imu_csv(drive.imu, d / "imu.csv")
    assert main(["sync", "--gnss", str(d / "gnss.csv"), "--can", str(d / "can.csv"),
                 "--imu", str(d / "imu.csv"), "--out", str(d / "frames.csv")]) == 0
    assert main(["train", "--frames", str(d / "frames.csv"), "--out-model", str(d / "model.json"),
                 "--out-history", str(d / "history.csv")]) == 0
    return d


def test_sync_writes_one_frame_per_step(work):
    rows = list(csv.reader((work / "frames.csv").open()))
    assert rows[0] == ["t", "can_speed", "steering", "accel_fwd", "label_distance"]
    assert len(rows) - 1 == len((work / "gnss.csv").read_text().splitlines()) - 2


def test_train_defaults_give_100_history_rows(work):
    rows = list(csv.DictReader((work / "history.csv").open()))
    assert len(rows) == 100
    assert [int(r["epoch"]) for r in rows] == list(range(1, 101))
    doc = json.loads((work / "model.json").read_text())
    assert doc["format"] == "gnss-sentry-lstm"
    assert doc["config"]["hidden_size"] == 50
    assert doc["config"]["seed"] == 42


def test_train_refuses_overwrite(work, capsys):
    before = (work / "model.json").read_bytes()
    code, _, err = run(capsys, "train", "--frames", work / "frames.csv", "--out-model", work / "model.json",
                       "--out-history", work / "h2.csv", "--epochs", "1")
    assert code != 0
    assert "--force" in err and len(err.strip().splitlines()) == 1
    assert (work / "model.json").read_bytes() == before


def test_eval_outputs(work, capsys):
    out_dir = work / "eval"
    code, out, _ = run(capsys, "eval", "--model", work / "model.json", "--frames", work / "frames.csv",
                       "--out-dir", out_dir)
    assert code == 0 and out.startswith("RMSE")
    m = json.loads((out_dir / "metrics.json").read_text())
    assert m["rmse_m"] >= m["mae_m"] >= m["min_abs_err_m"] >= 0
    assert m["max_abs_err_m"] >= m["rmse_m"]
    preds = list(csv.DictReader((out_dir / "predictions.csv").open()))
    assert len(preds) == m["n_predictions"]
    hist = list(csv.DictReader((out_dir / "error_histogram.csv").open()))
    assert sum(int(r["count"]) for r in hist) == m["n_predictions"]


def test_eval_empty_frames(work, capsys, tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("t,can_speed,steering,accel_fwd,label_distance\n")
    code, _, err = run(capsys, "eval", "--model", work / "model.json", "--frames", empty,
                       "--out-dir", tmp_path / "o")
    assert code != 0
    assert "insufficient frames" in err
    assert len(err.strip().splitlines()) == 1


def test_clean_detect_has_no_alarms(work, capsys):
    code, _, _ = run(capsys, "detect", "--model", work / "model.json", "--gnss", work / "gnss.csv",
                     "--can", work / "can.csv", "--imu", work / "imu.csv", "--out-dir", work / "clean")
    assert code == 0
    s = json.loads((work / "clean" / "summary.json").read_text())
    assert s["alarm_count"] == 0
    assert s["budget_ok"]
    assert s["threshold_m"] > 1.5


def test_attack_detect_report_flow(work, capsys):
    code, _, _ = run(capsys, "attack", "--gnss", work / "gnss.csv", "--synthetic-rate", "10",
                     "--onset", "200", "--out", work / "spoofed.csv")
    assert code == 0
    out_dir = work / "attack"
    code, _, _ = run(capsys, "detect", "--model", work / "model.json", "--gnss", work / "spoofed.csv",
                     "--can", work / "can.csv", "--imu", work / "imu.csv", "--out-dir", out_dir,
                     "--onset", "200")
    assert code == 0
    s = json.loads((out_dir / "summary.json").read_text())
    assert s["false_alarm_count"] == 0
    assert s["first_alarm_index"] is not None and s["first_alarm_index"] >= 200
    verdicts = list(csv.DictReader((out_dir / "verdicts.csv").open()))
    assert len(verdicts) == s["n_steps"]

    (out_dir / "history.csv").write_bytes((work / "history.csv").read_bytes())
    code, out, _ = run(capsys, "report", "--in-dir", out_dir)
    assert code == 0
    assert (out_dir / "report.txt").read_text() == out
    assert "Training history" in out and "Spoofing detection" in out
    assert f"first alarm at step: {s['first_alarm_index']}" in out


def test_attack_with_kml_route(work, capsys):
    route = Route((GeoPoint(37.64, -122.41), GeoPoint(37.65, -122.41), GeoPoint(37.65, -122.40)))
    (work / "route.kml").write_text(format_kml_route(route))
    code, _, _ = run(capsys, "attack", "--gnss", work / "gnss.csv", "--route", work / "route.kml",
                     "--onset", "100", "--out", work / "kml_spoofed.csv")
    assert code == 0
    rows = list(csv.DictReader((work / "kml_spoofed.csv").open()))
    assert float(rows[100]["lat_deg"]) == 37.64 and float(rows[100]["lon_deg"]) == -122.41


def test_attack_needs_exactly_one_source(work, capsys):
    code, _, err = run(capsys, "attack", "--gnss", work / "gnss.csv", "--onset", "5", "--out",
                       work / "x.csv")
    assert code == 2 and "exactly one" in err


def test_unknown_flag(capsys):
    code, _, err = run(capsys, "train", "--bogus")
    assert code != 0
    assert len(err.strip().splitlines()) == 1
    assert err.startswith("gnss-sentry: error:")


def test_bad_csv_reports_line(capsys, tmp_path, work):
    bad = tmp_path / "gnss.csv"
    lines = (work / "gnss.csv").read_text().splitlines()
    lines[3] = lines[3].replace(lines[3].split(",")[1], "abc", 1)
    bad.write_text("\n".join(lines) + "\n")
    code, _, err = run(capsys, "sync", "--gnss", bad, "--can", work / "can.csv", "--imu",
                       work / "imu.csv", "--out", tmp_path / "f.csv")
    assert code == 1
    assert "line 4" in err


def test_sync_is_idempotent(work, capsys, tmp_path):
    out = tmp_path / "frames2.csv"
    code, _, _ = run(capsys, "sync", "--gnss", work / "gnss.csv", "--can", work / "can.csv",
                     "--imu", work / "imu.csv", "--out", out)
    assert code == 0
    assert out.read_bytes() == (work / "frames.csv").read_bytes()


def test_seed_precedence(monkeypatch, tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# demo\nseed = 7\nepochs = 3\nfeatures = can_speed, steering\n")
    assert load_config().seed == 42
    assert load_config(cfg_file).seed == 7
    monkeypatch.setenv(SEED_ENV, "9")
    assert load_config(cfg_file).seed == 9
    assert load_config(cfg_file, seed=11).seed == 11
    cfg = load_config(cfg_file)
    assert cfg.epochs == 3 and cfg.features == ("can_speed", "steering")


def test_env_seed_changes_training(work, capsys, monkeypatch, tmp_path):
    args = ["train", "--frames", work / "frames.csv", "--epochs", "2", "--out-history", tmp_path / "h.csv"]
    monkeypatch.setenv(SEED_ENV, "5")
    assert run(capsys, *args, "--out-model", tmp_path / "a.json")[0] == 0
    assert run(capsys, *args, "--out-model", tmp_path / "b.json")[0] == 0
    monkeypatch.delenv(SEED_ENV)
    assert run(capsys, *args, "--out-model", tmp_path / "c.json")[0] == 0
    a, b, c = ((tmp_path / n).read_bytes() for n in ("a.json", "b.json", "c.json"))
    assert a == b
    assert a != c
    assert json.loads(a)["config"]["seed"] == 5


def test_config_errors_carry_line():
    with pytest.raises(FormatError, match="line 2"):
        parse_config_text("seed = 1\nnot_a_key = 3\n")
    with pytest.raises(FormatError, match="line 1"):
        parse_config_text("epochs = many\n")
