"""``gnss-sentry`` command line: sync, train, eval, attack, detect, report.

Every failure exits nonzero with a single ``gnss-sentry: error: ...`` line on
standard error.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from gnss_sentry.config import load_config, parse_features
from gnss_sentry.detector import (
    calibrate_threshold,
    detect_stream,
    write_verdicts_csv,
)
from gnss_sentry.errors import GnssSentryError, InvalidInputError
from gnss_sentry.lstm import evaluate, load_model, save_model, train, write_history_csv
from gnss_sentry.spoofsim import SpoofScenario, inject_spoof, load_route, synth_deviation
from gnss_sentry.streams import (
    load_can_csv,
    load_frames_csv,
    load_gnss_csv,
    load_imu_csv,
    split,
    synchronize,
    write_frames_csv,
    write_gnss_csv,
)

PROG = "gnss-sentry"

existing = click.Path(exists=True, dir_okay=False, path_type=Path)
config_option = click.option("--config", "config_path", type=existing, default=None,
                             help="Flat key=value config file; flags override it.")


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def cli() -> None:
    """Detect GNSS spoofing by predicting per-step traveled distance from CAN/IMU."""


@cli.command()
@click.option("--gnss", type=existing, required=True)
@click.option("--can", type=existing, required=True)
@click.option("--imu", type=existing, required=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--features", default=None,
              help="Comma list from can_speed,steering,accel_fwd,gnss_speed,prev_distance.")
@config_option
def sync(gnss, can, imu, out, features, config_path):
    """Synchronize streams on GNSS time and write labeled frames.csv."""
    cfg = load_config(config_path, features=parse_features(features) if features else None)
    frames = synchronize(load_gnss_csv(gnss), load_can_csv(can), load_imu_csv(imu),
                         features=cfg.features, earth=cfg.earth)
    write_frames_csv(frames, out, cfg.features)
    click.echo(f"wrote {len(frames)} frames to {out}")


@cli.command("train")
@click.option("--frames", type=existing, required=True)
@config_option
@click.option("--out-model", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--out-history", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--n-train", type=int, default=None)
@click.option("--n-val", type=int, default=None)
@click.option("--force", is_flag=True, help="Overwrite an existing model file.")
def train_cmd(frames, config_path, out_model, out_history, seed, epochs, n_train, n_val, force):
    """Train the LSTM distance predictor and calibrate on the validation split."""
    if out_model.exists() and not force:
        raise InvalidInputError(f"{out_model} exists; pass --force to overwrite")
    cfg = load_config(config_path, seed=seed, epochs=epochs, n_train=n_train, n_val=n_val)
    rows, names = load_frames_csv(frames)
    if not rows:
        raise InvalidInputError(f"insufficient frames: {frames} is empty")
    tr, va = split(rows, cfg.n_train, cfg.n_val)
    model, history = train(tr, va, cfg.train_config(), feature_names=names)
    if len(va) >= model.window_len:
        model.calibration["prediction_error_m"] = calibrate_threshold(model, va, 0.0).prediction_error_m
    save_model(model, out_model)
    write_history_csv(history, out_history)
    last = f"; final train/val MAE {history[-1].train_mae:.6f}/{history[-1].val_mae:.6f}" if history else ""
    click.echo(f"trained on {len(tr)} frames, validated on {len(va)}{last}")


@cli.command("eval")
@click.option("--model", "model_path", type=existing, required=True)
@click.option("--frames", type=existing, required=True)
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--paper-literal-rmse", is_flag=True,
              help="Report sqrt(sum r^2)/N instead of the standard RMSE.")
@click.option("--bin-width", type=float, default=None, help="Histogram bin width in meters.")
@config_option
def eval_cmd(model_path, frames, out_dir, paper_literal_rmse, bin_width, config_path):
    """Evaluate a model: metrics.json, predictions.csv, error_histogram.csv."""
    cfg = load_config(config_path, bin_width_m=bin_width)
    model = load_model(model_path)
    rows, names = load_frames_csv(frames)
    if rows and names != model.feature_names:
        raise InvalidInputError(f"frames features {names} differ from model features {model.feature_names}")
    ev = evaluate(model, rows, paper_literal=paper_literal_rmse, bin_width=cfg.bin_width_m)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = ev.metrics()
    metrics["rmse_mode"] = "paper-literal" if paper_literal_rmse else "standard"
    _write_json(out_dir / "metrics.json", metrics)
    with (out_dir / "predictions.csv").open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "label_m", "predicted_m", "abs_err_m"])
        for t, y, p in zip(ev.t, ev.labels_m, ev.predictions_m):
            w.writerow([repr(float(t)), repr(float(y)), repr(float(p)), repr(float(abs(p - y)))])
    with (out_dir / "error_histogram.csv").open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo_m", "bin_hi_m", "count"])
        for lo, hi, n in zip(ev.hist_edges[:-1], ev.hist_edges[1:], ev.hist_counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(n)])
    click.echo(f"RMSE {ev.rmse_m:.6f} m, MAE {ev.mae_m:.6f} m, max {ev.max_abs_err_m:.6f} m")


@cli.command()
@click.option("--gnss", type=existing, required=True)
@click.option("--route", type=existing, default=None, help="Spoof route, .kml or .csv (lat_deg,lon_deg).")
@click.option("--synthetic-rate", type=float, default=None, help="Cross-track drift in m/step.")
@click.option("--onset", type=int, required=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@config_option
def attack(gnss, route, synthetic_rate, onset, out, config_path):
    """Write a spoofed gnss.csv from a route or a synthetic cross-track drift."""
    if (route is None) == (synthetic_rate is None):
        raise click.UsageError("give exactly one of --route or --synthetic-rate")
    cfg = load_config(config_path)
    truth = load_gnss_csv(gnss)
    if route is not None:
        spoofed = inject_spoof(SpoofScenario(tuple(truth), load_route(route), onset), cfg.earth)
    else:
        spoofed = synth_deviation(truth, onset, synthetic_rate, cfg.earth)
    write_gnss_csv(spoofed, out)
    click.echo(f"wrote {len(spoofed)} fixes ({len(spoofed) - onset} spoofed) to {out}")


@cli.command()
@click.option("--model", "model_path", type=existing, required=True)
@click.option("--gnss", type=existing, required=True)
@click.option("--can", type=existing, required=True)
@click.option("--imu", type=existing, required=True)
@click.option("--gnss-error-m", type=float, default=None, help="Receiver position error (default 1.5).")
@click.option("--residual-mode", type=click.Choice(["diff", "raw"]), default=None)
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--calibration-frames", type=existing, default=None,
              help="Attack-free frames.csv to calibrate the prediction error on.")
@click.option("--prediction-error-m", type=float, default=None,
              help="Use this prediction error instead of calibrating.")
@click.option("--onset", type=int, default=None, help="Known attack onset, for delay/false-alarm stats.")
@config_option
def detect(model_path, gnss, can, imu, gnss_error_m, residual_mode, out_dir, calibration_frames,
           prediction_error_m, onset, config_path):
    """Run per-step detection: verdicts.csv and summary.json."""
    cfg = load_config(config_path, gnss_error_m=gnss_error_m, residual_mode=residual_mode)
    model = load_model(model_path)
    if prediction_error_m is None:
        if calibration_frames is not None:
            rows, _ = load_frames_csv(calibration_frames)
            prediction_error_m = calibrate_threshold(model, rows, 0.0).prediction_error_m
        elif "prediction_error_m" in model.calibration:
            prediction_error_m = model.calibration["prediction_error_m"]
        else:
            raise InvalidInputError(
                "model carries no calibration; pass --calibration-frames or --prediction-error-m"
            )
    dcfg = cfg.detection_config(prediction_error_m)
    verdicts, summary = detect_stream(model, load_gnss_csv(gnss), load_can_csv(can), load_imu_csv(imu),
                                      dcfg, truth_onset=onset, earth=cfg.earth)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_verdicts_csv(verdicts, out_dir / "verdicts.csv")
    _write_json(out_dir / "summary.json", summary.to_json_dict())
    click.echo(f"{summary.alarm_count} alarm(s) over {summary.n_steps} steps; "
               f"threshold {dcfg.threshold_gamma_m:.4f} m; mean latency {summary.mean_latency_us:.0f} us")


def _read_csv(path: Path) -> list[dict[str, str]]:
    with path.open("r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def build_report(in_dir: Path) -> str:
    lines = [f"gnss-sentry report for {in_dir}", ""]
    found = False
    for hist_path in sorted(in_dir.glob("*history*.csv")):
        rows = _read_csv(hist_path)
        if rows:
            found = True
            first, last = rows[0], rows[-1]
            lines += [f"Training history ({hist_path.name}): {len(rows)} epochs",
                      f"  epoch {first['epoch']}: train MAE {float(first['train_mae']):.6f}, "
                      f"val MAE {float(first['val_mae']):.6f}",
                      f"  epoch {last['epoch']}: train MAE {float(last['train_mae']):.6f}, "
                      f"val MAE {float(last['val_mae']):.6f}", ""]
    metrics_path = in_dir / "metrics.json"
    if metrics_path.exists():
        found = True
        m = json.loads(metrics_path.read_text(encoding="utf-8"))
        lines += ["Prediction accuracy (meters)",
                  f"  RMSE ({m.get('rmse_mode', 'standard')}): {m['rmse_m']:.6f}",
                  f"  MAE: {m['mae_m']:.6f}",
                  f"  max abs error: {m['max_abs_err_m']:.6f}",
                  f"  min abs error: {m['min_abs_err_m']:.6g}",
                  f"  predictions: {m['n_predictions']}", ""]
    summary_path = in_dir / "summary.json"
    if summary_path.exists():
        found = True
        s = json.loads(summary_path.read_text(encoding="utf-8"))
        delay = s["detection_delay_steps"]
        lines += ["Spoofing detection",
                  f"  threshold: {s['threshold_m']:.4f} m",
                  f"  steps: {s['n_steps']}, alarms: {s['alarm_count']}",
                  f"  first alarm at step: {s['first_alarm_index']}",
                  f"  detection delay: {'n/a' if delay is None else f'{delay} step(s)'}",
                  f"  false-alarm rate: {s['false_alarm_rate']:.4f}",
                  f"  latency: mean {s['mean_latency_us']:.1f} us, max {s['max_latency_us']:.1f} us "
                  f"({'within' if s['budget_ok'] else 'OVER'} 100 ms budget)", ""]
    if not found:
        raise InvalidInputError(f"no history, metrics.json or summary.json found in {in_dir}")
    return "\n".join(lines).rstrip() + "\n"


@cli.command()
@click.option("--in-dir", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
def report(in_dir):
    """Merge history, metrics and detection summary into report.txt."""
    text = build_report(in_dir)
    (in_dir / "report.txt").write_text(text, encoding="utf-8")
    click.echo(text, nl=False)


def _one_line(msg: str) -> str:
    return " ".join(str(msg).split())


def main(argv: list[str] | None = None) -> int:
    """Console entry point; returns the process exit status."""
    try:
        cli.main(args=argv, prog_name=PROG, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo(f"{PROG}: error: aborted", err=True)
        return 1
    except click.ClickException as exc:
        click.echo(f"{PROG}: error: {_one_line(exc.format_message())}", err=True)
        return exc.exit_code or 2
    except GnssSentryError as exc:
        click.echo(f"{PROG}: error: {_one_line(exc)}", err=True)
        return 1
    except OSError as exc:
        click.echo(f"{PROG}: error: {_one_line(exc)}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
