"""Threshold calibration and per-step spoofing detection.

The threshold is the receiver's positioning error plus the largest absolute
prediction error seen on attack-free data. A step raises an alarm when the
GNSS-reported step distance differs from the predicted one by strictly more
than the threshold.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from gnss_sentry.errors import InvalidInputError
from gnss_sentry.geodesy import DEFAULT_EARTH, EarthModel, haversine_distance
from gnss_sentry.lstm import LstmModel
from gnss_sentry.streams import CanSample, GnssFix, ImuSample, SyncedFrame, synchronize

DEFAULT_GNSS_ERROR_M = 1.5
LATENCY_BUDGET_US = 100_000.0
RESIDUAL_MODES = ("diff", "raw")
VERDICT_COLUMNS = ("t", "predicted_m", "observed_m", "residual_m", "threshold_m", "alarm", "latency_us")


@dataclass(frozen=True)
class DetectionConfig:
    gnss_position_error_m: float = DEFAULT_GNSS_ERROR_M
    prediction_error_m: float = 0.0
    residual_mode: str = "diff"

    def __post_init__(self) -> None:
        for name in ("gnss_position_error_m", "prediction_error_m"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InvalidInputError(f"{name} must be finite and >= 0, got {v}")
        if self.residual_mode not in RESIDUAL_MODES:
            raise InvalidInputError(f"residual_mode must be one of {RESIDUAL_MODES}")

    @property
    def threshold_gamma_m(self) -> float:
        return self.gnss_position_error_m + self.prediction_error_m


@dataclass(frozen=True)
class DetectionVerdict:
    t: float
    predicted_m: float
    observed_m: float
    residual_m: float
    threshold_m: float
    alarm: bool
    latency_us: float
    step: int = -1  # index of the fix this step starts from


def _detection_predictions(model: LstmModel, frames: Sequence[SyncedFrame]) -> tuple[np.ndarray, np.ndarray]:
    # Distances cannot be negative; calibration and detection share this clamp.
    idx, preds = model.predict_frames(frames)
    return idx, np.maximum(preds, 0.0)


def calibrate_threshold(model: LstmModel, clean_frames: Sequence[SyncedFrame],
                        gnss_position_error_m: float = DEFAULT_GNSS_ERROR_M,
                        residual_mode: str = "diff") -> DetectionConfig:
    """Set the prediction-error term to the max absolute error on attack-free frames."""
    if len(clean_frames) < model.window_len:
        raise InvalidInputError(
            f"insufficient frames: calibration needs at least {model.window_len}, got {len(clean_frames)}"
        )
    idx, preds = _detection_predictions(model, clean_frames)
    labels = np.array([clean_frames[j].label_distance for j in idx])
    return DetectionConfig(
        gnss_position_error_m=gnss_position_error_m,
        prediction_error_m=float(np.max(np.abs(preds - labels))),
        residual_mode=residual_mode,
    )


def detect_step(predicted_m: float, fix_t: GnssFix, fix_next: GnssFix, config: DetectionConfig,
                earth: EarthModel = DEFAULT_EARTH) -> DetectionVerdict:
    """Compare one predicted step distance with the GNSS-observed one."""
    start = time.perf_counter_ns()
    if not fix_next.t > fix_t.t:
        raise InvalidInputError(f"non-increasing timestamps {fix_t.t} -> {fix_next.t}")
    if not (math.isfinite(predicted_m) and predicted_m >= 0):
        raise InvalidInputError(f"predicted distance must be finite and >= 0, got {predicted_m}")
    observed = haversine_distance(fix_t.pos, fix_next.pos, earth)
    residual = abs(observed - predicted_m) if config.residual_mode == "diff" else observed
    gamma = config.threshold_gamma_m
    alarm = residual > gamma
    latency = (time.perf_counter_ns() - start) / 1000.0
    return DetectionVerdict(fix_t.t, predicted_m, observed, residual, gamma, alarm, latency)


@dataclass
class DetectionSummary:
    n_steps: int
    alarm_count: int
    first_alarm_index: int | None
    detection_delay_steps: int | None
    false_alarm_count: int
    false_alarm_rate: float
    mean_latency_us: float
    max_latency_us: float
    budget_ok: bool
    threshold_m: float
    residual_series: list[tuple[float, float, float]]

    def to_json_dict(self) -> dict:
        return {
            "first_alarm_index": self.first_alarm_index,
            "detection_delay_steps": self.detection_delay_steps,
            "false_alarm_rate": self.false_alarm_rate,
            "mean_latency_us": self.mean_latency_us,
            "max_latency_us": self.max_latency_us,
            "budget_ok": self.budget_ok,
            "n_steps": self.n_steps,
            "alarm_count": self.alarm_count,
            "false_alarm_count": self.false_alarm_count,
            "threshold_m": self.threshold_m,
        }


def detection_report(verdicts: Sequence[DetectionVerdict], truth_onset: int | None = None) -> DetectionSummary:
    """Summarize a verdict sequence.

    Without ``truth_onset`` the trajectory is treated as clean, so every alarm
    counts as false. The detection delay is measured from the onset to the
    first alarm at or after it.
    """
    if not verdicts:
        raise InvalidInputError("detection_report needs at least one verdict")
    steps = [v.step if v.step >= 0 else k for k, v in enumerate(verdicts)]
    alarms = [s for s, v in zip(steps, verdicts) if v.alarm]
    first = alarms[0] if alarms else None
    if truth_onset is None:
        pre = list(zip(steps, verdicts))
        delay = None
    else:
        pre = [(s, v) for s, v in zip(steps, verdicts) if s < truth_onset]
        post_alarms = [s for s in alarms if s >= truth_onset]
        delay = post_alarms[0] - truth_onset if post_alarms else None
    false_count = sum(1 for _, v in pre if v.alarm)
    lat = np.array([v.latency_us for v in verdicts])
    mean_lat = float(lat.mean())
    return DetectionSummary(
        n_steps=len(verdicts),
        alarm_count=len(alarms),
        first_alarm_index=first,
        detection_delay_steps=delay,
        false_alarm_count=false_count,
        false_alarm_rate=false_count / len(pre) if pre else 0.0,
        mean_latency_us=mean_lat,
        max_latency_us=float(lat.max()),
        budget_ok=mean_lat < LATENCY_BUDGET_US,
        threshold_m=verdicts[0].threshold_m,
        residual_series=[(v.t, v.residual_m, v.threshold_m) for v in verdicts],
    )


def detect_stream(
    model: LstmModel,
    gnss_under_test: Sequence[GnssFix],
    can: Sequence[CanSample],
    imu: Sequence[ImuSample],
    config: DetectionConfig,
    *,
    truth_onset: int | None = None,
    earth: EarthModel = DEFAULT_EARTH,
) -> tuple[list[DetectionVerdict], DetectionSummary]:
    """Run detection over a GNSS stream whose positions may be spoofed.

    Features come from CAN/IMU; observed distances from the GNSS under test.
    Steps without a full feature window behind them get no verdict. Each
    verdict's latency covers normalization, prediction, haversine and compare.
    """
    frames = synchronize(gnss_under_test, can, imu, features=model.feature_names, earth=earth)
    w = model.window_len
    if len(frames) < w:
        raise InvalidInputError(f"insufficient frames: {len(frames)} steps, window needs {w}")
    x = np.array([fr.features for fr in frames], dtype=np.float64)
    lo = np.asarray(model.norm.feature_min)
    span = np.asarray(model.norm.feature_max) - lo
    verdicts = []
    for j in range(w - 1, len(frames)):
        start = time.perf_counter_ns()
        window = (x[j - w + 1:j + 1] - lo) / span
        predicted = max(model.predict_window(window), 0.0)
        v = detect_step(predicted, gnss_under_test[j], gnss_under_test[j + 1], config, earth)
        latency = (time.perf_counter_ns() - start) / 1000.0
        verdicts.append(replace(v, latency_us=latency, step=j))
    return verdicts, detection_report(verdicts, truth_onset)


def write_verdicts_csv(verdicts: Sequence[DetectionVerdict], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VERDICT_COLUMNS)
        for v in verdicts:
            w.writerow([repr(v.t), repr(v.predicted_m), repr(v.observed_m), repr(v.residual_m),
                        repr(v.threshold_m), int(v.alarm), f"{v.latency_us:.3f}"])
