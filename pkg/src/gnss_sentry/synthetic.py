"""Desk-scale synthetic drives for tests, demos and acceptance runs.

Vehicle speed oscillates sinusoidally between ``v_min`` and ``v_max``; each
GNSS step covers ``speed * dt`` meters plus Gaussian noise, so the distance
labels recovered by haversine match the construction to rounding. CAN and IMU
streams are sampled at 50 Hz and 100 Hz on offset clocks so synchronization
has to interpolate.

Run ``python -m gnss_sentry.synthetic OUT_DIR`` to write ``gnss.csv``,
``can.csv`` and ``imu.csv``.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from gnss_sentry.geodesy import DEFAULT_EARTH, EarthModel, GeoPoint, destination
from gnss_sentry.streams import (
    CanSample,
    GnssFix,
    ImuSample,
    write_can_csv,
    write_gnss_csv,
    write_imu_csv,
)

GNSS_DT = 0.1
CAN_DT = 0.02
IMU_DT = 0.01
START_T = 238867.5
START_POS = GeoPoint(37.63443, -122.414)


@dataclass
class SyntheticDrive:
    gnss: list[GnssFix]
    can: list[CanSample]
    imu: list[ImuSample]
    step_m: np.ndarray  # constructed distance from fix k to fix k+1


def make_synthetic_drive(
    n_frames: int = 6000,
    *,
    seed: int = 7,
    v_min: float = 20.0,
    v_max: float = 30.0,
    speed_period_s: float = 60.0,
    heading_period_s: float = 90.0,
    noise_sigma_m: float = 0.005,
    earth: EarthModel = DEFAULT_EARTH,
) -> SyntheticDrive:
    rng = np.random.default_rng(seed)
    mean_v, amp_v = (v_max + v_min) / 2.0, (v_max - v_min) / 2.0
    w_v = 2.0 * math.pi / speed_period_s
    w_h = 2.0 * math.pi / heading_period_s

    def speed(t):
        return mean_v + amp_v * np.sin(w_v * (t - START_T))

    def accel(t):
        return amp_v * w_v * np.cos(w_v * (t - START_T))

    def heading(t):
        return math.radians(60.0) + 0.4 * np.sin(w_h * (t - START_T))

    def yaw_rate(t):
        return 0.4 * w_h * np.cos(w_h * (t - START_T))

    n_fix = n_frames + 1
    gt = START_T + GNSS_DT * np.arange(n_fix)
    steps = speed(gt[:-1]) * GNSS_DT + rng.normal(0.0, noise_sigma_m, n_frames)
    steps = np.maximum(steps, 0.0)
    pos = [START_POS]
    for k in range(n_frames):
        pos.append(destination(pos[-1], float(heading(gt[k])), float(steps[k]), earth))
    gnss = [GnssFix(float(t), p, float(speed(t))) for t, p in zip(gt, pos)]

    span = gt[-1] - gt[0]
    ct = (START_T - 0.0863) + CAN_DT * np.arange(int(span / CAN_DT) + 10)
    # Steering tracks yaw rate through a nominal 15.3:1 ratio and 2.7 m wheelbase.
    steer = np.degrees(15.3 * np.arctan(2.7 * yaw_rate(ct) / speed(ct)))
    can = [CanSample(float(t), float(v), float(s)) for t, v, s in zip(ct, speed(ct), steer)]

    it = (START_T - 0.0649) + IMU_DT * np.arange(int(span / IMU_DT) + 15)
    a_fwd = accel(it)
    a_right = speed(it) * yaw_rate(it)
    imu = [ImuSample(float(t), float(a), float(r), -9.81) for t, a, r in zip(it, a_fwd, a_right)]
    return SyntheticDrive(gnss, can, imu, steps)


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    if len(args) != 1:
        print("usage: python -m gnss_sentry.synthetic OUT_DIR", file=sys.stderr)
        return 2
    out = Path(args[0])
    out.mkdir(parents=True, exist_ok=True)
    drive = make_synthetic_drive()
    write_gnss_csv(drive.gnss, out / "gnss.csv")
    write_can_csv(drive.can, out / "can.csv")
    write_imu_csv(drive.imu, out / "imu.csv")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
