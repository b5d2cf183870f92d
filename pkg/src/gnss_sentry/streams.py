"""Sensor stream ingestion, GNSS-time synchronization and feature normalization.

GNSS (10 Hz), CAN (50 Hz) and IMU (100 Hz) streams are loaded from CSV,
CAN/IMU values are linearly interpolated onto each GNSS timestamp, and every
fix except the last becomes a :class:`SyncedFrame` labeled with the
great-circle distance to the next fix.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from gnss_sentry.errors import DegenerateFeatureError, FormatError, InvalidInputError
from gnss_sentry.geodesy import DEFAULT_EARTH, EarthModel, GeoPoint, haversine_distance

GNSS_COLUMNS = ("t", "lat_deg", "lon_deg", "speed_mps")
CAN_COLUMNS = ("t", "speed_mps", "steering_deg")
IMU_COLUMNS = ("t", "ax_fwd", "ax_right", "ax_down")

DEFAULT_FEATURES = ("can_speed", "steering", "accel_fwd")
OPTIONAL_FEATURES = ("gnss_speed", "prev_distance")
KNOWN_FEATURES = DEFAULT_FEATURES + OPTIONAL_FEATURES
LABEL = "label_distance"

DEFAULT_TRAIN_SIZE = 4500
DEFAULT_VAL_SIZE = 1487


@dataclass(frozen=True)
class GnssFix:
    t: float
    pos: GeoPoint
    speed: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.t):
            raise InvalidInputError(f"non-finite GNSS time {self.t}")
        if not (math.isfinite(self.speed) and self.speed >= 0):
            raise InvalidInputError(f"GNSS speed must be finite and >= 0, got {self.speed}")


@dataclass(frozen=True)
class CanSample:
    t: float
    speed: float
    steering_angle: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.t):
            raise InvalidInputError(f"non-finite CAN time {self.t}")
        if not (math.isfinite(self.speed) and self.speed >= 0):
            raise InvalidInputError(f"CAN speed must be finite and >= 0, got {self.speed}")
        if not math.isfinite(self.steering_angle):
            raise InvalidInputError("non-finite steering angle")


@dataclass(frozen=True)
class ImuSample:
    t: float
    accel_forward: float
    accel_right: float
    accel_down: float

    def __post_init__(self) -> None:
        values = (self.t, self.accel_forward, self.accel_right, self.accel_down)
        if not all(math.isfinite(v) for v in values):
            raise InvalidInputError("non-finite IMU sample")


@dataclass(frozen=True)
class SyncedFrame:
    t: float
    features: tuple[float, ...]
    label_distance: float


@dataclass(frozen=True)
class NormStats:
    """Min/max scaling statistics fitted on training rows only."""

    feature_names: tuple[str, ...]
    feature_min: tuple[float, ...]
    feature_max: tuple[float, ...]
    label_min: float
    label_max: float

    @property
    def label_span(self) -> float:
        return self.label_max - self.label_min

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "feature_min": list(self.feature_min),
            "feature_max": list(self.feature_max),
            "label_min": self.label_min,
            "label_max": self.label_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(
            feature_names=tuple(str(n) for n in d["feature_names"]),
            feature_min=tuple(float(v) for v in d["feature_min"]),
            feature_max=tuple(float(v) for v in d["feature_max"]),
            label_min=float(d["label_min"]),
            label_max=float(d["label_max"]),
        )


# --------------------------------------------------------------------------- CSV


def _read_rows(path: str | Path, columns: Sequence[str]) -> list[tuple[int, list[float]]]:
    path = Path(path)
    try:
        fh = path.open("r", encoding="utf-8", newline="")
    except OSError as exc:
        raise InvalidInputError(f"cannot open {path}: {exc.strerror or exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path.name}: missing header row", line=1) from None
        header = [h.strip() for h in header]
        missing = [c for c in columns if c not in header]
        if missing:
            raise FormatError(f"{path.name}: missing column(s) {', '.join(missing)}", line=1)
        idx = [header.index(c) for c in columns]
        rows = []
        for row in reader:
            lineno = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(row[i]) for i in idx]
            except IndexError:
                raise FormatError(f"{path.name}: too few fields", line=lineno) from None
            except ValueError:
                raise FormatError(f"{path.name}: unparsable number", line=lineno) from None
            if not all(math.isfinite(v) for v in values):
                raise FormatError(f"{path.name}: non-finite value", line=lineno)
            rows.append((lineno, values))
    rows.sort(key=lambda r: r[1][0])
    for (_, prev), (lineno, cur) in zip(rows, rows[1:]):
        if cur[0] == prev[0]:
            raise FormatError(f"{path.name}: duplicate timestamp {cur[0]!r}", line=lineno)
    return rows


def _build(path: Path | str, lineno: int, make: Callable[[], object]):
    try:
        return make()
    except InvalidInputError as exc:
        raise FormatError(f"{Path(path).name}: {exc}", line=lineno) from None


def load_gnss_csv(path: str | Path) -> list[GnssFix]:
    """Load a ``t,lat_deg,lon_deg,speed_mps`` file, sorted by time."""
    return [
        _build(path, n, lambda v=v: GnssFix(v[0], GeoPoint(v[1], v[2]), v[3]))
        for n, v in _read_rows(path, GNSS_COLUMNS)
    ]


def load_can_csv(path: str | Path) -> list[CanSample]:
    return [_build(path, n, lambda v=v: CanSample(*v)) for n, v in _read_rows(path, CAN_COLUMNS)]


def load_imu_csv(path: str | Path) -> list[ImuSample]:
    return [_build(path, n, lambda v=v: ImuSample(*v)) for n, v in _read_rows(path, IMU_COLUMNS)]


def write_gnss_csv(fixes: Iterable[GnssFix], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GNSS_COLUMNS)
        for f in fixes:
            w.writerow([repr(f.t), repr(f.pos.lat_deg), repr(f.pos.lon_deg), repr(f.speed)])


def write_can_csv(samples: Iterable[CanSample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CAN_COLUMNS)
        for s in samples:
            w.writerow([repr(s.t), repr(s.speed), repr(s.steering_angle)])


def write_imu_csv(samples: Iterable[ImuSample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(IMU_COLUMNS)
        for s in samples:
            w.writerow([repr(s.t), repr(s.accel_forward), repr(s.accel_right), repr(s.accel_down)])


def write_frames_csv(frames: Sequence[SyncedFrame], path: str | Path,
                     feature_names: Sequence[str] = DEFAULT_FEATURES) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *feature_names, LABEL])
        for fr in frames:
            w.writerow([repr(fr.t), *(repr(x) for x in fr.features), repr(fr.label_distance)])


def load_frames_csv(path: str | Path) -> tuple[list[SyncedFrame], tuple[str, ...]]:
    """Read a frames file; returns the frames and the feature column names."""
    path = Path(path)
    try:
        fh = path.open("r", encoding="utf-8", newline="")
    except OSError as exc:
        raise InvalidInputError(f"cannot open {path}: {exc.strerror or exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path.name}: missing header row", line=1) from None
        if len(header) < 3 or header[0] != "t" or header[-1] != LABEL:
            raise FormatError(f"{path.name}: header must be t,<features...>,{LABEL}", line=1)
        names = tuple(header[1:-1])
        frames = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"{path.name}: expected {len(header)} fields", line=reader.line_num)
            try:
                values = [float(c) for c in row]
            except ValueError:
                raise FormatError(f"{path.name}: unparsable number", line=reader.line_num) from None
            if not all(math.isfinite(v) for v in values):
                raise FormatError(f"{path.name}: non-finite value", line=reader.line_num)
            if values[-1] < 0:
                raise FormatError(f"{path.name}: negative {LABEL}", line=reader.line_num)
            frames.append(SyncedFrame(values[0], tuple(values[1:-1]), values[-1]))
    return frames, names


# ------------------------------------------------------------------ interpolation


def interpolate_at(times: Sequence[float] | np.ndarray, values: Sequence | np.ndarray,
                   t_query: float | np.ndarray) -> np.ndarray:
    """Linearly interpolate ``values`` (rows aligned with ``times``) at ``t_query``.

    Queries that hit a sample time return that sample exactly; queries outside
    the sampled span are clamped to the nearest endpoint.
    """
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if times.size == 0:
        raise InvalidInputError("cannot interpolate an empty sequence")
    if times.ndim != 1 or values.shape[0] != times.shape[0]:
        raise InvalidInputError("times and values must have the same leading length")
    if times.size > 1 and not np.all(np.diff(times) > 0):
        raise InvalidInputError("sample times must be strictly increasing")
    scalar = np.ndim(t_query) == 0
    q = np.atleast_1d(np.asarray(t_query, dtype=np.float64))
    n = times.size
    hi = np.clip(np.searchsorted(times, q, side="left"), 0, n - 1)
    lo = np.clip(hi - 1, 0, n - 1)
    v = values if values.ndim > 1 else values[:, None]
    t0, t1 = times[lo], times[hi]
    span = t1 - t0
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(span > 0, (q - t0) / np.where(span > 0, span, 1.0), 0.0)
    out = v[lo] + (v[hi] - v[lo]) * w[:, None]
    exact = times[hi] == q
    out[exact] = v[hi[exact]]
    out[q <= times[0]] = v[0]
    out[q >= times[-1]] = v[-1]
    if values.ndim == 1:
        out = out[:, 0]
    return out[0] if scalar else out


# ------------------------------------------------------------------ synchronization


def step_distances(fixes: Sequence[GnssFix], earth: EarthModel = DEFAULT_EARTH) -> list[float]:
    """Haversine distance from each fix to its successor."""
    return [haversine_distance(a.pos, b.pos, earth) for a, b in zip(fixes, fixes[1:])]


def synchronize(
    gnss: Sequence[GnssFix],
    can: Sequence[CanSample],
    imu: Sequence[ImuSample],
    *,
    features: Sequence[str] = DEFAULT_FEATURES,
    earth: EarthModel = DEFAULT_EARTH,
) -> list[SyncedFrame]:
    """Fuse the three streams on GNSS time.

    One frame per GNSS fix except the last; CAN/IMU values are interpolated
    at the fix time and the label is the distance to the next fix.
    """
    if not gnss or not can or not imu:
        raise InvalidInputError("synchronize needs non-empty GNSS, CAN and IMU streams")
    unknown = [f for f in features if f not in KNOWN_FEATURES]
    if unknown:
        raise InvalidInputError(f"unknown feature(s): {', '.join(unknown)}")
    gt = np.array([f.t for f in gnss])
    if gt.size > 1 and not np.all(np.diff(gt) > 0):
        raise InvalidInputError("GNSS timestamps must be strictly increasing")
    labeled = gt[:-1]
    can_vals = interpolate_at([s.t for s in can], [(s.speed, s.steering_angle) for s in can], labeled)
    imu_vals = interpolate_at([s.t for s in imu], [s.accel_forward for s in imu], labeled)
    dists = step_distances(gnss, earth)

    columns = {
        "can_speed": can_vals[:, 0] if labeled.size else np.empty(0),
        "steering": can_vals[:, 1] if labeled.size else np.empty(0),
        "accel_fwd": imu_vals,
        "gnss_speed": np.array([f.speed for f in gnss[:-1]]),
        "prev_distance": np.array([0.0] + dists[:-1]) if dists else np.empty(0),
    }
    table = [columns[name] for name in features]
    return [
        SyncedFrame(float(labeled[k]), tuple(float(col[k]) for col in table), dists[k])
        for k in range(labeled.size)
    ]


# ------------------------------------------------------------------ normalization


def frames_to_arrays(frames: Sequence[SyncedFrame]) -> tuple[np.ndarray, np.ndarray]:
    """Stack frames into a feature matrix (N, F) and a label vector (N,)."""
    if not frames:
        return np.empty((0, 0)), np.empty(0)
    x = np.array([fr.features for fr in frames], dtype=np.float64)
    y = np.array([fr.label_distance for fr in frames], dtype=np.float64)
    return x, y


def fit_norm(frames: Sequence[SyncedFrame], train_count: int,
             feature_names: Sequence[str] = DEFAULT_FEATURES) -> NormStats:
    """Fit min/max statistics on ``frames[:train_count]``."""
    if train_count < 2 or train_count > len(frames):
        raise InvalidInputError(f"train_count must be in [2, {len(frames)}], got {train_count}")
    x, y = frames_to_arrays(frames[:train_count])
    if x.shape[1] != len(feature_names):
        raise InvalidInputError(f"frames carry {x.shape[1]} features, names list has {len(feature_names)}")
    lo, hi = x.min(axis=0), x.max(axis=0)
    for name, a, b in zip(feature_names, lo, hi):
        if not b > a:
            raise DegenerateFeatureError(name)
    if not y.max() > y.min():
        raise DegenerateFeatureError(LABEL)
    return NormStats(
        feature_names=tuple(feature_names),
        feature_min=tuple(float(v) for v in lo),
        feature_max=tuple(float(v) for v in hi),
        label_min=float(y.min()),
        label_max=float(y.max()),
    )


def normalize_arrays(x: np.ndarray, y: np.ndarray | None, stats: NormStats):
    lo = np.asarray(stats.feature_min)
    span = np.asarray(stats.feature_max) - lo
    xn = (x - lo) / span
    if y is None:
        return xn, None
    return xn, (y - stats.label_min) / stats.label_span


def apply_norm(frames: Sequence[SyncedFrame], stats: NormStats) -> list[SyncedFrame]:
    """Scale features and labels to [0, 1] with ``stats``; no clipping."""
    if not frames:
        return []
    x, y = frames_to_arrays(frames)
    if x.shape[1] != len(stats.feature_names):
        raise InvalidInputError("frame width does not match normalization statistics")
    xn, yn = normalize_arrays(x, y, stats)
    return [
        SyncedFrame(fr.t, tuple(float(v) for v in row), float(lab))
        for fr, row, lab in zip(frames, xn, yn)
    ]


def invert_norm(value, stats: NormStats, which: str | int = LABEL):
    """Map a normalized value back to original units.

    ``which`` is ``"label_distance"`` (default), a feature name, or a feature index.
    """
    if which == LABEL:
        lo, hi = stats.label_min, stats.label_max
    else:
        i = stats.feature_names.index(which) if isinstance(which, str) else int(which)
        lo, hi = stats.feature_min[i], stats.feature_max[i]
    if np.ndim(value) == 0:
        return float(value) * (hi - lo) + lo
    return np.asarray(value, dtype=np.float64) * (hi - lo) + lo


# ------------------------------------------------------------------ split


def split(frames: Sequence[SyncedFrame], n_train: int | None = None,
          n_val: int | None = None) -> tuple[list[SyncedFrame], list[SyncedFrame]]:
    """Chronological train/validation split.

    With no sizes given, inputs of at least 5987 frames split 4500/1487 and
    shorter inputs keep the same train fraction. With only ``n_train`` given,
    validation is the remainder.
    """
    n = len(frames)
    if n_train is None and n_val is None:
        if n >= DEFAULT_TRAIN_SIZE + DEFAULT_VAL_SIZE:
            n_train, n_val = DEFAULT_TRAIN_SIZE, DEFAULT_VAL_SIZE
        else:
            n_train = round(n * DEFAULT_TRAIN_SIZE / (DEFAULT_TRAIN_SIZE + DEFAULT_VAL_SIZE))
    if n_train is None or n_train < 1:
        raise InvalidInputError(f"insufficient frames for a train split: n_train={n_train}")
    if n_val is None:
        n_val = n - n_train
    if n_val < 0 or n_train + n_val > n:
        raise InvalidInputError(f"insufficient frames: need {n_train}+{n_val}, have {n}")
    frames = list(frames)
    return frames[:n_train], frames[n_train:n_train + n_val]
