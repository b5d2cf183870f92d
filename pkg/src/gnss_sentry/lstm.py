"""Single-layer LSTM regressor for next-step traveled distance.

Forward pass, backpropagation through time, Adam, mini-batch training,
evaluation and model persistence, all in float64 numpy.

Cell recurrences (no peepholes), per step t with zero initial state::

    i = sigmoid(W_i x + U_i h + b_i)      f = sigmoid(W_f x + U_f h + b_f)
    o = sigmoid(W_o x + U_o h + b_o)      g = tanh(W_g x + U_g h + b_g)
    c = f * c + i * g                     h = o * tanh(c)

and the prediction is ``w_out . h_W + b_out`` on the last hidden state.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from gnss_sentry.errors import FormatError, InvalidInputError, VersionError
from gnss_sentry.streams import (
    DEFAULT_FEATURES,
    LABEL,
    NormStats,
    SyncedFrame,
    fit_norm,
    frames_to_arrays,
    invert_norm,
    normalize_arrays,
)

GATES = ("i", "f", "o", "g")
PARAM_NAMES = (
    *(f"W_{g}" for g in GATES),
    *(f"U_{g}" for g in GATES),
    *(f"b_{g}" for g in GATES),
    "w_out",
    "b_out",
)
MODEL_FORMAT = "gnss-sentry-lstm"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    hidden_size: int = 50
    epochs: int = 100
    batch_size: int = 50
    learning_rate: float = 0.01
    window_len: int = 10
    seed: int = 42
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self) -> None:
        for name in ("hidden_size", "batch_size", "window_len"):
            if int(getattr(self, name)) < 1:
                raise InvalidInputError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise InvalidInputError("epochs must be >= 0")
        if not self.learning_rate > 0 or not self.adam_eps > 0:
            raise InvalidInputError("learning_rate and adam_eps must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise InvalidInputError("Adam betas must lie in [0, 1)")


@dataclass
class LstmParams:
    """All learnable tensors. ``W_*`` are H x F, ``U_*`` H x H, ``b_*`` and ``w_out`` length H."""

    W_i: np.ndarray
    W_f: np.ndarray
    W_o: np.ndarray
    W_g: np.ndarray
    U_i: np.ndarray
    U_f: np.ndarray
    U_o: np.ndarray
    U_g: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray  # 0-d

    def __post_init__(self) -> None:
        for name in PARAM_NAMES:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))

    @property
    def hidden_size(self) -> int:
        return self.W_i.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_i.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "LstmParams":
        return LstmParams(**{k: v.copy() for k, v in self.tensors().items()})

    def map(self, fn) -> "LstmParams":
        return LstmParams(**{k: fn(v) for k, v in self.tensors().items()})

    def validate(self) -> None:
        h, f = self.hidden_size, self.input_size
        expected = expected_shapes(h, f)
        for name, arr in self.tensors().items():
            if arr.shape != expected[name]:
                raise InvalidInputError(f"{name} has shape {arr.shape}, expected {expected[name]}")
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} contains non-finite values")

    @classmethod
    def zeros(cls, hidden_size: int, input_size: int) -> "LstmParams":
        return cls(**{k: np.zeros(s) for k, s in expected_shapes(hidden_size, input_size).items()})

    @classmethod
    def initialize(cls, hidden_size: int, input_size: int, rng: np.random.Generator) -> "LstmParams":
        """Uniform(+-1/sqrt(H)) weights, forget bias 1, other biases 0."""
        bound = 1.0 / math.sqrt(hidden_size)
        p = cls.zeros(hidden_size, input_size)
        for name in PARAM_NAMES:
            if name[0] in "WU" or name == "w_out":
                setattr(p, name, rng.uniform(-bound, bound, size=getattr(p, name).shape))
        p.b_f = np.ones(hidden_size)
        return p


def expected_shapes(hidden_size: int, input_size: int) -> dict[str, tuple[int, ...]]:
    h, f = hidden_size, input_size
    shapes: dict[str, tuple[int, ...]] = {}
    for g in GATES:
        shapes[f"W_{g}"] = (h, f)
    for g in GATES:
        shapes[f"U_{g}"] = (h, h)
    for g in GATES:
        shapes[f"b_{g}"] = (h,)
    shapes["w_out"] = (h,)
    shapes["b_out"] = ()
    return {name: shapes[name] for name in PARAM_NAMES}


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _stack(p: LstmParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    wx = np.concatenate([p.W_i.T, p.W_f.T, p.W_o.T, p.W_g.T], axis=1)  # F x 4H
    uh = np.concatenate([p.U_i.T, p.U_f.T, p.U_o.T, p.U_g.T], axis=1)  # H x 4H
    b = np.concatenate([p.b_i, p.b_f, p.b_o, p.b_g])
    return wx, uh, b


@dataclass
class ForwardCache:
    params: LstmParams
    x: np.ndarray        # B x W x F
    h: np.ndarray        # (W+1) x B x H, h[0] = 0
    c: np.ndarray        # (W+1) x B x H, c[0] = 0
    gates: np.ndarray    # W x B x 4H, post-activation [i f o g]
    single: bool


def _as_batch(params: LstmParams, windows: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(windows, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[1] < 1 or x.shape[2] != params.input_size:
        raise InvalidInputError(
            f"window shape {np.shape(windows)} incompatible with input size {params.input_size}"
        )
    return x, single


def forward(params: LstmParams, windows: np.ndarray):
    """Run the cell over a W x F window (or a B x W x F batch).

    Returns:
        ``(prediction, cache)``; prediction is a float for a single window and
        a length-B array for a batch, in normalized label units.
    """
    x, single = _as_batch(params, windows)
    nb, nw, _ = x.shape
    hs = params.hidden_size
    wx, uh, b = _stack(params)
    xw = x @ wx + b
    h = np.zeros((nw + 1, nb, hs))
    c = np.zeros((nw + 1, nb, hs))
    gates = np.empty((nw, nb, 4 * hs))
    for t in range(nw):
        z = xw[:, t] + h[t] @ uh
        a = gates[t]
        a[:, : 3 * hs] = _sigmoid(z[:, : 3 * hs])
        a[:, 3 * hs:] = np.tanh(z[:, 3 * hs:])
        i, f, o, g = a[:, :hs], a[:, hs:2 * hs], a[:, 2 * hs:3 * hs], a[:, 3 * hs:]
        c[t + 1] = f * c[t] + i * g
        h[t + 1] = o * np.tanh(c[t + 1])
    y = h[nw] @ params.w_out + params.b_out
    cache = ForwardCache(params, x, h, c, gates, single)
    return (float(y[0]) if single else y), cache


def backward(params: LstmParams, windows: np.ndarray, truth, cache: ForwardCache) -> LstmParams:
    """Gradient of the batch-mean absolute error with respect to every parameter.

    The subgradient of ``|r|`` at ``r = 0`` is taken as 0.
    """
    if cache.params is not params:
        raise InvalidInputError("cache was produced with different parameters")
    x, _ = _as_batch(params, windows)
    if x.shape != cache.x.shape or not np.array_equal(x, cache.x):
        raise InvalidInputError("cache was produced for a different window")
    truth = np.atleast_1d(np.asarray(truth, dtype=np.float64))
    nb, nw, _ = x.shape
    if truth.shape != (nb,):
        raise InvalidInputError(f"truth has shape {truth.shape}, expected ({nb},)")
    hs = params.hidden_size
    _, uh, _ = _stack(params)

    pred = cache.h[nw] @ params.w_out + params.b_out
    dy = np.sign(pred - truth) / nb

    grads = LstmParams.zeros(hs, params.input_size)
    grads.w_out = cache.h[nw].T @ dy
    grads.b_out = np.asarray(dy.sum())
    dwx = np.zeros((params.input_size, 4 * hs))
    duh = np.zeros((hs, 4 * hs))
    db = np.zeros(4 * hs)

    dh = dy[:, None] * params.w_out[None, :]
    dc = np.zeros((nb, hs))
    dz = np.empty((nb, 4 * hs))
    for t in reversed(range(nw)):
        a = cache.gates[t]
        i, f, o, g = a[:, :hs], a[:, hs:2 * hs], a[:, 2 * hs:3 * hs], a[:, 3 * hs:]
        tc = np.tanh(cache.c[t + 1])
        dc = dc + dh * o * (1.0 - tc * tc)
        dz[:, :hs] = dc * g * i * (1.0 - i)
        dz[:, hs:2 * hs] = dc * cache.c[t] * f * (1.0 - f)
        dz[:, 2 * hs:3 * hs] = dh * tc * o * (1.0 - o)
        dz[:, 3 * hs:] = dc * i * (1.0 - g * g)
        dwx += x[:, t].T @ dz
        duh += cache.h[t].T @ dz
        db += dz.sum(axis=0)
        dh = dz @ uh.T
        dc = dc * f

    for k, gate in enumerate(GATES):
        cols = slice(k * hs, (k + 1) * hs)
        setattr(grads, f"W_{gate}", dwx[:, cols].T.copy())
        setattr(grads, f"U_{gate}", duh[:, cols].T.copy())
        setattr(grads, f"b_{gate}", db[cols].copy())
    return grads


# ------------------------------------------------------------------ metrics


def _paired(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64).ravel()
    g = np.asarray(truth, dtype=np.float64).ravel()
    if p.shape != g.shape:
        raise InvalidInputError(f"length mismatch: {p.size} predictions vs {g.size} targets")
    if p.size == 0:
        raise InvalidInputError("metrics need at least one sample")
    return p, g


def mae(pred, truth) -> float:
    """Mean absolute error."""
    p, g = _paired(pred, truth)
    return float(np.mean(np.abs(p - g)))


def rmse(pred, truth, *, paper_literal: bool = False) -> float:
    """Root mean square error.

    ``paper_literal=True`` computes ``sqrt(sum(r**2)) / N`` instead of the
    standard ``sqrt(sum(r**2) / N)``.
    """
    p, g = _paired(pred, truth)
    sq = float(np.sum((p - g) ** 2))
    if paper_literal:
        return math.sqrt(sq) / p.size
    return math.sqrt(sq / p.size)


# ------------------------------------------------------------------ Adam


@dataclass
class AdamState:
    m: LstmParams
    v: LstmParams
    step: int = 0

    @classmethod
    def fresh(cls, params: LstmParams) -> "AdamState":
        return cls(params.map(np.zeros_like), params.map(np.zeros_like), 0)


def adam_step(params: LstmParams, grads: LstmParams, state: AdamState,
              config: TrainConfig) -> tuple[LstmParams, AdamState]:
    """One bias-corrected Adam update; returns new params and state."""
    b1, b2, eps, lr = config.adam_beta1, config.adam_beta2, config.adam_eps, config.learning_rate
    step = state.step + 1
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    new_p, new_m, new_v = {}, {}, {}
    for name in PARAM_NAMES:
        p = getattr(params, name)
        g = getattr(grads, name)
        if g.shape != p.shape or getattr(state.m, name).shape != p.shape:
            raise InvalidInputError(f"shape mismatch for {name}")
        m = b1 * getattr(state.m, name) + (1.0 - b1) * g
        v = b2 * getattr(state.v, name) + (1.0 - b2) * g * g
        new_p[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_m[name] = m
        new_v[name] = v
    return LstmParams(**new_p), AdamState(LstmParams(**new_m), LstmParams(**new_v), step)


# ------------------------------------------------------------------ model


@dataclass
class LstmModel:
    params: LstmParams
    norm: NormStats
    config: TrainConfig
    calibration: dict[str, float] = field(default_factory=dict)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.norm.feature_names

    @property
    def window_len(self) -> int:
        return self.config.window_len

    def normalized_features(self, frames: Sequence[SyncedFrame]) -> np.ndarray:
        x, _ = frames_to_arrays(frames)
        if x.size and x.shape[1] != len(self.feature_names):
            raise InvalidInputError(
                f"frames carry {x.shape[1]} features, model expects {len(self.feature_names)}"
            )
        xn, _ = normalize_arrays(x, None, self.norm)
        return xn

    def predict_window(self, window_norm: np.ndarray) -> float:
        """Distance in meters predicted for one normalized W x F window."""
        pred, _ = forward(self.params, window_norm)
        return float(invert_norm(pred, self.norm, LABEL))

    def predict_frames(self, frames: Sequence[SyncedFrame]) -> tuple[np.ndarray, np.ndarray]:
        """Per-window predictions in meters.

        Returns the frame indices that have a full window behind them and the
        matching predictions. Each window is evaluated on its own so results
        do not depend on batch composition.
        """
        xn = self.normalized_features(frames)
        w = self.window_len
        idx = np.arange(w - 1, len(frames))
        preds = np.array([self.predict_window(xn[j - w + 1:j + 1]) for j in idx], dtype=np.float64)
        return idx, preds


def make_windows(xn: np.ndarray, yn: np.ndarray | None, window_len: int):
    """Sliding windows ending at every index >= window_len - 1."""
    n = xn.shape[0]
    if n < window_len:
        return np.empty((0, window_len, xn.shape[1] if xn.ndim == 2 else 0)), np.empty(0)
    win = np.lib.stride_tricks.sliding_window_view(xn, window_len, axis=0)  # N' x F x W
    win = np.ascontiguousarray(win.transpose(0, 2, 1))
    tgt = None if yn is None else yn[window_len - 1:]
    return win, tgt


def _batched_mae(params: LstmParams, windows: np.ndarray, targets: np.ndarray) -> float:
    if len(windows) == 0:
        return float("nan")
    pred, _ = forward(params, windows)
    return mae(pred, targets)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_mae: float
    val_mae: float


def train(
    frames_train: Sequence[SyncedFrame],
    frames_val: Sequence[SyncedFrame],
    config: TrainConfig = TrainConfig(),
    *,
    feature_names: Sequence[str] | None = None,
    norm: NormStats | None = None,
) -> tuple[LstmModel, list[EpochRecord]]:
    """Fit the LSTM with mini-batch BPTT and Adam on the MAE loss.

    Normalization is fitted on ``frames_train`` unless ``norm`` is given.
    Three-feature frames without ``feature_names`` are assumed to carry the
    default features.
    History entries hold full-pass train/validation MAE in normalized units.
    """
    if not frames_train:
        raise InvalidInputError("insufficient frames: empty training set")
    n_feat = len(frames_train[0].features)
    if feature_names is None:
        if norm is not None:
            feature_names = norm.feature_names
        elif n_feat == len(DEFAULT_FEATURES):
            feature_names = DEFAULT_FEATURES
        else:
            feature_names = tuple(f"f{k}" for k in range(n_feat))
    if norm is None:
        norm = fit_norm(frames_train, len(frames_train), feature_names)
    w = config.window_len

    xt, yt = frames_to_arrays(frames_train)
    xtn, ytn = normalize_arrays(xt, yt, norm)
    win_t, tgt_t = make_windows(xtn, ytn, w)
    if len(win_t) < config.batch_size:
        raise InvalidInputError(
            f"insufficient frames: {len(frames_train)} training frames give {len(win_t)} windows, "
            f"batch size is {config.batch_size}"
        )
    if frames_val:
        xv, yv = frames_to_arrays(frames_val)
        xvn, yvn = normalize_arrays(xv, yv, norm)
        win_v, tgt_v = make_windows(xvn, yvn, w)
    else:
        win_v, tgt_v = np.empty((0, w, n_feat)), np.empty(0)

    rng = np.random.default_rng(config.seed)
    params = LstmParams.initialize(config.hidden_size, n_feat, rng)
    state = AdamState.fresh(params)
    history: list[EpochRecord] = []
    n = len(win_t)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            xb = win_t[batch]
            _, cache = forward(params, xb)
            grads = backward(params, xb, tgt_t[batch], cache)
            params, state = adam_step(params, grads, state, config)
        history.append(EpochRecord(
            epoch,
            _batched_mae(params, win_t, tgt_t),
            _batched_mae(params, win_v, tgt_v),
        ))
    return LstmModel(params, norm, config), history


def write_history_csv(history: Sequence[EpochRecord], path: str | Path) -> None:
    lines = ["epoch,train_mae,val_mae"]
    lines += [f"{r.epoch},{r.train_mae!r},{r.val_mae!r}" for r in history]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ------------------------------------------------------------------ evaluation


@dataclass
class Evaluation:
    rmse_m: float
    mae_m: float
    max_abs_err_m: float
    min_abs_err_m: float
    t: np.ndarray
    labels_m: np.ndarray
    predictions_m: np.ndarray
    hist_edges: np.ndarray
    hist_counts: np.ndarray

    def metrics(self) -> dict[str, float | int]:
        return {
            "rmse_m": self.rmse_m,
            "mae_m": self.mae_m,
            "max_abs_err_m": self.max_abs_err_m,
            "min_abs_err_m": self.min_abs_err_m,
            "n_predictions": int(self.predictions_m.size),
        }


def error_histogram(abs_err: np.ndarray, bin_width: float = 0.005) -> tuple[np.ndarray, np.ndarray]:
    if not bin_width > 0:
        raise InvalidInputError("histogram bin width must be positive")
    top = float(np.max(abs_err)) if abs_err.size else 0.0
    nbins = max(1, int(math.floor(top / bin_width)) + 1)
    edges = np.arange(nbins + 1) * bin_width
    counts, _ = np.histogram(abs_err, bins=edges)
    return edges, counts


def evaluate(model: LstmModel, frames: Sequence[SyncedFrame], *, paper_literal: bool = False,
             bin_width: float = 0.005) -> Evaluation:
    """Prediction quality in meters over every frame with a full window."""
    if len(frames) < model.window_len + 1:
        raise InvalidInputError(
            f"insufficient frames: {len(frames)} given, need at least {model.window_len + 1}"
        )
    idx, preds = model.predict_frames(frames)
    labels = np.array([frames[j].label_distance for j in idx])
    err = np.abs(preds - labels)
    edges, counts = error_histogram(err, bin_width)
    return Evaluation(
        rmse_m=rmse(preds, labels, paper_literal=paper_literal),
        mae_m=mae(preds, labels),
        max_abs_err_m=float(err.max()),
        min_abs_err_m=float(err.min()),
        t=np.array([frames[j].t for j in idx]),
        labels_m=labels,
        predictions_m=preds,
        hist_edges=edges,
        hist_counts=counts,
    )


# ------------------------------------------------------------------ persistence


def model_to_dict(model: LstmModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": asdict(model.config),
        "norm": model.norm.to_dict(),
        "calibration": dict(model.calibration),
        "params": {k: np.asarray(v).tolist() for k, v in model.params.tensors().items()},
    }


def model_from_dict(doc: dict) -> LstmModel:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise FormatError("not a gnss-sentry model document")
    if doc.get("version") != MODEL_VERSION:
        raise VersionError(doc.get("version"), MODEL_VERSION)
    try:
        known = {f.name for f in fields(TrainConfig)}
        config = TrainConfig(**{k: v for k, v in doc["config"].items() if k in known})
        norm = NormStats.from_dict(doc["norm"])
        raw = doc["params"]
        params = LstmParams(**{name: np.asarray(raw[name], dtype=np.float64) for name in PARAM_NAMES})
        calibration = {str(k): float(v) for k, v in doc.get("calibration", {}).items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"corrupt model document: {exc}") from None
    try:
        params.validate()
    except InvalidInputError as exc:
        raise FormatError(f"corrupt model document: {exc}") from None
    if params.hidden_size != config.hidden_size or params.input_size != len(norm.feature_names):
        raise FormatError("corrupt model document: parameter shapes disagree with config/norm")
    return LstmModel(params, norm, config, calibration)


def save_model(model: LstmModel, path: str | Path) -> None:
    text = json.dumps(model_to_dict(model), indent=1, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_model(path: str | Path) -> LstmModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot read model {path}: {exc.strerror or exc}") from exc
    except UnicodeDecodeError:
        raise FormatError(f"model file {path} is not UTF-8 text") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"corrupt model file {path}: {exc.msg}", line=exc.lineno) from None
    return model_from_dict(doc)
