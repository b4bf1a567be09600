"""Sequence windows and the recurrent pain classifier.

Two LSTM layers (16 units, tanh activation, hard-sigmoid recurrent
activation), two ReLU dense layers of 16 units, and a sigmoid output head.
Supports frame-level prediction over sliding 16-frame windows and
video-level prediction over whole sequences.
"""

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import (EmptyDataset, EmptyVideo, FeatureLengthMismatch,
                     MissingFile, ParseError, TooFewFrames)
from .optim import Adam, AdamConfig
from .summary import ModelSummary

FEATURE_LENGTH = 720


@dataclass
class SequenceWindow:
    features: np.ndarray  # (length, F)
    label: int
    start_index: int
    subject_id: Optional[str] = None


@dataclass
class FramePrediction:
    frame_index: int
    confidence: Optional[float]
    label: Optional[str]  # "pain" | "no_pain" | None during warm-up
    warmup: bool


def make_windows(features, labels, length=16, stride=1, subject_id=None):
    """Sliding windows over per-frame features; each labeled by its last frame."""
    features = np.asarray(features)
    labels = np.asarray(labels)
    if length < 1 or stride < 1:
        raise ValueError("length and stride must be >= 1")
    if features.shape[0] != labels.shape[0]:
        raise FeatureLengthMismatch("feature/label counts differ")
    n = features.shape[0]
    windows = []
    for start in range(0, n - length + 1, stride):
        windows.append(SequenceWindow(features[start:start + length],
                                      int(labels[start + length - 1]),
                                      start, subject_id))
    return windows


@dataclass
class TemporalSpec:
    input_size: int = FEATURE_LENGTH
    units: int = 16
    dense_units: int = 16
    output_dim: int = 1  # 1-unit sigmoid default; 2 mirrors the table text


def temporal_model_summary(spec=None):
    spec = spec or TemporalSpec()
    f, u, d, o = spec.input_size, spec.units, spec.dense_units, spec.output_dim
    s = ModelSummary("temporal model")
    s.add("lstm_1", 4 * ((f + u) * u + u))
    s.add("lstm_2", 4 * ((u + u) * u + u))
    s.add("dense_1", u * d + d)
    s.add("dense_2", d * d + d)
    s.add("output", d * o + o)
    return s


def _hs_grad(a):
    # hard-sigmoid derivative recovered from the post-activation value
    return np.where((a > 0.0) & (a < 1.0), 0.2, 0.0)


def _lstm_forward_batch(x, wx, wh, b):
    """Batched LSTM forward. x: (B, T, F) -> h (B, T, U) plus caches."""
    bsz, t_steps, feat = x.shape
    units = wh.shape[0]
    xw = x.reshape(bsz * t_steps, feat) @ wx
    xw = xw.reshape(bsz, t_steps, 4 * units) + b
    h_seq = np.empty((bsz, t_steps, units))
    c_seq = np.empty((bsz, t_steps, units))
    gates = np.empty((bsz, t_steps, 4 * units))
    h = np.zeros((bsz, units))
    c = np.zeros((bsz, units))
    for t in range(t_steps):
        z = xw[:, t] + h @ wh
        i = np.clip(0.2 * z[:, :units] + 0.5, 0.0, 1.0)
        f = np.clip(0.2 * z[:, units:2 * units] + 0.5, 0.0, 1.0)
        g = np.tanh(z[:, 2 * units:3 * units])
        o = np.clip(0.2 * z[:, 3 * units:] + 0.5, 0.0, 1.0)
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[:, t, :units] = i
        gates[:, t, units:2 * units] = f
        gates[:, t, 2 * units:3 * units] = g
        gates[:, t, 3 * units:] = o
        h_seq[:, t] = h
        c_seq[:, t] = c
    return h_seq, (x, gates, c_seq, h_seq)


def _lstm_backward_batch(dh_out, cache, wx, wh):
    """Backprop through time. dh_out: (B, T, U) gradient on the h sequence."""
    x, gates, c_seq, h_seq = cache
    bsz, t_steps, feat = x.shape
    units = wh.shape[0]
    dz_all = np.empty((bsz, t_steps, 4 * units))
    dwh = np.zeros_like(wh)
    dh_rec = np.zeros((bsz, units))
    dc = np.zeros((bsz, units))
    for t in range(t_steps - 1, -1, -1):
        i = gates[:, t, :units]
        f = gates[:, t, units:2 * units]
        g = gates[:, t, 2 * units:3 * units]
        o = gates[:, t, 3 * units:]
        tc = np.tanh(c_seq[:, t])
        c_prev = c_seq[:, t - 1] if t > 0 else np.zeros((bsz, units))
        h_prev = h_seq[:, t - 1] if t > 0 else np.zeros((bsz, units))
        dh = dh_out[:, t] + dh_rec
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dz = np.concatenate([di * _hs_grad(i), df * _hs_grad(f),
                             dg * (1.0 - g * g), do * _hs_grad(o)], axis=1)
        dz_all[:, t] = dz
        dwh += h_prev.T @ dz
        dh_rec = dz @ wh.T
        dc = dc * f
    dz_flat = dz_all.reshape(bsz * t_steps, 4 * units)
    dwx = x.reshape(bsz * t_steps, feat).T @ dz_flat
    db = dz_flat.sum(axis=0)
    dx = (dz_flat @ wx.T).reshape(bsz, t_steps, feat)
    return dx, dwx, dwh, db


class TemporalModel:
    def __init__(self, spec=None, seed=0, params=None):
        self.spec = spec or TemporalSpec()
        if params is not None:
            self.params = params
            return
        rng = np.random.default_rng(seed)
        f, u, d, o = (self.spec.input_size, self.spec.units,
                      self.spec.dense_units, self.spec.output_dim)
        def glorot(n_in, n_out):
            lim = np.sqrt(6.0 / (n_in + n_out))
            return rng.uniform(-lim, lim, (n_in, n_out))
        self.params = {
            "lstm1_wx": glorot(f, 4 * u),
            "lstm1_wh": glorot(u, 4 * u),
            "lstm1_b": np.zeros(4 * u),
            "lstm2_wx": glorot(u, 4 * u),
            "lstm2_wh": glorot(u, 4 * u),
            "lstm2_b": np.zeros(4 * u),
            "d1_w": glorot(u, d),
            "d1_b": np.zeros(d),
            "d2_w": glorot(d, d),
            "d2_b": np.zeros(d),
            "out_w": glorot(d, o),
            "out_b": np.zeros(o),
        }
        # unit forget-gate bias stabilizes early training
        self.params["lstm1_b"][u:2 * u] = 1.0
        self.params["lstm2_b"][u:2 * u] = 1.0

    def count_params(self):
        return temporal_model_summary(self.spec).total_params

    def _check_features(self, features):
        if features.shape[-1] != self.spec.input_size:
            raise FeatureLengthMismatch(
                f"feature length {features.shape[-1]}, want {self.spec.input_size}")

    def forward(self, features):
        """Single sequence (T, F) -> pain confidence in (0, 1)."""
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise EmptyVideo("sequence must be (T, F) with T >= 1")
        self._check_features(x)
        p = self.params
        h1, _, _ = kernels.lstm_forward(x, p["lstm1_wx"], p["lstm1_wh"], p["lstm1_b"])
        h2, _, _ = kernels.lstm_forward(h1, p["lstm2_wx"], p["lstm2_wh"], p["lstm2_b"])
        return float(self._head(h2[-1][None])[0])

    def _head(self, h_last):
        p = self.params
        d1 = np.maximum(h_last @ p["d1_w"] + p["d1_b"], 0.0)
        d2 = np.maximum(d1 @ p["d2_w"] + p["d2_b"], 0.0)
        z = d2 @ p["out_w"] + p["out_b"]
        return 1.0 / (1.0 + np.exp(-z[:, -1]))

    def forward_batch(self, x):
        """x: (B, T, F) -> confidences (B,), cache for backward."""
        x = np.asarray(x, dtype=np.float64)
        self._check_features(x)
        p = self.params
        h1, cache1 = _lstm_forward_batch(x, p["lstm1_wx"], p["lstm1_wh"], p["lstm1_b"])
        h2, cache2 = _lstm_forward_batch(h1, p["lstm2_wx"], p["lstm2_wh"], p["lstm2_b"])
        h_last = h2[:, -1]
        d1a = h_last @ p["d1_w"] + p["d1_b"]
        d1 = np.maximum(d1a, 0.0)
        d2a = d1 @ p["d2_w"] + p["d2_b"]
        d2 = np.maximum(d2a, 0.0)
        z = d2 @ p["out_w"] + p["out_b"]
        conf = 1.0 / (1.0 + np.exp(-z[:, -1]))
        return conf, (cache1, cache2, h2.shape, h_last, d1a, d1, d2a, d2, conf)

    def loss_and_grads(self, x, labels, sample_weight=None):
        """Binary cross-entropy on the sigmoid confidence; grads for all params."""
        conf, cache = self.forward_batch(x)
        cache1, cache2, h2_shape, h_last, d1a, d1, d2a, d2, _ = cache
        y = np.asarray(labels, dtype=np.float64)
        n = y.size
        if sample_weight is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.asarray(sample_weight, dtype=np.float64)
            w = w / w.sum()
        eps = 1e-12
        loss = float(-(w * (y * np.log(conf + eps)
                            + (1.0 - y) * np.log(1.0 - conf + eps))).sum())
        p = self.params
        o = self.spec.output_dim
        dz = np.zeros((n, o))
        dz[:, -1] = (conf - y) * w
        grads = {"out_w": d2.T @ dz, "out_b": dz.sum(axis=0)}
        dd2 = dz @ p["out_w"].T
        dd2[d2a <= 0.0] = 0.0
        grads["d2_w"] = d1.T @ dd2
        grads["d2_b"] = dd2.sum(axis=0)
        dd1 = dd2 @ p["d2_w"].T
        dd1[d1a <= 0.0] = 0.0
        grads["d1_w"] = h_last.T @ dd1
        grads["d1_b"] = dd1.sum(axis=0)
        dh2 = np.zeros(h2_shape)
        dh2[:, -1] = dd1 @ p["d1_w"].T
        dh1, grads["lstm2_wx"], grads["lstm2_wh"], grads["lstm2_b"] = \
            _lstm_backward_batch(dh2, cache2, p["lstm2_wx"], p["lstm2_wh"])
        _, grads["lstm1_wx"], grads["lstm1_wh"], grads["lstm1_b"] = \
            _lstm_backward_batch(dh1, cache1, p["lstm1_wx"], p["lstm1_wh"])
        return loss, grads, conf


def temporal_forward(features, model):
    """Confidence for one SequenceWindow/VideoSequence feature matrix."""
    feats = getattr(features, "features", features)
    return model.forward(feats)


def train_temporal(sequences, labels, config=None, epochs=20, seed=0,
                   spec=None, model=None, class_weight=None):
    """Train on sequences (list of (T, F) arrays, equal-length batched).

    Returns (model, history). Sequences of differing lengths are grouped so
    each batch is homogeneous in length.
    """
    config = config or AdamConfig()
    config.validate()
    labels = np.asarray(labels, dtype=np.float64)
    if len(sequences) == 0:
        raise EmptyDataset("no training sequences")
    if len(sequences) != labels.size:
        raise FeatureLengthMismatch("sequence/label counts differ")
    seqs = [np.asarray(s, dtype=np.float64) for s in sequences]
    feat = seqs[0].shape[1]
    for s in seqs:
        if s.ndim != 2 or s.shape[1] != feat:
            raise FeatureLengthMismatch("inconsistent feature length across sequences")
    if model is None:
        model = TemporalModel(spec or TemporalSpec(input_size=feat), seed=seed)
    model._check_features(seqs[0])
    weights = None
    if class_weight == "balanced":
        y_int = labels.astype(np.intp)
        counts = np.bincount(y_int, minlength=2).astype(np.float64)
        counts[counts == 0] = 1.0
        weights = (labels.size / (2.0 * counts))[y_int]
    opt = Adam(model.params, config)
    rng = np.random.default_rng(seed)
    by_len = {}
    for idx, s in enumerate(seqs):
        by_len.setdefault(s.shape[0], []).append(idx)
    history = []
    n = labels.size
    for _ in range(epochs):
        total_loss = 0.0
        correct = 0
        order = []
        for idxs in by_len.values():
            idxs = np.asarray(idxs)
            rng.shuffle(idxs)
            for start in range(0, idxs.size, config.batch_size):
                order.append(idxs[start:start + config.batch_size])
        rng.shuffle(order)
        for sel in order:
            x = np.stack([seqs[i] for i in sel])
            sw = None if weights is None else weights[sel]
            loss, grads, conf = model.loss_and_grads(x, labels[sel], sample_weight=sw)
            opt.step(model.params, grads)
            total_loss += loss * sel.size
            correct += int(((conf > 0.5).astype(np.float64) == labels[sel]).sum())
        history.append({"loss": total_loss / n, "accuracy": correct / n})
    return model, history


def predict_frame_level(features, model, window_length=16, stride=1):
    """Per-frame predictions over sliding windows; first window_length-1 frames
    are warm-up and carry no prediction."""
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if n < window_length:
        raise TooFewFrames(f"{n} frames < window length {window_length}")
    preds = [FramePrediction(i, None, None, True) for i in range(window_length - 1)]
    for start in range(0, n - window_length + 1, stride):
        conf = model.forward(features[start:start + window_length])
        label = "pain" if conf > 0.5 else "no_pain"
        preds.append(FramePrediction(start + window_length - 1, conf, label, False))
    return preds


def predict_video_level(features, model):
    """Whole-sequence prediction -> (label, confidence); ties go to no_pain."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] < 1:
        raise EmptyVideo("video has no frames")
    conf = model.forward(features)
    return ("pain" if conf > 0.5 else "no_pain", conf)


# --- feature cache -----------------------------------------------------------


def write_feature_cache(stem, features, subject_id, period, label):
    """Per-video cache: <stem>.bin (float32 LE, N x F row-major) + <stem>.hdr."""
    features = np.ascontiguousarray(features, dtype="<f4")
    n, feat = features.shape
    tmp = stem + ".bin.tmp"
    with open(tmp, "wb") as fh:
        fh.write(features.tobytes())
    os.replace(tmp, stem + ".bin")
    hdr = (f"subject {subject_id}\nperiod {period}\nframes {n}\n"
           f"features {feat}\nlabel {label}\n")
    tmp = stem + ".hdr.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(hdr)
    os.replace(tmp, stem + ".hdr")


def read_feature_cache(stem):
    """Returns (features (N, F) float32, subject_id, period, label)."""
    hdr_path = stem + ".hdr"
    bin_path = stem + ".bin"
    if not os.path.isfile(hdr_path) or not os.path.isfile(bin_path):
        raise MissingFile(f"feature cache incomplete at {stem}")
    meta = {}
    with open(hdr_path, encoding="utf-8") as fh:
        for no, ln in enumerate(fh, start=1):
            if not ln.strip():
                continue
            parts = ln.split(None, 1)
            if len(parts) != 2:
                raise ParseError(f"bad header line {ln!r}", line=no)
            meta[parts[0]] = parts[1].strip()
    n = int(meta["frames"])
    feat = int(meta["features"])
    data = np.fromfile(bin_path, dtype="<f4")
    if data.size != n * feat:
        raise ParseError(f"{bin_path}: expected {n * feat} floats, got {data.size}")
    return (data.reshape(n, feat), meta["subject"], meta["period"], meta["label"])
