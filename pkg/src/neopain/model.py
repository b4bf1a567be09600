"""Multi-channel fusion network: frozen convolutional backbones, per-branch
reduction heads, shared branch, merge layer, and frame-level classifier.

The backbone follows the 13-convolution VGG16 feature-extractor layout and is
always frozen; only the head on top of the two backbones is trainable.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (EmptyDataset, ShapeMismatch, SingleClassDataset,
                     UnnormalizedInput, WeightShapeMismatch)
from .optim import Adam, AdamConfig
from .summary import ModelSummary

# Conv channel layout of the VGG16 feature extractor; "M" marks a 2x2 max-pool.
VGG16_LAYOUT = (64, 64, "M", 128, 128, "M", 256, 256, 256, "M",
                512, 512, 512, "M", 512, 512, 512, "M")

CROP_SIZE = 224
FUSED_LENGTH = 720


def _conv_names():
    names = []
    block, idx = 1, 1
    for entry in VGG16_LAYOUT:
        if entry == "M":
            block += 1
            idx = 1
        else:
            names.append(f"conv{block}_{idx}")
            idx += 1
    return names


CONV_NAMES = _conv_names()


@dataclass
class BackboneSpec:
    channel_scale: int = 1  # divisor on conv widths; 1 = full VGG16, 8 = reduced stand-in
    frozen: bool = True
    pretrain_tag: str = "stand_in"  # face_weights | generic_weights | stand_in

    def channels(self):
        return [c if c == "M" else max(1, c // self.channel_scale)
                for c in VGG16_LAYOUT]

    @property
    def out_channels(self):
        return [c for c in self.channels() if c != "M"][-1]


class Backbone:
    """Frozen convolutional feature extractor: 224x224x3 -> 7x7xC map."""

    def __init__(self, spec, params, means=(0.0, 0.0, 0.0)):
        self.spec = spec
        self.params = params
        self.means = np.asarray(means, dtype=np.float64)
        self._check_shapes()

    def _check_shapes(self):
        cin = 3
        for name, c in zip(CONV_NAMES, [c for c in self.spec.channels() if c != "M"]):
            w = self.params.get(name + "_w")
            b = self.params.get(name + "_b")
            if w is None or b is None:
                raise WeightShapeMismatch(f"missing weights for {name}")
            if w.shape != (3, 3, cin, c) or b.shape != (c,):
                raise WeightShapeMismatch(
                    f"{name}: got {w.shape}/{b.shape}, want (3,3,{cin},{c})/({c},)")
            cin = c

    @classmethod
    def stand_in(cls, channel_scale=1, seed=0):
        """Seeded He-initialized backbone standing in for pretrained weights."""
        spec = BackboneSpec(channel_scale=channel_scale, frozen=True,
                            pretrain_tag="stand_in")
        rng = np.random.default_rng(seed)
        params = {}
        cin = 3
        for name, c in zip(CONV_NAMES, [c for c in spec.channels() if c != "M"]):
            std = np.sqrt(2.0 / (9.0 * cin))
            params[name + "_w"] = rng.normal(0.0, std, size=(3, 3, cin, c))
            params[name + "_b"] = np.zeros(c)
            cin = c
        return cls(spec, params)

    def forward(self, crop):
        """224x224x3 pixels in [0, 1] -> 7x7xC feature map."""
        x = np.asarray(crop, dtype=np.float64)
        if x.shape != (CROP_SIZE, CROP_SIZE, 3):
            raise ShapeMismatch(f"crop shape {x.shape}, want (224, 224, 3)")
        if x.min() < 0.0 or x.max() > 1.0:
            raise UnnormalizedInput("pixel values must lie in [0, 1]")
        x = x - self.means
        for name, c in zip(_layer_iter(), self.spec.channels()):
            if c == "M":
                x = kernels.maxpool2d(x, 2, 2)
            else:
                x = kernels.conv2d_3x3(x, self.params[name + "_w"],
                                       self.params[name + "_b"])
                np.maximum(x, 0.0, out=x)
        return x

    def forward_batch(self, crops):
        """(N, 224, 224, 3) crops in [0, 1] -> (N, 7, 7, C) float32 maps.

        Batched float32 path for bulk feature extraction; the convolution
        lowers to im2col + GEMM.
        """
        x = np.asarray(crops, dtype=np.float32)
        if x.ndim != 4 or x.shape[1:] != (CROP_SIZE, CROP_SIZE, 3):
            raise ShapeMismatch(f"crops shape {x.shape}, want (N, 224, 224, 3)")
        if x.min() < 0.0 or x.max() > 1.0:
            raise UnnormalizedInput("pixel values must lie in [0, 1]")
        x = x - self.means.astype(np.float32)
        # Channels-first internally: im2col copies stay contiguous.
        x = np.ascontiguousarray(x.transpose(0, 3, 1, 2))
        for name, c in zip(_layer_iter(), self.spec.channels()):
            if c == "M":
                x = kernels.maxpool2d_cf(x, 2, 2)
            else:
                x = kernels.conv2d_3x3_cf(x, self.params[name + "_w"],
                                          self.params[name + "_b"])
                np.maximum(x, 0.0, out=x)
        return np.ascontiguousarray(x.transpose(0, 2, 3, 1))

    def state_bytes(self):
        """Concatenated raw bytes of all parameters, for frozen-ness checks."""
        return b"".join(self.params[k].tobytes() for k in sorted(self.params))


def _layer_iter():
    it = iter(CONV_NAMES)
    for entry in VGG16_LAYOUT:
        yield "pool" if entry == "M" else next(it)


def extract_backbone_features(crop, backbone):
    """RegionCrop pixels through a backbone; returns the 7x7xC feature map."""
    pixels = getattr(crop, "pixels", crop)
    out = backbone.forward(pixels)
    side = CROP_SIZE // 32
    if out.shape[:2] != (side, side):
        raise ShapeMismatch(f"unexpected feature map shape {out.shape}")
    return out


def extract_backbone_features_batch(crops, backbone):
    """Stack of crops (N, 224, 224, 3) -> (N, 7, 7, C) float32 maps."""
    return backbone.forward_batch(crops)


def merge(face, body, shared):
    """Concatenate flattened face (288), body (288), shared (144) features.

    Accepts single samples (3,3,32)/(3,3,16) or batches with a leading axis.
    """
    face = np.asarray(face, dtype=np.float64)
    body = np.asarray(body, dtype=np.float64)
    shared = np.asarray(shared, dtype=np.float64)
    single = face.ndim == 3
    if single:
        face, body, shared = face[None], body[None], shared[None]
    if face.shape[1:] != (3, 3, 32) or body.shape[1:] != (3, 3, 32):
        raise ShapeMismatch("branch features must be (3, 3, 32)")
    if shared.shape[1:] != (3, 3, 16):
        raise ShapeMismatch("shared features must be (3, 3, 16)")
    n = face.shape[0]
    v = np.concatenate([face.reshape(n, -1), body.reshape(n, -1),
                        shared.reshape(n, -1)], axis=1)
    return v[0] if single else v


def _maxpool_argmax(x, size, stride):
    """Forward max-pool keeping argmax for gradient routing. x: (B, H, W, C)."""
    win = np.lib.stride_tricks.sliding_window_view(x, (size, size), axis=(1, 2))
    win = win[:, ::stride, ::stride]  # (B, oh, ow, C, size, size)
    flat = win.reshape(win.shape[:4] + (size * size,))
    idx = flat.argmax(axis=4)
    return np.take_along_axis(flat, idx[..., None], axis=4)[..., 0], idx


def _maxpool_backward(dout, idx, in_shape, size, stride):
    grad = np.zeros(in_shape)
    b, oh, ow, c = dout.shape
    bi, wi, wj, ci = np.indices((b, oh, ow, c), sparse=False)
    di, dj = np.divmod(idx, size)
    np.add.at(grad, (bi, wi * stride + di, wj * stride + dj, ci), dout)
    return grad


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class FusionHead:
    """Trainable head: branch reducers, shared branch, merge, classifier."""

    BRANCH_UNITS = 32
    SHARED_UNITS = 16
    DENSE_UNITS = 16
    N_CLASSES = 2

    def __init__(self, in_channels=512, seed=0, params=None):
        self.in_channels = in_channels
        if params is not None:
            self.params = params
        else:
            rng = np.random.default_rng(seed)
            c, bu, su, du = in_channels, self.BRANCH_UNITS, self.SHARED_UNITS, self.DENSE_UNITS
            self.params = {
                "face_w": rng.normal(0, np.sqrt(2.0 / c), (c, bu)),
                "face_b": np.zeros(bu),
                "body_w": rng.normal(0, np.sqrt(2.0 / c), (c, bu)),
                "body_b": np.zeros(bu),
                "shared_w": rng.normal(0, np.sqrt(2.0 / (2 * bu)), (2 * bu, su)),
                "shared_b": np.zeros(su),
                "dense_w": rng.normal(0, np.sqrt(2.0 / FUSED_LENGTH), (FUSED_LENGTH, du)),
                "dense_b": np.zeros(du),
                "out_w": rng.normal(0, np.sqrt(2.0 / du), (du, self.N_CLASSES)),
                "out_b": np.zeros(self.N_CLASSES),
            }

    # --- forward pieces ---------------------------------------------------

    def branch_reduce(self, fmap, channel):
        """7x7xC feature map -> 3x3x32 branch feature (single sample)."""
        p, _ = self._branch(np.asarray(fmap, dtype=np.float64)[None], channel)[:2]
        return p[0]

    def shared_fuse(self, face, body):
        """Two 3x3x32 branch features -> 3x3x16 shared feature."""
        face = np.asarray(face, dtype=np.float64)
        body = np.asarray(body, dtype=np.float64)
        if face.shape != (3, 3, 32) or body.shape != (3, 3, 32):
            raise ShapeMismatch("branch features must be (3, 3, 32)")
        cat = np.concatenate([face, body], axis=2).reshape(9, 2 * self.BRANCH_UNITS)
        s = np.maximum(cat @ self.params["shared_w"] + self.params["shared_b"], 0.0)
        return s.reshape(3, 3, self.SHARED_UNITS)

    def classify(self, fused):
        """720-vector(s) -> softmax probability pair(s) (no_pain, pain)."""
        v = np.asarray(fused, dtype=np.float64)
        single = v.ndim == 1
        if single:
            v = v[None]
        if v.shape[1] != FUSED_LENGTH:
            raise ShapeMismatch(f"fused vector length {v.shape[1]}, want {FUSED_LENGTH}")
        d = np.maximum(v @ self.params["dense_w"] + self.params["dense_b"], 0.0)
        p = _softmax(d @ self.params["out_w"] + self.params["out_b"])
        return p[0] if single else p

    def _branch(self, maps, channel):
        if maps.shape[1:] != (7, 7, self.in_channels):
            raise ShapeMismatch(
                f"feature maps {maps.shape[1:]}, want (7, 7, {self.in_channels})")
        n = maps.shape[0]
        a = maps.reshape(n, 49, self.in_channels) @ self.params[channel + "_w"] \
            + self.params[channel + "_b"]
        r = np.maximum(a, 0.0).reshape(n, 7, 7, self.BRANCH_UNITS)
        p, idx = _maxpool_argmax(r, 3, 2)
        return p, a, idx

    def _forward(self, face_maps, body_maps):
        face_maps = np.asarray(face_maps, dtype=np.float64)
        body_maps = np.asarray(body_maps, dtype=np.float64)
        pf, af, idxf = self._branch(face_maps, "face")
        pb, ab, idxb = self._branch(body_maps, "body")
        n = pf.shape[0]
        cat = np.concatenate([pf, pb], axis=3).reshape(n, 9, 2 * self.BRANCH_UNITS)
        sa = cat @ self.params["shared_w"] + self.params["shared_b"]
        s = np.maximum(sa, 0.0)
        v = np.concatenate([pf.reshape(n, -1), pb.reshape(n, -1),
                            s.reshape(n, -1)], axis=1)
        da = v @ self.params["dense_w"] + self.params["dense_b"]
        d = np.maximum(da, 0.0)
        logits = d @ self.params["out_w"] + self.params["out_b"]
        probs = _softmax(logits)
        cache = (face_maps, body_maps, af, idxf, ab, idxb, cat, sa, v, da, d, probs)
        return probs, cache

    def features(self, face_maps, body_maps):
        """Merge-layer output: (N, 720) fused vectors."""
        _, cache = self._forward(face_maps, body_maps)
        return cache[8]

    def predict_proba(self, face_maps, body_maps):
        probs, _ = self._forward(face_maps, body_maps)
        return probs

    # --- backward ----------------------------------------------------------

    def loss_and_grads(self, face_maps, body_maps, labels, sample_weight=None):
        """Cross-entropy loss and gradients for all head parameters."""
        probs, cache = self._forward(face_maps, body_maps)
        (face_maps, body_maps, af, idxf, ab, idxb, cat, sa, v, da, d, _) = cache
        n = probs.shape[0]
        labels = np.asarray(labels, dtype=np.intp)
        if sample_weight is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.asarray(sample_weight, dtype=np.float64)
            w = w / w.sum()
        eps = 1e-12
        loss = float(-(w * np.log(probs[np.arange(n), labels] + eps)).sum())

        dlogits = probs.copy()
        dlogits[np.arange(n), labels] -= 1.0
        dlogits *= w[:, None]

        grads = {}
        grads["out_w"] = d.T @ dlogits
        grads["out_b"] = dlogits.sum(axis=0)
        dd = dlogits @ self.params["out_w"].T
        dd[da <= 0.0] = 0.0
        grads["dense_w"] = v.T @ dd
        grads["dense_b"] = dd.sum(axis=0)
        dv = dd @ self.params["dense_w"].T

        bu, su = self.BRANCH_UNITS, self.SHARED_UNITS
        dpf = dv[:, :9 * bu].reshape(n, 3, 3, bu).copy()
        dpb = dv[:, 9 * bu:18 * bu].reshape(n, 3, 3, bu).copy()
        ds = dv[:, 18 * bu:].reshape(n, 9, su).copy()
        ds[sa <= 0.0] = 0.0
        grads["shared_w"] = cat.reshape(-1, 2 * bu).T @ ds.reshape(-1, su)
        grads["shared_b"] = ds.sum(axis=(0, 1))
        dcat = (ds @ self.params["shared_w"].T).reshape(n, 3, 3, 2 * bu)
        dpf += dcat[..., :bu]
        dpb += dcat[..., bu:]

        for channel, dp, a, idx, maps in (("face", dpf, af, idxf, face_maps),
                                          ("body", dpb, ab, idxb, body_maps)):
            dr = _maxpool_backward(dp, idx, (n, 7, 7, bu), 3, 2)
            dact = dr.reshape(n, 49, bu)
            dact[a <= 0.0] = 0.0
            grads[channel + "_w"] = (maps.reshape(-1, self.in_channels).T
                                     @ dact.reshape(-1, bu))
            grads[channel + "_b"] = dact.sum(axis=(0, 1))
        return loss, grads, probs


def branch_reduce(fmap, head, channel="face"):
    return head.branch_reduce(fmap, channel)


def shared_fuse(face, body, head):
    return head.shared_fuse(face, body)


def classify_frame(fused, head):
    return head.classify(fused)


# --- parameter accounting ---------------------------------------------------


def backbone_summary(spec=None, prefix="backbone"):
    spec = spec or BackboneSpec()
    s = ModelSummary(f"{prefix} (frozen={spec.frozen})")
    cin = 3
    for name, c in zip(CONV_NAMES, [c for c in spec.channels() if c != "M"]):
        s.add(f"{prefix}.{name}", 9 * cin * c + c, trainable=not spec.frozen)
        cin = c
    return s


def fusion_model_summary(spec=None, branch_units=None):
    """Analytic parameter accounting for the full two-backbone fusion model."""
    spec = spec or BackboneSpec()
    c = spec.out_channels
    bu = FusionHead.BRANCH_UNITS if branch_units is None else branch_units
    su, du, nc = (FusionHead.SHARED_UNITS, FusionHead.DENSE_UNITS,
                  FusionHead.N_CLASSES)
    fused = 2 * 9 * bu + 9 * su
    s = ModelSummary("multi-channel fusion model")
    for prefix in ("face_backbone", "body_backbone"):
        for layer in backbone_summary(spec, prefix).layers:
            s.layers.append(layer)
    s.add("face_branch_dense", c * bu + bu)
    s.add("face_branch_pool", 0)
    s.add("body_branch_dense", c * bu + bu)
    s.add("body_branch_pool", 0)
    s.add("shared_dense", 2 * bu * su + su)
    s.add("merge", 0)
    s.add("dense", fused * du + du)
    s.add("classifier", du * nc + nc)
    return s


# --- training ----------------------------------------------------------------


def train_fusion_head(face_inputs, body_inputs, labels, config=None, epochs=5,
                      seed=0, head=None, backbone=None, class_weight=None):
    """Train the head on (face, body, label) triples with frozen backbones.

    Inputs are either raw 224x224x3 crops (pass `backbone`) or precomputed
    7x7xC backbone feature maps. Returns (head, history).
    """
    config = config or AdamConfig()
    config.validate()
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size == 0:
        raise EmptyDataset("no training samples")
    if backbone is not None:
        face_inputs = extract_backbone_features_batch(face_inputs, backbone)
        body_inputs = extract_backbone_features_batch(body_inputs, backbone)
    face_inputs = np.asarray(face_inputs)
    body_inputs = np.asarray(body_inputs)
    if not (face_inputs.shape[0] == body_inputs.shape[0] == labels.shape[0]):
        raise ShapeMismatch("face/body/label counts differ")
    if np.unique(labels).size < 2:
        warnings.warn("training set contains a single class; proceeding",
                      SingleClassDataset)
    if head is None:
        head = FusionHead(in_channels=face_inputs.shape[3], seed=seed)
    weights = None
    if class_weight == "balanced":
        counts = np.bincount(labels, minlength=2).astype(np.float64)
        counts[counts == 0] = 1.0
        weights = (labels.size / (2.0 * counts))[labels]
    opt = Adam(head.params, config)
    rng = np.random.default_rng(seed)
    n = labels.size
    history = []
    for _ in range(epochs):
        perm = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            sel = perm[start:start + config.batch_size]
            sw = None if weights is None else weights[sel]
            loss, grads, probs = head.loss_and_grads(
                face_inputs[sel], body_inputs[sel], labels[sel], sample_weight=sw)
            opt.step(head.params, grads)
            total_loss += loss * sel.size
            correct += int((probs.argmax(axis=1) == labels[sel]).sum())
        history.append({"loss": total_loss / n, "accuracy": correct / n})
    return head, history
