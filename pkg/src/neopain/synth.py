"""Deterministic synthetic dataset generator.

Stands in for the private NICU recordings: per-subject videos over the eight
study periods, where the painful-procedure period carries a localized
intensity signal in both the face and body regions (correlated across the two
channels) ramping in at a configurable onset frame. Two synthetic raters
provide NIPS assessments with a controllable disagreement rate.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .detect import BoundingBox, crop_resize, format_detection_line
from .errors import BadConfig
from .ingest import (MANIFEST_HEADER, NipsAssessment, RecordingPeriod,
                     score_nips, to_binary_label)

FACE_BOX = BoundingBox(60, 40, 160, 160, 0.99, "face")
BODY_BOX = BoundingBox(260, 80, 180, 240, 0.99, "body")
FRAME_H, FRAME_W = 360, 480

# NIPS (face, body, vital, cry) combinations by binary category
_NO_PAIN_COMBOS = ((0, 0, 0, 0), (1, 0, 0, 0), (0, 1, 0, 0),
                   (0, 0, 0, 1), (1, 1, 0, 0), (1, 0, 1, 0))
_PAIN_COMBOS = ((1, 1, 0, 1), (1, 1, 1, 1), (1, 1, 1, 2))


@dataclass
class SynthConfig:
    n_subjects: int = 31
    videos_per_subject: int = 1  # periods cycle T0..T7, T2 is the pain period
    fps: float = 5.0
    duration_s: float = 10.0
    seed: int = 0
    signal_strength: float = 0.8
    onset_frame: int = 10
    rater_disagreement: float = 0.1
    noise_sigma: float = 0.08

    @property
    def n_frames(self):
        return int(self.duration_s * self.fps)

    def validate(self):
        if self.n_subjects < 2:
            raise BadConfig("n_subjects must be >= 2")
        if not 1 <= self.videos_per_subject <= 8:
            raise BadConfig("videos_per_subject must be in [1, 8]")
        if self.fps <= 0 or self.duration_s <= 0:
            raise BadConfig("fps and duration_s must be positive")
        if not 0.0 <= self.signal_strength <= 1.0:
            raise BadConfig("signal_strength must lie in [0, 1]")
        if not 0.0 <= self.rater_disagreement <= 1.0:
            raise BadConfig("rater_disagreement must lie in [0, 1]")
        if not 0 <= self.onset_frame < self.n_frames:
            raise BadConfig("onset_frame must lie within the video")


@dataclass
class SynthVideo:
    subject_id: str
    period: RecordingPeriod
    seed: int
    config: SynthConfig
    assessments: tuple  # (rater1, rater2) NipsAssessment
    face_amp: np.ndarray  # per-frame face signal amplitude
    body_amp: np.ndarray
    face_center: tuple  # blob center in frame coordinates
    body_center: tuple
    blob_sigma: float

    @property
    def video_label(self):
        return to_binary_label(score_nips(self.assessments[0])[0])

    @property
    def frame_labels(self):
        # every frame inherits the period label
        return np.full(self.config.n_frames, int(self.video_label.is_pain),
                       dtype=np.intp)

    def frames(self):
        """Full frames, uint8 RGB (T, H, W, 3); bit-reproducible."""
        cfg = self.config
        t = cfg.n_frames
        rng = np.random.default_rng(self.seed)
        # quarter-resolution noise, block-upsampled: cheap but still textured
        small = rng.normal(0.5, cfg.noise_sigma,
                           size=(t, FRAME_H // 4, FRAME_W // 4, 3))
        base = small.repeat(4, axis=1).repeat(4, axis=2)
        for center, amp in ((self.face_center, self.face_amp),
                            (self.body_center, self.body_amp)):
            if amp.max() <= 0.0:
                continue
            blob = _gaussian_blob(center, self.blob_sigma)
            base += amp[:, None, None, None] * blob[None, :, :, None]
        return (np.clip(base, 0.0, 1.0) * 255.0).round().astype(np.uint8)

    def crops(self):
        """(face_crops, body_crops): (T, 224, 224, 3) float64 in [0, 1]."""
        frames = self.frames()
        face = np.stack([crop_resize(f, FACE_BOX, "face").pixels for f in frames])
        body = np.stack([crop_resize(f, BODY_BOX, "body").pixels for f in frames])
        return face, body

    def detection_lines(self):
        lines = []
        for i in range(self.config.n_frames):
            lines.append(format_detection_line(i, FACE_BOX))
            lines.append(format_detection_line(i, BODY_BOX))
        return lines


@dataclass
class SynthDataset:
    config: SynthConfig
    videos: list = field(default_factory=list)

    def subjects(self):
        return sorted({v.subject_id for v in self.videos})


def _gaussian_blob(center, sigma):
    cx, cy = center
    y = np.arange(FRAME_H, dtype=np.float64)[:, None]
    x = np.arange(FRAME_W, dtype=np.float64)[None, :]
    return np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sigma * sigma))


def _box_point(box, u, v):
    return (box.x + u * box.w, box.y + v * box.h)


def _pick_assessments(rng, pain, disagreement):
    combos = _PAIN_COMBOS if pain else _NO_PAIN_COMBOS
    first = combos[rng.integers(len(combos))]
    if rng.random() < disagreement:
        other = _NO_PAIN_COMBOS if pain else _PAIN_COMBOS
        second = other[rng.integers(len(other))]
    else:
        second = first
    return (NipsAssessment(*first, rater_id="rater1"),
            NipsAssessment(*second, rater_id="rater2"))


def generate_dataset(cfg: SynthConfig) -> SynthDataset:
    """Build the synthetic dataset; two runs with equal seeds are bit-identical."""
    cfg.validate()
    root = np.random.SeedSequence(cfg.seed)
    subject_seeds = root.spawn(cfg.n_subjects)
    ds = SynthDataset(cfg)
    t = cfg.n_frames
    steps = np.arange(t, dtype=np.float64)
    ramp = 1.0 / (1.0 + np.exp(-(steps - cfg.onset_frame) / 2.0))
    for si in range(cfg.n_subjects):
        video_seeds = subject_seeds[si].spawn(cfg.videos_per_subject)
        for vi in range(cfg.videos_per_subject):
            # periods cycle over the whole corpus, so one video in eight
            # covers the painful period regardless of videos_per_subject
            period = list(RecordingPeriod)[(si * cfg.videos_per_subject + vi) % 8]
            pain = period is RecordingPeriod.T2
            rng = np.random.default_rng(video_seeds[vi])
            assessments = _pick_assessments(rng, pain, cfg.rater_disagreement)
            face_center = _box_point(FACE_BOX, *rng.uniform(0.35, 0.65, 2))
            body_center = _box_point(BODY_BOX, *rng.uniform(0.35, 0.65, 2))
            sigma = rng.uniform(22.0, 30.0)
            if pain and cfg.signal_strength > 0.0:
                shared = 0.85 + 0.15 * rng.random(t)
                face_amp = cfg.signal_strength * ramp * shared \
                    * (0.95 + 0.05 * rng.random(t))
                body_amp = cfg.signal_strength * ramp * shared \
                    * (0.95 + 0.05 * rng.random(t))
            else:
                face_amp = np.zeros(t)
                body_amp = np.zeros(t)
            pixel_seed = int(rng.integers(2 ** 62))
            ds.videos.append(SynthVideo(
                subject_id=f"S{si:02d}", period=period, seed=pixel_seed,
                config=cfg, assessments=assessments,
                face_amp=face_amp, body_amp=body_amp,
                face_center=face_center, body_center=body_center,
                blob_sigma=sigma))
    return ds


def write_dataset(ds: SynthDataset, root):
    """Emit the manifest + frame-directory + detections layout ingest consumes."""
    import cv2

    os.makedirs(root, exist_ok=True)
    os.makedirs(os.path.join(root, "videos"), exist_ok=True)
    os.makedirs(os.path.join(root, "detections"), exist_ok=True)
    manifest_lines = [MANIFEST_HEADER]
    for video in ds.videos:
        name = f"{video.subject_id}_{video.period.tag}"
        vdir = os.path.join(root, "videos", name)
        os.makedirs(vdir, exist_ok=True)
        for i, frame in enumerate(video.frames()):
            cv2.imwrite(os.path.join(vdir, f"frame_{i:05d}.png"),
                        cv2.cvtColor(frame, cv2.COLOR_RGB2BGR))
        det_path = os.path.join(root, "detections", name + ".txt")
        _atomic_write_text(det_path, "\n".join(video.detection_lines()) + "\n")
        for a in video.assessments:
            manifest_lines.append(
                f"{video.subject_id},{video.period.tag},videos/{name},"
                f"{a.rater_id},{a.face},{a.body},{a.vital},{a.cry}")
    _atomic_write_text(os.path.join(root, "manifest.csv"),
                       "\n".join(manifest_lines) + "\n")
    return os.path.join(root, "manifest.csv")


def _atomic_write_text(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)
