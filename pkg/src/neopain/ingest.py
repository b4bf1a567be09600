"""Video decoding, resampling, period segmentation, and label loading."""

import enum
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (BadRate, DuplicateRow, EmptyVideo, MarkerOutOfRange,
                     MissingFile, ParseError, ScoreOutOfRange, UnsortedMarkers)

MANIFEST_HEADER = "subject,period,video,rater,face,body,vital,cry"


class RecordingPeriod(enum.Enum):
    T0 = "baseline"
    T1 = "preparation"
    T2 = "painful procedure"
    T3 = "post-procedure 1"
    T4 = "post-procedure 2"
    T5 = "post-procedure 3"
    T6 = "post-procedure 4"
    T7 = "post-procedure 5"

    @property
    def tag(self):
        return self.name

    @property
    def description(self):
        return self.value

    @classmethod
    def from_tag(cls, tag):
        try:
            return cls[tag]
        except KeyError:
            raise ParseError(f"unknown period tag {tag!r}") from None


PAIN_PERIOD = RecordingPeriod.T2


@dataclass
class VideoClip:
    subject_id: str
    frames: np.ndarray  # (N, H, W, 3) RGB
    fps: float
    period: Optional[RecordingPeriod] = None

    def __post_init__(self):
        if self.fps <= 0:
            raise BadRate(f"fps must be > 0, got {self.fps}")
        if len(self.frames) == 0:
            raise EmptyVideo(f"clip for {self.subject_id} has no frames")

    @property
    def duration_s(self):
        return len(self.frames) / self.fps


@dataclass
class NipsAssessment:
    face: int
    body: int
    vital: int
    cry: int
    rater_id: str = ""

    def __post_init__(self):
        for name in ("face", "body", "vital"):
            if getattr(self, name) not in (0, 1):
                raise ScoreOutOfRange(f"{name} score must be 0 or 1")
        if self.cry not in (0, 1, 2):
            raise ScoreOutOfRange("cry score must be 0, 1, or 2")


@dataclass(frozen=True)
class PainLabel:
    value: str  # "no_pain" | "pain"
    source_total: int

    @property
    def is_pain(self):
        return self.value == "pain"


def score_nips(a: NipsAssessment):
    """Total NIPS score and category (no_pain <= 2, moderate 3-4, severe > 4)."""
    total = a.face + a.body + a.vital + a.cry
    if total <= 2:
        category = "no_pain"
    elif total <= 4:
        category = "moderate"
    else:
        category = "severe"
    return total, category


def to_binary_label(total: int) -> PainLabel:
    """NIPS total -> binary label; moderate and severe both map to pain."""
    if not 0 <= total <= 5:
        raise ScoreOutOfRange(f"NIPS total {total} outside [0, 5]")
    return PainLabel("pain" if total >= 3 else "no_pain", total)


def resample_video(source: VideoClip, target_fps: float) -> VideoClip:
    """Nearest-timestamp resampling to target_fps.

    Output frame count is floor(duration_s * target_fps); output frame k is
    the source frame nearest to timestamp k / target_fps.
    """
    if target_fps <= 0:
        raise BadRate(f"target_fps must be > 0, got {target_fps}")
    n = len(source.frames)
    if n == 0:
        raise EmptyVideo("source video has no frames")
    count = int(np.floor(source.duration_s * target_fps))
    if count < 1:
        raise EmptyVideo("video too short for the requested rate")
    times = np.arange(count) / target_fps
    idx = np.clip(np.rint(times * source.fps).astype(int), 0, n - 1)
    frames = np.asarray(source.frames)[idx]
    return VideoClip(source.subject_id, frames, target_fps, source.period)


def segment_periods(recording: VideoClip, markers):
    """Split a recording at (timestamp, RecordingPeriod) markers.

    Segment i covers [marker_i, marker_{i+1}) (the last runs to the end);
    frame j belongs to the segment containing timestamp j / fps.
    """
    if not markers:
        raise MarkerOutOfRange("no markers given")
    times = [t for t, _ in markers]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise UnsortedMarkers(f"marker timestamps not increasing: {times}")
    duration = recording.duration_s
    if times[0] < 0 or times[-1] >= duration:
        raise MarkerOutOfRange(
            f"markers must lie in [0, {duration}); got {times}")
    frames = np.asarray(recording.frames)
    n = len(frames)
    bounds = [int(np.ceil(t * recording.fps - 1e-9)) for t in times] + [n]
    out = []
    for (start, end), (_, period) in zip(zip(bounds, bounds[1:]), markers):
        if end <= start:
            raise MarkerOutOfRange(f"segment for {period.tag} contains no frames")
        out.append((period, VideoClip(recording.subject_id,
                                      frames[start:end], recording.fps, period)))
    return out


@dataclass
class ManifestRow:
    subject_id: str
    period: RecordingPeriod
    video_path: str
    assessment: NipsAssessment


@dataclass
class LabelManifest:
    path: str
    rows: list = field(default_factory=list)

    def subjects(self):
        return sorted({r.subject_id for r in self.rows})

    def by_video(self):
        """Group rows as {(subject, period_tag, video_path): [rows]}."""
        grouped = {}
        for r in self.rows:
            grouped.setdefault((r.subject_id, r.period.tag, r.video_path),
                               []).append(r)
        return grouped


def load_manifest(path, check_paths=True) -> LabelManifest:
    """Parse the comma-separated label manifest.

    Header: subject,period,video,rater,face,body,vital,cry. One row per
    rater assessment; duplicate (subject, period, rater) tuples rejected.
    """
    if not os.path.isfile(path):
        raise MissingFile(f"manifest not found: {path}")
    manifest = LabelManifest(path)
    seen = set()
    root = os.path.dirname(os.path.abspath(path))
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != MANIFEST_HEADER:
        raise ParseError(f"expected header {MANIFEST_HEADER!r}", line=1)
    for no, ln in enumerate(lines[1:], start=2):
        if not ln.strip() or ln.lstrip().startswith("#"):
            continue
        parts = [p.strip() for p in ln.split(",")]
        if len(parts) != 8:
            raise ParseError(f"expected 8 fields, got {len(parts)}", line=no)
        subject, period_tag, video, rater = parts[:4]
        if not subject:
            raise ParseError("empty subject id", line=no)
        try:
            scores = [int(p) for p in parts[4:]]
        except ValueError:
            raise ParseError(f"non-integer score in {parts[4:]}", line=no) from None
        period = RecordingPeriod.from_tag(period_tag)
        key = (subject, period_tag, rater)
        if key in seen:
            raise DuplicateRow(f"line {no}: duplicate (subject, period, rater) {key}")
        seen.add(key)
        if check_paths:
            resolved = video if os.path.isabs(video) else os.path.join(root, video)
            if not os.path.exists(resolved):
                raise MissingFile(f"line {no}: video path not found: {resolved}")
        manifest.rows.append(ManifestRow(
            subject, period, video,
            NipsAssessment(*scores, rater_id=rater)))
    return manifest


def load_frames_dir(path, fps, subject_id="", period=None) -> VideoClip:
    """Load a directory of image frames (sorted by filename) as an RGB clip."""
    import cv2

    if not os.path.isdir(path):
        raise MissingFile(f"frame directory not found: {path}")
    names = sorted(n for n in os.listdir(path)
                   if n.lower().endswith((".png", ".jpg", ".jpeg", ".bmp")))
    if not names:
        raise EmptyVideo(f"no frames in {path}")
    frames = []
    for name in names:
        img = cv2.imread(os.path.join(path, name), cv2.IMREAD_COLOR)
        if img is None:
            raise ParseError(f"unreadable frame {name} in {path}")
        frames.append(cv2.cvtColor(img, cv2.COLOR_BGR2RGB))
    return VideoClip(subject_id, np.stack(frames), fps, period)
