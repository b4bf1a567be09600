"""Bounding-box utilities: IoU, NMS, best-box selection, crop/resize.

Detectors themselves live behind the DetectorAdapter contract; pretrained
face/body models are external inputs and never trained here.
"""

from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from .errors import DegenerateBox, ParseError

CROP_SIZE = 224
CLASS_TAGS = ("face", "body")


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float
    confidence: float = 1.0
    class_tag: str = "face"

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise DegenerateBox(f"box extent must be positive, got {self.w}x{self.h}")
        if not 0.0 <= self.confidence <= 1.0:
            raise DegenerateBox(f"confidence {self.confidence} outside [0, 1]")
        if self.class_tag not in CLASS_TAGS:
            raise DegenerateBox(f"unknown class tag {self.class_tag!r}")

    @property
    def area(self):
        return self.w * self.h

    def clamped(self, frame_w, frame_h):
        """Intersect with the frame; returns None if nothing remains."""
        x0 = max(self.x, 0.0)
        y0 = max(self.y, 0.0)
        x1 = min(self.x + self.w, frame_w)
        y1 = min(self.y + self.h, frame_h)
        if x1 <= x0 or y1 <= y0:
            return None
        return BoundingBox(x0, y0, x1 - x0, y1 - y0, self.confidence, self.class_tag)


@dataclass
class DetectionResult:
    frame_index: int
    boxes: list = field(default_factory=list)

    def __post_init__(self):
        if self.frame_index < 0:
            raise ParseError(f"negative frame index {self.frame_index}")


@dataclass
class RegionCrop:
    pixels: np.ndarray  # (224, 224, 3) in [0, 1]
    source_box: BoundingBox
    channel_tag: str
    degraded: bool = False

    def __post_init__(self):
        if self.pixels.shape != (CROP_SIZE, CROP_SIZE, 3):
            raise DegenerateBox(f"crop shape {self.pixels.shape}, want (224, 224, 3)")


class DetectorAdapter(Protocol):
    """Contract for external detectors (one class_tag per adapter)."""

    class_tag: str

    def detect(self, frame) -> DetectionResult: ...


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 for disjoint boxes."""
    x0 = max(a.x, b.x)
    y0 = max(a.y, b.y)
    x1 = min(a.x + a.w, b.x + b.w)
    y1 = min(a.y + a.h, b.y + b.h)
    if x1 <= x0 or y1 <= y0:
        return 0.0
    inter = (x1 - x0) * (y1 - y0)
    return inter / (a.area + b.area - inter)


def nms(boxes, conf_thresh=0.5, iou_thresh=0.45):
    """Greedy non-maximum suppression by descending confidence, per class."""
    kept = []
    candidates = sorted((b for b in boxes if b.confidence >= conf_thresh),
                        key=lambda b: -b.confidence)
    for box in candidates:
        if all(iou(box, k) <= iou_thresh for k in kept
               if k.class_tag == box.class_tag):
            kept.append(box)
    return kept


def select_region(result: DetectionResult, class_tag,
                  fallback: Optional[BoundingBox] = None,
                  frame_shape: Optional[tuple] = None):
    """Pick the box to crop: best detection, else fallback, else whole frame.

    Returns (box, degraded); degraded is True whenever no detection of the
    requested class was available.
    """
    matches = [b for b in result.boxes if b.class_tag == class_tag]
    if matches:
        return max(matches, key=lambda b: b.confidence), False
    if fallback is not None:
        return fallback, True
    if frame_shape is None:
        raise DegenerateBox("no detection, no fallback, and no frame shape")
    h, w = frame_shape[:2]
    return BoundingBox(0, 0, w, h, 0.0, class_tag), True


def crop_resize(frame, box: BoundingBox, channel_tag, degraded=False) -> RegionCrop:
    """Bilinear crop-and-resize to 224x224 with pixel values scaled to [0, 1]."""
    import cv2

    frame = np.asarray(frame)
    h, w = frame.shape[:2]
    clamped = box.clamped(w, h)
    if clamped is None:
        raise DegenerateBox(f"box {box} lies outside the {w}x{h} frame")
    x0, y0 = int(round(clamped.x)), int(round(clamped.y))
    x1 = min(int(round(clamped.x + clamped.w)), w)
    y1 = min(int(round(clamped.y + clamped.h)), h)
    if x1 <= x0 or y1 <= y0:
        raise DegenerateBox("clamped box has zero pixel area")
    region = frame[y0:y1, x0:x1]
    if region.dtype == np.uint8:
        region = region.astype(np.float32) / 255.0
    else:
        region = region.astype(np.float32)
    resized = cv2.resize(region, (CROP_SIZE, CROP_SIZE), interpolation=cv2.INTER_LINEAR)
    pixels = np.clip(resized.astype(np.float64), 0.0, 1.0)
    return RegionCrop(pixels, box, channel_tag, degraded)


# --- wire format ------------------------------------------------------------
# One line per box: `frame_index class x y w h confidence`, space-separated.


def format_detection_line(frame_index, box: BoundingBox) -> str:
    return (f"{frame_index} {box.class_tag} {box.x:g} {box.y:g} "
            f"{box.w:g} {box.h:g} {box.confidence:g}")


def parse_detection_lines(lines):
    """Parse wire-format lines into DetectionResults keyed by frame index."""
    by_frame = {}
    for no, ln in enumerate(lines, start=1):
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        parts = ln.split()
        if len(parts) != 7:
            raise ParseError(f"expected 7 fields, got {len(parts)}", line=no)
        try:
            frame_index = int(parts[0])
            x, y, w, h, conf = (float(p) for p in parts[2:])
        except ValueError:
            raise ParseError(f"bad numeric field in {ln!r}", line=no) from None
        box = BoundingBox(x, y, w, h, conf, parts[1])
        by_frame.setdefault(frame_index, DetectionResult(frame_index)) \
            .boxes.append(box)
    return [by_frame[k] for k in sorted(by_frame)]


class FileDetectorAdapter:
    """Adapter over a wire-format detections file (one file per video)."""

    def __init__(self, path, class_tag):
        self.class_tag = class_tag
        with open(path, encoding="utf-8") as fh:
            results = parse_detection_lines(fh)
        self._by_frame = {r.frame_index: r for r in results}

    def detect(self, frame_index) -> DetectionResult:
        result = self._by_frame.get(frame_index, DetectionResult(frame_index))
        boxes = [b for b in result.boxes if b.class_tag == self.class_tag]
        return DetectionResult(frame_index, boxes)
