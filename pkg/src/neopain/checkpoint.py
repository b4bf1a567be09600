"""Checkpoint directory format.

A checkpoint is a directory containing:
  manifest     text: format line, pretrain_tag, normalization means, then one
               `layer <name> <d0,d1,...> <byte_offset>` line per tensor
  weights.bin  the tensors as little-endian float32, row-major, concatenated
               in manifest order

Round trips are bit-exact at float32 precision.
"""

import os

import numpy as np

from .errors import MissingFile, ParseError, WeightShapeMismatch

FORMAT_LINE = "format neopain-checkpoint 1"


def save_checkpoint(path, arrays, means=(0.0, 0.0, 0.0), pretrain_tag="stand_in"):
    """Write named tensors (insertion-ordered dict) to a checkpoint directory."""
    os.makedirs(path, exist_ok=True)
    lines = [FORMAT_LINE, f"pretrain_tag {pretrain_tag}",
             "means " + " ".join(repr(float(m)) for m in means)]
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        shape = ",".join(str(d) for d in np.asarray(arr).shape)
        lines.append(f"layer {name} {shape} {offset}")
        blobs.append(data)
        offset += len(data)
    _atomic_write(os.path.join(path, "weights.bin"), b"".join(blobs))
    _atomic_write(os.path.join(path, "manifest"),
                  ("\n".join(lines) + "\n").encode())


def load_checkpoint(path):
    """Read a checkpoint directory -> (arrays, means, pretrain_tag)."""
    manifest = os.path.join(path, "manifest")
    weights = os.path.join(path, "weights.bin")
    if not os.path.isfile(manifest) or not os.path.isfile(weights):
        raise MissingFile(f"checkpoint incomplete at {path}")
    with open(manifest, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != FORMAT_LINE:
        raise ParseError(f"bad checkpoint format line in {manifest}", line=1)
    means = (0.0, 0.0, 0.0)
    pretrain_tag = "stand_in"
    entries = []
    for no, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if parts[0] == "pretrain_tag":
            pretrain_tag = parts[1]
        elif parts[0] == "means":
            means = tuple(float(p) for p in parts[1:])
        elif parts[0] == "layer":
            try:
                shape = tuple(int(d) for d in parts[2].split(","))
                entries.append((parts[1], shape, int(parts[3])))
            except (IndexError, ValueError) as exc:
                raise ParseError(f"bad layer line: {ln!r}", line=no) from exc
        else:
            raise ParseError(f"unknown manifest entry {parts[0]!r}", line=no)
    blob = np.fromfile(weights, dtype="<f4")
    arrays = {}
    for name, shape, offset in entries:
        count = int(np.prod(shape)) if shape else 1
        start = offset // 4
        if start + count > blob.size:
            raise WeightShapeMismatch(f"{name}: weights.bin too short")
        arrays[name] = blob[start:start + count].reshape(shape).copy()
    return arrays, means, pretrain_tag


def _atomic_write(path, data):
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
