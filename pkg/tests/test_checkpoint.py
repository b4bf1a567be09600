"""Checkpoint directory format: bit-exact round trips and error paths."""

import os

import numpy as np
import pytest

from neopain.checkpoint import (FORMAT_LINE, load_checkpoint, save_checkpoint)
from neopain.errors import MissingFile, ParseError, WeightShapeMismatch


def sample_arrays(seed=0):
    rng = np.random.default_rng(seed)
    return {
        "face_w": rng.normal(size=(512, 32)).astype(np.float32),
        "face_b": np.zeros(32, dtype=np.float32),
        "out_w": rng.normal(size=(16, 2)).astype(np.float32),
    }


class TestRoundTrip:
    def test_bit_exact_float32(self, tmp_path):
        path = str(tmp_path / "ckpt")
        arrays = sample_arrays()
        save_checkpoint(path, arrays, means=(0.1, 0.2, 0.3),
                        pretrain_tag="imagenet")
        got, means, tag = load_checkpoint(path)
        assert list(got) == list(arrays)
        for k in arrays:
            assert got[k].shape == arrays[k].shape
            assert got[k].tobytes() == arrays[k].tobytes()
        assert means == (0.1, 0.2, 0.3)
        assert tag == "imagenet"

    def test_float64_input_rounds_to_float32(self, tmp_path):
        path = str(tmp_path / "ckpt")
        arr = {"w": np.array([[1.0 / 3.0]], dtype=np.float64)}
        save_checkpoint(path, arr)
        got, _, _ = load_checkpoint(path)
        assert got["w"].dtype == np.float32
        assert got["w"][0, 0] == np.float32(1.0 / 3.0)

    def test_save_load_save_is_stable(self, tmp_path):
        a = str(tmp_path / "a")
        b = str(tmp_path / "b")
        save_checkpoint(a, sample_arrays())
        arrays, means, tag = load_checkpoint(a)
        save_checkpoint(b, arrays, means=means, pretrain_tag=tag)
        for name in ("manifest", "weights.bin"):
            with open(os.path.join(a, name), "rb") as fa, \
                 open(os.path.join(b, name), "rb") as fb:
                assert fa.read() == fb.read()


class TestLayout:
    def test_manifest_lines(self, tmp_path):
        path = str(tmp_path / "ckpt")
        save_checkpoint(path, sample_arrays(), means=(0.0, 0.0, 0.0))
        with open(os.path.join(path, "manifest"), encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        assert lines[0] == FORMAT_LINE
        assert lines[1] == "pretrain_tag stand_in"
        assert lines[2] == "means 0.0 0.0 0.0"
        assert lines[3] == "layer face_w 512,32 0"
        assert lines[4] == f"layer face_b 32 {512 * 32 * 4}"
        assert lines[5] == f"layer out_w 16,2 {(512 * 32 + 32) * 4}"

    def test_weights_bin_is_le_float32_concatenation(self, tmp_path):
        path = str(tmp_path / "ckpt")
        arrays = sample_arrays()
        save_checkpoint(path, arrays)
        raw = np.fromfile(os.path.join(path, "weights.bin"), dtype="<f4")
        expected = np.concatenate([a.reshape(-1) for a in arrays.values()])
        assert raw.tobytes() == expected.astype("<f4").tobytes()

    def test_no_tmp_files_left(self, tmp_path):
        path = tmp_path / "ckpt"
        save_checkpoint(str(path), sample_arrays())
        assert sorted(p.name for p in path.iterdir()) == ["manifest",
                                                          "weights.bin"]


class TestErrors:
    def test_missing_directory(self, tmp_path):
        with pytest.raises(MissingFile):
            load_checkpoint(str(tmp_path / "absent"))

    def test_missing_weights(self, tmp_path):
        path = tmp_path / "ckpt"
        save_checkpoint(str(path), sample_arrays())
        os.remove(path / "weights.bin")
        with pytest.raises(MissingFile):
            load_checkpoint(str(path))

    def test_bad_format_line(self, tmp_path):
        path = tmp_path / "ckpt"
        save_checkpoint(str(path), sample_arrays())
        manifest = path / "manifest"
        text = manifest.read_text().replace(FORMAT_LINE, "format other 9")
        manifest.write_text(text)
        with pytest.raises(ParseError) as exc:
            load_checkpoint(str(path))
        assert exc.value.line == 1

    def test_unknown_entry(self, tmp_path):
        path = tmp_path / "ckpt"
        save_checkpoint(str(path), sample_arrays())
        manifest = path / "manifest"
        manifest.write_text(manifest.read_text() + "extra stuff\n")
        with pytest.raises(ParseError):
            load_checkpoint(str(path))

    def test_truncated_weights(self, tmp_path):
        path = tmp_path / "ckpt"
        save_checkpoint(str(path), sample_arrays())
        weights = path / "weights.bin"
        weights.write_bytes(weights.read_bytes()[:-8])
        with pytest.raises(WeightShapeMismatch):
            load_checkpoint(str(path))

    def test_malformed_layer_line(self, tmp_path):
        path = tmp_path / "ckpt"
        save_checkpoint(str(path), sample_arrays())
        manifest = path / "manifest"
        text = manifest.read_text().replace("layer face_b 32",
                                            "layer face_b thirty-two")
        manifest.write_text(text)
        with pytest.raises(ParseError):
            load_checkpoint(str(path))
