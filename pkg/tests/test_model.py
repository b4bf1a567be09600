"""Fusion model: backbone contract, merge order, head math, training rules."""

import warnings

import numpy as np
import pytest

from neopain.errors import (ShapeMismatch, SingleClassDataset,
                            UnnormalizedInput, WeightShapeMismatch)
from neopain.model import (Backbone, BackboneSpec, FusionHead,
                           backbone_summary, extract_backbone_features,
                           fusion_model_summary, merge, train_fusion_head)
from neopain.optim import AdamConfig

REDUCED = 8  # channel scale keeping the stand-in backbone cheap to run


@pytest.fixture(scope="module")
def backbone():
    return Backbone.stand_in(channel_scale=REDUCED, seed=3)


class TestParameterCounts:
    def test_single_backbone_total(self):
        assert backbone_summary(BackboneSpec()).total_params == 14_714_688

    def test_full_fusion_model_totals(self):
        s = fusion_model_summary()
        assert s.total_params == 29_474_818
        assert s.trainable_params == 45_442

    def test_head_breakdown_reconciles(self):
        # per-block formula oracle: branch affine, shared affine, classifier
        branch = 512 * 32 + 32
        shared = 64 * 16 + 16
        dense = 720 * 16 + 16
        out = 16 * 2 + 2
        assert branch == 16_416
        assert shared == 1_040
        assert dense == 11_536
        assert out == 34
        assert 2 * branch + shared + dense + out == 45_442

    def test_two_backbones_plus_head(self):
        assert 2 * 14_714_688 + 45_442 == 29_474_818


class TestBackbone:
    def test_output_shape(self, backbone):
        crop = np.random.default_rng(0).random((224, 224, 3))
        out = backbone.forward(crop)
        assert out.shape == (7, 7, backbone.spec.out_channels)
        assert backbone.spec.out_channels == 512 // REDUCED

    def test_full_scale_output_channels(self):
        assert BackboneSpec().out_channels == 512

    def test_zero_crop_zero_map(self, backbone):
        out = backbone.forward(np.zeros((224, 224, 3)))
        np.testing.assert_array_equal(out, np.zeros_like(out))

    def test_deterministic(self, backbone):
        crop = np.random.default_rng(1).random((224, 224, 3))
        a = backbone.forward(crop)
        b = backbone.forward(crop)
        assert a.tobytes() == b.tobytes()

    def test_batch_matches_single(self, backbone):
        crops = np.random.default_rng(2).random((3, 224, 224, 3)) \
            .astype(np.float32)
        batch = backbone.forward_batch(crops)
        for n in range(3):
            single = backbone.forward(crops[n])
            np.testing.assert_allclose(batch[n], single, atol=1e-4)

    def test_unnormalized_input_rejected(self, backbone):
        with pytest.raises(UnnormalizedInput):
            backbone.forward(np.full((224, 224, 3), 255.0))

    def test_wrong_shape_rejected(self, backbone):
        with pytest.raises(ShapeMismatch):
            backbone.forward(np.zeros((100, 100, 3)))

    def test_bad_weight_shapes_rejected(self, backbone):
        params = dict(backbone.params)
        params["conv1_1_w"] = np.zeros((3, 3, 3, 1))
        with pytest.raises(WeightShapeMismatch):
            Backbone(backbone.spec, params)

    def test_extract_helper(self, backbone):
        crop = np.random.default_rng(3).random((224, 224, 3))
        out = extract_backbone_features(crop, backbone)
        assert out.shape == (7, 7, backbone.spec.out_channels)


class TestMergeContract:
    def test_length_720(self):
        v = merge(np.zeros((3, 3, 32)), np.zeros((3, 3, 32)),
                  np.zeros((3, 3, 16)))
        assert v.shape == (720,)

    def test_zero_in_zero_out(self):
        v = merge(np.zeros((3, 3, 32)), np.zeros((3, 3, 32)),
                  np.zeros((3, 3, 16)))
        np.testing.assert_array_equal(v, np.zeros(720))

    def test_face_occupies_first_288_entries(self):
        v = merge(np.ones((3, 3, 32)), np.zeros((3, 3, 32)),
                  np.zeros((3, 3, 16)))
        np.testing.assert_array_equal(v[:288], np.ones(288))
        np.testing.assert_array_equal(v[288:], np.zeros(432))

    def test_flatten_order_matches_index_enumeration(self):
        # oracle: entry index = offset + i*3*C + j*C + c, row-major per block
        rng = np.random.default_rng(4)
        face = rng.normal(size=(3, 3, 32))
        body = rng.normal(size=(3, 3, 32))
        shared = rng.normal(size=(3, 3, 16))
        v = merge(face, body, shared)
        for i in range(3):
            for j in range(3):
                for c in range(32):
                    assert v[i * 96 + j * 32 + c] == face[i, j, c]
                    assert v[288 + i * 96 + j * 32 + c] == body[i, j, c]
                for c in range(16):
                    assert v[576 + i * 48 + j * 16 + c] == shared[i, j, c]

    def test_many_random_inputs_keep_length(self):
        rng = np.random.default_rng(5)
        face = rng.normal(size=(10_000, 3, 3, 32))
        body = rng.normal(size=(10_000, 3, 3, 32))
        shared = rng.normal(size=(10_000, 3, 3, 16))
        assert merge(face, body, shared).shape == (10_000, 720)

    def test_wrong_shapes_rejected(self):
        with pytest.raises(ShapeMismatch):
            merge(np.zeros((3, 3, 16)), np.zeros((3, 3, 32)),
                  np.zeros((3, 3, 16)))


class TestFusionHead:
    def test_branch_zero_propagation(self):
        head = FusionHead(in_channels=8, seed=0)
        head.params["face_b"][:] = 0.0
        out = head.branch_reduce(np.zeros((7, 7, 8)), "face")
        np.testing.assert_array_equal(out, np.zeros((3, 3, 32)))

    def test_constant_map_pools_to_preactivation_value(self):
        head = FusionHead(in_channels=8, seed=0)
        fmap = np.full((7, 7, 8), 0.3)
        pre = np.maximum(fmap[0, 0] @ head.params["face_w"]
                         + head.params["face_b"], 0.0)
        out = head.branch_reduce(fmap, "face")
        for i in range(3):
            for j in range(3):
                np.testing.assert_allclose(out[i, j], pre, atol=1e-12)

    def test_shared_swap_asymmetry(self):
        head = FusionHead(in_channels=8, seed=1)
        rng = np.random.default_rng(6)
        face, body = rng.random((3, 3, 32)), rng.random((3, 3, 32))
        a = head.shared_fuse(face, body)
        b = head.shared_fuse(body, face)
        assert not np.allclose(a, b)

    def test_classifier_zero_weights_give_half_half(self):
        head = FusionHead(in_channels=8, seed=0)
        for k in ("dense_w", "dense_b", "out_w", "out_b"):
            head.params[k][:] = 0.0
        np.testing.assert_allclose(head.classify(np.random.default_rng(7)
                                                 .random(720)), [0.5, 0.5])

    def test_probabilities_normalized(self):
        head = FusionHead(in_channels=8, seed=2)
        rng = np.random.default_rng(8)
        probs = head.predict_proba(rng.random((40, 7, 7, 8)),
                                   rng.random((40, 7, 7, 8)))
        np.testing.assert_allclose(probs.sum(axis=1), np.ones(40), atol=1e-12)
        assert (probs >= 0).all()


class TestTraining:
    def make_data(self, n=64, seed=9):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 2, n)
        face = rng.random((n, 7, 7, 8)) * 0.1
        body = rng.random((n, 7, 7, 8)) * 0.1
        # linearly separable: pain samples carry a constant channel offset
        face[labels == 1] += 0.8
        body[labels == 1] += 0.8
        return face, body, labels

    def test_frozen_backbone_bit_identical_after_training(self):
        bb = Backbone.stand_in(channel_scale=REDUCED, seed=3)
        before = bb.state_bytes()
        rng = np.random.default_rng(10)
        crops = rng.random((8, 224, 224, 3)).astype(np.float32)
        labels = np.array([0, 1] * 4)
        train_fusion_head(crops, crops, labels, backbone=bb,
                          config=AdamConfig(batch_size=4), epochs=2, seed=0)
        assert bb.state_bytes() == before

    def test_zero_learning_rate_is_fixed_point(self):
        face, body, labels = self.make_data()
        head = FusionHead(in_channels=8, seed=0)
        snapshot = {k: v.copy() for k, v in head.params.items()}
        train_fusion_head(face, body, labels, head=head,
                          config=AdamConfig(learning_rate=0.0), epochs=2,
                          seed=0)
        for k, v in head.params.items():
            np.testing.assert_array_equal(v, snapshot[k])

    def test_loss_decreases_on_separable_data(self):
        face, body, labels = self.make_data()
        _, history = train_fusion_head(
            face, body, labels, config=AdamConfig(learning_rate=0.001),
            epochs=5, seed=0)
        losses = [h["loss"] for h in history]
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_single_class_warns(self):
        face, body, _ = self.make_data()
        with pytest.warns(SingleClassDataset):
            train_fusion_head(face, body, np.zeros(64, dtype=int),
                              epochs=1, seed=0)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(11)
        head = FusionHead(in_channels=8, seed=4)
        face = rng.random((6, 7, 7, 8))
        body = rng.random((6, 7, 7, 8))
        labels = np.array([0, 1, 1, 0, 1, 0])
        _, grads, _ = head.loss_and_grads(face, body, labels)
        eps = 1e-6
        keys = sorted(head.params)
        for _ in range(20):
            k = keys[rng.integers(len(keys))]
            flat_idx = rng.integers(head.params[k].size)
            idx = np.unravel_index(flat_idx, head.params[k].shape)
            orig = head.params[k][idx]
            head.params[k][idx] = orig + eps
            up, _, _ = head.loss_and_grads(face, body, labels)
            head.params[k][idx] = orig - eps
            dn, _, _ = head.loss_and_grads(face, body, labels)
            head.params[k][idx] = orig
            numeric = (up - dn) / (2 * eps)
            analytic = grads[k][idx]
            denom = max(abs(numeric), abs(analytic), 1e-8)
            assert abs(numeric - analytic) / denom < 1e-3


def test_determinism_across_runs():
    face = np.random.default_rng(12).random((32, 7, 7, 8))
    body = np.random.default_rng(13).random((32, 7, 7, 8))
    labels = np.random.default_rng(14).integers(0, 2, 32)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingleClassDataset)
        h1, hist1 = train_fusion_head(face, body, labels, epochs=3, seed=5)
        h2, hist2 = train_fusion_head(face, body, labels, epochs=3, seed=5)
    assert hist1 == hist2
    for k in h1.params:
        assert h1.params[k].tobytes() == h2.params[k].tobytes()
