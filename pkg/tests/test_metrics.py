"""Metric oracles: accuracy, Mann-Whitney AUC, Cohen's kappa, Pearson r."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neopain.errors import (DegenerateMarginals, LengthMismatch, SingleClass,
                            ZeroVariance)
from neopain.metrics import accuracy, auc, cohen_kappa, pearson


def pairwise_auc_oracle(scores, labels):
    """Exhaustive pair comparison: P(pain score > no-pain score), ties half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


class TestAccuracy:
    def test_identical(self):
        assert accuracy([1, 0, 1], [1, 0, 1]) == 1.0

    def test_complement(self):
        assert accuracy([1, 0, 1], [0, 1, 0]) == 0.0

    def test_three_of_four(self):
        assert accuracy([1, 0, 1, 1], [1, 0, 1, 0]) == 0.75

    def test_string_labels_accepted(self):
        assert accuracy(["pain", "no_pain"], [1, 0]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            accuracy([1, 0], [1])


class TestAuc:
    def test_worked_example(self):
        assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)

    def test_perfect_separation(self):
        assert auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0

    def test_all_ties(self):
        assert auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5

    def test_single_class_rejected(self):
        with pytest.raises(SingleClass):
            auc([0.1, 0.9], [1, 1])

    @settings(max_examples=100, deadline=None)
    @given(st.data())
    def test_matches_exhaustive_pairwise_oracle(self, data):
        n = data.draw(st.integers(2, 500))
        rng = np.random.default_rng(data.draw(st.integers(0, 2 ** 31)))
        scores = np.round(rng.random(n), 2)  # rounding forces some ties
        labels = rng.integers(0, 2, n)
        if np.unique(labels).size < 2:
            labels[0], labels[1] = 0, 1
        assert auc(scores, labels) == pytest.approx(
            pairwise_auc_oracle(scores, labels), abs=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2 ** 31))
    def test_invariant_under_monotone_transform(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.random(40)
        labels = rng.integers(0, 2, 40)
        if np.unique(labels).size < 2:
            labels[0], labels[1] = 0, 1
        base = auc(scores, labels)
        # strictly increasing maps preserve all pairwise orderings
        assert auc(np.exp(3 * scores), labels) == pytest.approx(base, abs=1e-12)
        assert auc(2 * scores - 7, labels) == pytest.approx(base, abs=1e-12)


class TestCohenKappa:
    def test_perfect_agreement(self):
        assert cohen_kappa([1, 0, 1, 0], [1, 0, 1, 0]) == 1.0

    def test_worked_example(self):
        # p_o = 0.75, p_e = 0.5 -> kappa = 0.5
        assert cohen_kappa([1, 1, 0, 0], [1, 0, 0, 0]) == pytest.approx(0.5)

    def test_independent_raters_near_zero(self):
        rng = np.random.default_rng(0)
        n = 100_000
        r1 = rng.integers(0, 2, n)
        r2 = rng.integers(0, 2, n)
        assert abs(cohen_kappa(r1, r2)) < 0.05

    def test_degenerate_marginals_rejected(self):
        with pytest.raises(DegenerateMarginals):
            cohen_kappa([1, 1, 1], [1, 1, 1])


class TestPearson:
    def test_perfect_linear(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)

    def test_perfect_anticorrelation(self):
        assert pearson([1, 2, 3], [-1, -2, -3]) == pytest.approx(-1.0)

    def test_worked_example(self):
        assert pearson([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)

    def test_zero_variance_rejected(self):
        with pytest.raises(ZeroVariance):
            pearson([1, 1, 1], [1, 2, 3])

    def test_matches_hand_formula(self):
        rng = np.random.default_rng(3)
        x, y = rng.random(50), rng.random(50)
        xc, yc = x - x.mean(), y - y.mean()
        expect = (xc * yc).sum() / np.sqrt((xc ** 2).sum() * (yc ** 2).sum())
        assert pearson(x, y) == pytest.approx(expect, abs=1e-12)
