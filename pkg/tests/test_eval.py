"""Leave-one-subject-out harness: splits, leakage guard, report arithmetic."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import neopain.evaluation as evaluation
from neopain.errors import (EmptyDataset, LeakageError, SingleClass,
                            TooFewSubjects)
from neopain.evaluation import (FRAME_LEVEL, VIDEO_LEVEL, EvaluationReport,
                                FoldResult, FoldSpec, VideoItem, check_leakage,
                                loso_split, run_loso)
from neopain.optim import AdamConfig

C = 4   # feature-map channels for the in-memory test corpus
T = 18  # frames per video (>= one temporal window)


def make_items(n_subjects=4, videos_per_subject=2, signal=1.0, seed=0):
    """Tiny corpus: pain videos carry a constant offset in both channels."""
    rng = np.random.default_rng(seed)
    items = []
    for s in range(n_subjects):
        for v in range(videos_per_subject):
            label = (s + v) % 2
            face = rng.random((T, 7, 7, C)) * 0.05 + label * signal * 0.9
            body = rng.random((T, 7, 7, C)) * 0.05 + label * signal * 0.9
            items.append(VideoItem(f"S{s:02d}", f"T{v}", face, body,
                                   np.full(T, label, dtype=np.intp), label))
    return items


class TestLosoSplit:
    def test_31_subjects_31_folds(self):
        subjects = [f"S{i:02d}" for i in range(31)]
        folds = loso_split(subjects)
        assert len(folds) == 31
        assert [f.held_out_subject for f in folds] == sorted(subjects)

    def test_two_subjects(self):
        folds = loso_split(["B", "A"])
        assert len(folds) == 2
        assert folds[0] == FoldSpec("A", frozenset({"B"}))

    def test_duplicates_collapse(self):
        folds = loso_split(["A", "A", "B", "B", "B"])
        assert len(folds) == 2

    def test_single_subject_rejected(self):
        with pytest.raises(TooFewSubjects):
            loso_split(["A", "A"])

    @given(st.sets(st.text(alphabet="ABCDEFGH", min_size=1, max_size=3),
                   min_size=2, max_size=12))
    @settings(max_examples=50, deadline=None)
    def test_each_fold_partitions_subjects(self, subjects):
        folds = loso_split(list(subjects))
        assert len(folds) == len(subjects)
        for f in folds:
            assert f.held_out_subject not in f.train_subjects
            assert f.train_subjects | {f.held_out_subject} == subjects


class TestLeakageGuard:
    def test_clean_fold_passes(self):
        items = make_items(3, 1)
        fold = FoldSpec("S00", frozenset({"S01", "S02"}))
        check_leakage(fold, [it for it in items if it.subject_id != "S00"])

    def test_held_out_subject_in_training_rejected(self):
        items = make_items(3, 1)
        fold = FoldSpec("S00", frozenset({"S01", "S02"}))
        with pytest.raises(LeakageError):
            check_leakage(fold, items)

    def test_run_loso_trips_on_injected_leak(self, monkeypatch):
        items = make_items(3, 2)
        real = evaluation._fold_items

        def leaky(items_, fold):
            _, test = real(items_, fold)
            return list(items_), test  # "forgets" to drop the held-out subject

        monkeypatch.setattr(evaluation, "_fold_items", leaky)
        with pytest.raises(LeakageError):
            run_loso(items, VIDEO_LEVEL, fusion_epochs=1, temporal_epochs=1)


class TestRunLoso:
    fast = dict(fusion_config=AdamConfig(learning_rate=0.01, batch_size=16),
                temporal_config=AdamConfig(learning_rate=0.01, batch_size=8),
                fusion_epochs=3, temporal_epochs=10, seed=0)

    def test_video_level_separable_corpus_is_perfect(self):
        report = run_loso(make_items(), VIDEO_LEVEL, **self.fast)
        assert len(report.folds) == 4
        assert report.mean_accuracy == 1.0
        assert report.mean_auc == 1.0
        assert report.pooled_auc == 1.0

    def test_frame_level_separable_corpus_is_perfect(self):
        report = run_loso(make_items(), FRAME_LEVEL, **self.fast)
        assert report.mean_accuracy == 1.0
        # 18 frames -> 3 windows per video, 2 videos per held-out subject
        assert all(f.n_samples == 6 for f in report.folds)

    def test_fusion_frame_stride_keeps_results(self):
        report = run_loso(make_items(), VIDEO_LEVEL, fusion_frame_stride=3,
                          **self.fast)
        assert report.mean_accuracy == 1.0

    def test_empty_rejected(self):
        with pytest.raises(EmptyDataset):
            run_loso([], VIDEO_LEVEL)

    def test_single_class_rejected(self):
        items = [it for it in make_items() if it.video_label == 0]
        with pytest.raises(SingleClass):
            run_loso(items, VIDEO_LEVEL)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            run_loso(make_items(), "bogus")


def fold(subject, confs, truths):
    confs = np.asarray(confs, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.intp)
    preds = (confs > 0.5).astype(np.intp)
    acc = float((preds == truths).mean())
    single = np.unique(truths).size < 2
    a = None
    if not single:
        pos = confs[truths == 1][:, None]
        neg = confs[truths == 0][None, :]
        a = float(((pos > neg) + 0.5 * (pos == neg)).mean())
    return FoldResult(subject, acc, a, truths.size, int(truths.sum()), single,
                      confidences=confs, truths=truths)


class TestReportArithmetic:
    def report(self):
        return EvaluationReport(mode=VIDEO_LEVEL, folds=[
            fold("S00", [0.9, 0.1], [1, 0]),          # perfect
            fold("S01", [0.2], [1]),                  # single class, wrong
            fold("S02", [0.7, 0.8, 0.1], [1, 0, 0]),  # acc 2/3, auc 0.5
        ])

    def test_fold_mean_metrics(self):
        r = self.report()
        assert r.mean_accuracy == pytest.approx((1.0 + 0.0 + 2 / 3) / 3)
        assert r.mean_auc == pytest.approx((1.0 + 0.5) / 2)

    def test_pooled_metrics(self):
        r = self.report()
        # pooled: preds [1,0,0,1,1,0] vs truths [1,0,1,1,0,0] -> 4/6 correct
        assert r.pooled_accuracy == pytest.approx(4 / 6)
        # pooled AUC oracle over all (pos, neg) pairs
        confs = np.array([0.9, 0.1, 0.2, 0.7, 0.8, 0.1])
        truths = np.array([1, 0, 1, 1, 0, 0])
        pos = confs[truths == 1][:, None]
        neg = confs[truths == 0][None, :]
        expected = float(((pos > neg) + 0.5 * (pos == neg)).mean())
        assert r.pooled_auc == pytest.approx(expected)

    def test_weighted_metrics(self):
        r = self.report()
        assert r.weighted_accuracy == pytest.approx(
            (1.0 * 2 + 0.0 * 1 + (2 / 3) * 3) / 6)
        assert r.weighted_auc == pytest.approx((1.0 * 2 + 0.5 * 3) / 5)

    def test_pooled_auc_none_when_one_class_pooled(self):
        r = EvaluationReport(mode=VIDEO_LEVEL,
                             folds=[fold("S00", [0.9], [1]),
                                    fold("S01", [0.4], [1])])
        assert r.pooled_auc is None
        assert r.mean_auc is None

    def test_csv_text(self):
        text = self.report().to_csv_text()
        lines = text.splitlines()
        assert lines[0] == "subject,n_samples,n_pain,accuracy,auc,single_class"
        assert lines[1] == "S00,2,1,1.000000,1.000000,0"
        assert lines[2] == "S01,1,1,0.000000,,1"
        assert len(lines) == 4 and text.endswith("\n")

    def test_table_layout(self):
        table = self.report().format_table()
        assert "Video Level" in table
        for col in ("Approach", "Channel", "Accuracy (%)", "AUC"):
            assert col in table
        assert "CNN + LSTM" in table
        assert "Face + Body" in table
