"""Leave-one-subject-out evaluation harness and report assembly."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyDataset, LeakageError, SingleClass, TooFewSubjects
from .metrics import accuracy, auc
from .model import train_fusion_head
from .temporal import TemporalSpec, make_windows, train_temporal

FRAME_LEVEL = "frame_level"
VIDEO_LEVEL = "video_level"


@dataclass(frozen=True)
class FoldSpec:
    held_out_subject: str
    train_subjects: frozenset


def loso_split(subjects):
    """One fold per subject, deterministic order (sorted subject id)."""
    unique = sorted(set(subjects))
    if len(unique) < 2:
        raise TooFewSubjects(f"need >= 2 subjects, got {len(unique)}")
    return [FoldSpec(s, frozenset(u for u in unique if u != s)) for s in unique]


@dataclass
class VideoItem:
    """One labeled video with precomputed backbone feature maps."""

    subject_id: str
    period_tag: str
    face_maps: np.ndarray   # (T, 7, 7, C)
    body_maps: np.ndarray   # (T, 7, 7, C)
    frame_labels: np.ndarray  # (T,) 0/1
    video_label: int


@dataclass
class FoldResult:
    held_out_subject: str
    accuracy: float
    auc: Optional[float]
    n_samples: int
    n_pain: int
    single_class: bool
    confidences: np.ndarray = None
    truths: np.ndarray = None


@dataclass
class EvaluationReport:
    mode: str
    folds: list = field(default_factory=list)
    config_text: str = ""

    @property
    def mean_accuracy(self):
        return float(np.mean([f.accuracy for f in self.folds]))

    @property
    def mean_auc(self):
        vals = [f.auc for f in self.folds if f.auc is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def pooled_accuracy(self):
        """Accuracy over all held-out predictions pooled across folds."""
        confs, truths = self._pooled()
        return accuracy((confs > 0.5).astype(np.intp), truths)

    @property
    def pooled_auc(self):
        """AUC over all held-out predictions pooled across folds.

        Defined even when every fold is single-class (one video per
        subject), where per-fold AUC does not exist.
        """
        confs, truths = self._pooled()
        if np.unique(truths).size < 2:
            return None
        return auc(confs, truths)

    def _pooled(self):
        confs = np.concatenate([np.asarray(f.confidences, dtype=np.float64)
                                for f in self.folds])
        truths = np.concatenate([np.asarray(f.truths, dtype=np.intp)
                                 for f in self.folds])
        return confs, truths

    @property
    def weighted_accuracy(self):
        n = sum(f.n_samples for f in self.folds)
        return float(sum(f.accuracy * f.n_samples for f in self.folds) / n)

    @property
    def weighted_auc(self):
        usable = [f for f in self.folds if f.auc is not None]
        n = sum(f.n_samples for f in usable)
        if n == 0:
            return None
        return float(sum(f.auc * f.n_samples for f in usable) / n)

    def to_csv_text(self):
        lines = ["subject,n_samples,n_pain,accuracy,auc,single_class"]
        for f in self.folds:
            auc_s = "" if f.auc is None else f"{f.auc:.6f}"
            lines.append(f"{f.held_out_subject},{f.n_samples},{f.n_pain},"
                         f"{f.accuracy:.6f},{auc_s},{int(f.single_class)}")
        return "\n".join(lines) + "\n"

    def format_table(self):
        """Summary table mirroring the published results layout."""
        level = "Frame Level" if self.mode == FRAME_LEVEL else "Video Level"
        mean_auc = self.mean_auc
        w_auc = self.weighted_auc
        pooled_auc = self.pooled_auc
        shown_auc = mean_auc if mean_auc is not None else pooled_auc
        lines = [
            f"{level} Performance ({len(self.folds)} LOSO folds)",
            f"{'Approach':<24}{'Channel':<14}{'Accuracy (%)':<14}{'AUC':<8}",
            "-" * 60,
            f"{'CNN + LSTM':<24}{'Face + Body':<14}"
            f"{self.mean_accuracy * 100:<14.2f}"
            f"{'' if shown_auc is None else format(shown_auc, '.2f'):<8}",
            "-" * 60,
            f"fold-mean accuracy {self.mean_accuracy:.4f}  "
            f"pooled {self.pooled_accuracy:.4f}  "
            f"sample-weighted {self.weighted_accuracy:.4f}",
            f"fold-mean AUC {'n/a' if mean_auc is None else format(mean_auc, '.4f')}  "
            f"pooled {'n/a' if pooled_auc is None else format(pooled_auc, '.4f')}  "
            f"sample-weighted {'n/a' if w_auc is None else format(w_auc, '.4f')}",
        ]
        return "\n".join(lines)


def _fold_items(items, fold):
    train = [it for it in items if it.subject_id in fold.train_subjects]
    test = [it for it in items if it.subject_id == fold.held_out_subject]
    return train, test


def check_leakage(fold, train_items):
    """Guard: no held-out data may reach fold training."""
    bad = [it.subject_id for it in train_items
           if it.subject_id not in fold.train_subjects]
    if bad:
        raise LeakageError(
            f"training items from outside the fold's train set: {sorted(set(bad))}")
    if fold.held_out_subject in {it.subject_id for it in train_items}:
        raise LeakageError(
            f"held-out subject {fold.held_out_subject} present in training data")


def run_loso(items, mode=VIDEO_LEVEL, fusion_config=None, temporal_config=None,
             fusion_epochs=4, temporal_epochs=20, window_length=16,
             window_stride=1, output_dim=1, seed=0, progress=None,
             fusion_frame_stride=1):
    """Train and evaluate per LOSO fold; returns an EvaluationReport.

    Backbone feature maps on the items are fixed (frozen backbones), so only
    the fusion head and temporal model are retrained inside each fold.
    """
    items = list(items)
    if not items:
        raise EmptyDataset("no videos")
    if mode not in (FRAME_LEVEL, VIDEO_LEVEL):
        raise ValueError(f"unknown mode {mode!r}")
    if len({it.video_label for it in items}) < 2:
        raise SingleClass("dataset must contain both classes")
    folds = loso_split([it.subject_id for it in items])
    report = EvaluationReport(mode=mode)
    for fold in folds:
        train_items, test_items = _fold_items(items, fold)
        check_leakage(fold, train_items)
        result = _run_fold(fold, train_items, test_items, mode, fusion_config,
                           temporal_config, fusion_epochs, temporal_epochs,
                           window_length, window_stride, output_dim, seed,
                           fusion_frame_stride)
        report.folds.append(result)
        if progress is not None:
            progress(result)
    return report


def _run_fold(fold, train_items, test_items, mode, fusion_config,
              temporal_config, fusion_epochs, temporal_epochs, window_length,
              window_stride, output_dim, seed, fusion_frame_stride=1):
    # optional frame subsampling for head training only; adjacent frames are
    # highly correlated, so sparser sampling buys time at no accuracy cost
    k = fusion_frame_stride
    face = np.concatenate([it.face_maps[::k] for it in train_items])
    body = np.concatenate([it.body_maps[::k] for it in train_items])
    frame_labels = np.concatenate([it.frame_labels[::k] for it in train_items])
    head, _ = train_fusion_head(face, body, frame_labels,
                                config=fusion_config, epochs=fusion_epochs,
                                seed=seed, class_weight="balanced")

    def fused(it):
        return head.features(it.face_maps, it.body_maps)

    spec = TemporalSpec(output_dim=output_dim)
    if mode == VIDEO_LEVEL:
        seqs = [fused(it) for it in train_items]
        labels = [it.video_label for it in train_items]
        tmodel, _ = train_temporal(seqs, labels, config=temporal_config,
                                   epochs=temporal_epochs, seed=seed, spec=spec,
                                   class_weight="balanced")
        confs, truths = [], []
        for it in test_items:
            confs.append(tmodel.forward(fused(it)))
            truths.append(it.video_label)
    else:
        seqs, labels = [], []
        for it in train_items:
            for win in make_windows(fused(it), it.frame_labels,
                                    length=window_length, stride=window_stride):
                seqs.append(win.features)
                labels.append(win.label)
        tmodel, _ = train_temporal(seqs, labels, config=temporal_config,
                                   epochs=temporal_epochs, seed=seed, spec=spec,
                                   class_weight="balanced")
        confs, truths = [], []
        for it in test_items:
            wins = make_windows(fused(it), it.frame_labels,
                                length=window_length, stride=1)
            if not wins:
                continue
            x = np.stack([w.features for w in wins])
            c, _ = tmodel.forward_batch(x)
            confs.extend(c.tolist())
            truths.extend(w.label for w in wins)

    confs = np.asarray(confs)
    truths = np.asarray(truths, dtype=np.intp)
    preds = (confs > 0.5).astype(np.intp)
    acc = accuracy(preds, truths)
    single = np.unique(truths).size < 2
    fold_auc = None if single else auc(confs, truths)
    return FoldResult(fold.held_out_subject, acc, fold_auc,
                      int(truths.size), int(truths.sum()), single,
                      confidences=confs, truths=truths)
