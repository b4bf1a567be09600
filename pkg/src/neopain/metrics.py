"""Classification metrics and rater-agreement statistics."""

import numpy as np

from .errors import (DegenerateMarginals, EmptyInput, LengthMismatch,
                     SingleClass, ZeroVariance)


def _as_binary(labels):
    out = []
    for v in labels:
        if isinstance(v, str):
            out.append(1 if v == "pain" else 0)
        elif hasattr(v, "is_pain"):
            out.append(1 if v.is_pain else 0)
        else:
            out.append(int(v))
    return np.asarray(out, dtype=np.intp)


def accuracy(predictions, truth):
    pred = _as_binary(predictions)
    true = _as_binary(truth)
    if pred.size != true.size:
        raise LengthMismatch(f"{pred.size} predictions vs {true.size} labels")
    if pred.size == 0:
        raise EmptyInput("no samples")
    return float((pred == true).mean())


def auc(scores, truth):
    """Mann-Whitney AUC: P(score_pain > score_no_pain), ties counted half."""
    scores = np.asarray(scores, dtype=np.float64)
    true = _as_binary(truth)
    if scores.size != true.size:
        raise LengthMismatch(f"{scores.size} scores vs {true.size} labels")
    n_pos = int(true.sum())
    n_neg = true.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes present")
    ranks = _average_ranks(scores)
    pos_rank_sum = ranks[true == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _average_ranks(values):
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def cohen_kappa(r1, r2):
    """Chance-corrected agreement with marginal-product expected agreement."""
    r1 = list(r1)
    r2 = list(r2)
    if len(r1) != len(r2):
        raise LengthMismatch(f"{len(r1)} vs {len(r2)} ratings")
    if not r1:
        raise EmptyInput("no ratings")
    n = len(r1)
    cats = sorted(set(r1) | set(r2), key=str)
    index = {c: i for i, c in enumerate(cats)}
    conf = np.zeros((len(cats), len(cats)))
    for a, b in zip(r1, r2):
        conf[index[a], index[b]] += 1
    p_o = np.trace(conf) / n
    p_e = float((conf.sum(axis=1) / n) @ (conf.sum(axis=0) / n))
    if p_e >= 1.0 - 1e-15:
        raise DegenerateMarginals("expected agreement is 1; kappa undefined")
    return float((p_o - p_e) / (1.0 - p_e))


def pearson(x, y):
    """Product-moment correlation coefficient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size:
        raise LengthMismatch(f"{x.size} vs {y.size} values")
    if x.size < 2:
        raise EmptyInput("need at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt((dx * dx).sum())
    sy = np.sqrt((dy * dy).sum())
    if sx == 0.0 or sy == 0.0:
        raise ZeroVariance("correlation undefined for constant input")
    return float((dx * dy).sum() / (sx * sy))
