"""Ranking and keyword-decision metrics."""
from __future__ import annotations

import numpy as np

from .labels import LabelSpace

NON_KEYWORD = -1


def average_precision(scores, truths) -> float | None:
    """Non-interpolated AP over the score-descending ranking.

    Ties keep the original item order. Returns ``None`` when there is no
    positive item (AP undefined).
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    truths = np.asarray(truths).ravel()
    if scores.shape != truths.shape:
        raise ValueError(f"scores {scores.shape} and truths {truths.shape} differ")
    rel = truths[np.argsort(-scores, kind="stable")] > 0
    n_pos = int(rel.sum())
    if n_pos == 0:
        return None
    hits = np.cumsum(rel)
    ranks = np.arange(1, rel.size + 1)
    return float((hits[rel] / ranks[rel]).sum() / n_pos)


def mean_ap(scores, truths) -> float:
    """Unweighted mean of per-class AP over classes with at least one positive."""
    scores = np.asarray(scores)
    truths = np.asarray(truths)
    if scores.shape != truths.shape or scores.ndim != 2:
        raise ValueError(f"expected equal [M, C] matrices, got {scores.shape} and {truths.shape}")
    aps = [average_precision(scores[:, c], truths[:, c]) for c in range(scores.shape[1])]
    aps = [ap for ap in aps if ap is not None]
    if not aps:
        raise ValueError("no class has a positive example; mAP is undefined")
    return float(np.mean(aps))


def kws_decide(probs, labels: LabelSpace, gamma: float = 0.2) -> int:
    """Return the winning keyword's label index, or ``NON_KEYWORD``.

    A keyword fires when its probability reaches ``gamma``; among keywords
    the highest wins and ties go to the lowest index. Event scores
    (including Speech) never influence the decision.
    """
    probs = np.asarray(probs)
    kw = np.asarray(labels.keyword_indices)
    sub = probs[..., kw]
    best = np.argmax(sub, axis=-1)
    top = np.take_along_axis(sub, best[..., None], axis=-1)[..., 0]
    out = np.where(top >= gamma, kw[best], NON_KEYWORD)
    return int(out) if out.ndim == 0 else out


def kws_accuracy(decisions, truths) -> float:
    """Fraction of utterances whose decision matches the 11-way ground truth.

    Both sequences use keyword label indices, or ``NON_KEYWORD`` for
    filler/speech utterances.
    """
    decisions = np.asarray(decisions)
    truths = np.asarray(truths)
    if decisions.shape != truths.shape:
        raise ValueError(f"{decisions.size} decisions vs {truths.size} ground-truth labels")
    if decisions.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.mean(decisions == truths))


def kws_truth(targets, labels: LabelSpace) -> int:
    """11-way ground truth from a target vector: keyword index or ``NON_KEYWORD``."""
    targets = np.asarray(targets)
    kw = [i for i in labels.keyword_indices if targets[i] > 0.5]
    return kw[0] if kw else NON_KEYWORD
