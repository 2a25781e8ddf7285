"""Generalization metrics used to score self-teacher candidates."""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Sequence

import numpy as np

from .probs import PROB_FLOOR


def _ngrams(tokens: Sequence, n: int):
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def mini_bleu(hypotheses: Sequence[Sequence], references: Sequence[Sequence], max_n: int = 4) -> float:
    """Corpus-level BLEU: clipped n-gram precisions, geometric mean, brevity penalty.

    Single reference per hypothesis, no smoothing. The geometric mean runs
    over the n-gram orders the hypotheses actually realize (a corpus of
    only short sequences simply has no high-order terms); any realized
    order with zero matches collapses the score to 0. Tokens can be any
    hashable values.
    """
    if len(hypotheses) != len(references):
        raise ValueError("need one reference per hypothesis")
    if not hypotheses:
        raise ValueError("need at least one hypothesis")
    if max_n < 1:
        raise ValueError(f"max_n must be >= 1, got {max_n!r}")

    matched = np.zeros(max_n)
    total = np.zeros(max_n)
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp = list(hyp)
        ref = list(ref)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            counts = Counter(_ngrams(hyp, n))
            ref_counts = Counter(_ngrams(ref, n))
            matched[n - 1] += sum(min(c, ref_counts[g]) for g, c in counts.items())
            total[n - 1] += sum(counts.values())

    realized = total > 0
    if not realized.any() or np.any(matched[realized] == 0):
        return 0.0
    log_precisions = np.log(matched[realized] / total[realized])
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / max(hyp_len, 1))
    return float(bp * math.exp(log_precisions.mean()))


def accuracy_score(predictions: np.ndarray, targets: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Fraction of correct predictions, optionally restricted by a mask."""
    pred = np.asarray(predictions)
    ref = np.asarray(targets)
    correct = pred == ref
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ValueError("mask excludes every position")
        correct = correct[mask]
    if correct.size == 0:
        raise ValueError("no predictions to score")
    return float(correct.mean())


def mean_nll(probs: np.ndarray, targets: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean negative log likelihood in nats of the target under each row."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.int64).ravel()
    p = p.reshape(-1, p.shape[-1])
    picked = p[np.arange(y.size), y]
    nll = -np.log(np.maximum(picked, PROB_FLOOR))
    if mask is not None:
        flat = np.asarray(mask, dtype=bool).ravel()
        if not flat.any():
            raise ValueError("mask excludes every position")
        nll = nll[flat]
    return float(nll.mean())
