"""Smoothed-target losses with analytic logit gradients.

Every loss returns a ``(LossBreakdown, grad)`` pair where ``grad`` is the
exact gradient of the total loss with respect to the student logits. The
hard and teacher components are stored unweighted, so the breakdown always
reconstructs as ``total == (1 - alpha) * hard_term + alpha * teacher_term``.

The adaptive self-distillation loss computes its smoothing weight from the
student's own predictive entropy; that weight is a detached scalar and the
analytic gradient deliberately treats it as a constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .probs import (
    PROB_FLOOR,
    adaptive_alpha,
    check_prob_dist,
    softmax_with_temperature,
)

PRIOR_KINDS = ("uniform", "unigram", "teacher")


@dataclass(frozen=True)
class PriorDistribution:
    """A prior label distribution used to soften one-hot targets.

    ``uniform`` and ``unigram`` priors are fixed vectors; the ``teacher``
    kind marks distributions produced by a checkpoint forward pass and is
    rejected by the static label-smoothing loss (use the distillation
    losses, which take teacher logits directly).
    """

    kind: str
    probs: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ValueError(f"unknown prior kind {self.kind!r}, expected one of {PRIOR_KINDS}")
        if self.probs is not None:
            object.__setattr__(self, "probs", check_prob_dist(self.probs))


def uniform_prior(n_classes: int) -> PriorDistribution:
    """Uniform prior over ``n_classes`` labels."""
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    return PriorDistribution("uniform", np.full(n_classes, 1.0 / n_classes))


def unigram_prior(labels, n_classes: int) -> PriorDistribution:
    """Unigram prior estimated from training labels with add-one smoothing.

    Add-one smoothing keeps the prior strictly positive on classes that
    never occur in the training set.
    """
    y = np.asarray(labels, dtype=np.int64).ravel()
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError("labels out of range for the declared class count")
    counts = np.bincount(y, minlength=n_classes).astype(np.float64) + 1.0
    return PriorDistribution("unigram", counts / counts.sum())


@dataclass(frozen=True)
class LossBreakdown:
    """Total loss (nats) plus its unweighted components and the mixture weight.

    Invariant: ``total == (1 - alpha_used) * hard_term + alpha_used * teacher_term``.
    For losses without a teacher mixture (plain cross entropy, confidence
    penalty) ``alpha_used`` is 0 and ``hard_term`` carries the whole loss.
    """

    total: float
    hard_term: float
    teacher_term: float
    alpha_used: float


def _check_label(y: int, n_classes: int) -> int:
    idx = int(y)
    if idx != y or not (0 <= idx < n_classes):
        raise ValueError(f"target label {y!r} out of range [0, {n_classes})")
    return idx


def _log_probs(p: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(p, PROB_FLOOR))


def ce_loss(z, y) -> tuple[LossBreakdown, np.ndarray]:
    """Hard-target cross entropy ``-ln P(y)`` and its logit gradient ``P - y``."""
    p = softmax_with_temperature(z)
    idx = _check_label(y, p.size)
    hard = float(-_log_probs(p)[idx])
    grad = p.copy()
    grad[idx] -= 1.0
    return LossBreakdown(total=hard, hard_term=hard, teacher_term=0.0, alpha_used=0.0), grad


def label_smoothing_loss(z, y, prior: PriorDistribution, alpha: float) -> tuple[LossBreakdown, np.ndarray]:
    """Cross entropy against the smoothed target ``(1-alpha) * onehot + alpha * q``.

    Accepts uniform and unigram priors only; a teacher-kind prior is
    rejected because distillation against a live teacher goes through
    ``kd_loss`` / ``adaptive_skd_loss``.
    """
    if prior.kind == "teacher":
        raise ValueError("teacher priors are handled by the distillation losses")
    if prior.probs is None:
        raise ValueError(f"{prior.kind} prior is missing its probability vector")
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    p = softmax_with_temperature(z)
    q = prior.probs
    if q.size != p.size:
        raise ValueError("prior length does not match the class count")
    idx = _check_label(y, p.size)
    logs = _log_probs(p)
    hard = float(-logs[idx])
    teacher = float(-np.dot(q, logs))
    total = (1.0 - alpha) * hard + alpha * teacher
    grad = p.copy()
    grad[idx] -= 1.0 - alpha
    grad -= alpha * q
    return LossBreakdown(total=total, hard_term=hard, teacher_term=teacher, alpha_used=float(alpha)), grad


def kd_loss(z_student, z_teacher, y, alpha: float, temperature: float = 1.0) -> tuple[LossBreakdown, np.ndarray]:
    """Distillation loss mixing hard cross entropy with a teacher cross entropy.

    The teacher term is the cross entropy between the temperature-smoothed
    teacher and student distributions; the hard term stays at temperature 1.
    Teacher logits are treated as constants (no gradient flows to them).
    At temperature 1 the gradient is
    ``(1-alpha) * (P - onehot) + alpha * (P - P_teacher)``.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    p = softmax_with_temperature(z_student)
    idx = _check_label(y, p.size)
    p_bar_s = p if temperature == 1.0 else softmax_with_temperature(z_student, temperature)
    p_bar_t = softmax_with_temperature(z_teacher, temperature)
    if p_bar_t.size != p.size:
        raise ValueError("teacher logits length does not match the class count")
    hard = float(-_log_probs(p)[idx])
    teacher = float(-np.dot(p_bar_t, _log_probs(p_bar_s)))
    total = (1.0 - alpha) * hard + alpha * teacher
    grad = (1.0 - alpha) * p
    grad[idx] -= 1.0 - alpha
    grad += (alpha / temperature) * (p_bar_s - p_bar_t)
    return LossBreakdown(total=total, hard_term=hard, teacher_term=teacher, alpha_used=float(alpha)), grad


def adaptive_skd_loss(z_student, z_teacher, y) -> tuple[LossBreakdown, np.ndarray]:
    """Self-distillation loss whose mixture weight adapts to prediction entropy.

    The weight is ``1 - H(P) / ln|C|`` computed from the student's own
    probabilities and recorded in ``alpha_used``. It is a detached scalar:
    the returned gradient is exact for the loss with that weight held
    constant, which is the training-time contract.
    """
    if z_teacher is None:
        raise ValueError("adaptive self-distillation requires teacher logits")
    p = softmax_with_temperature(z_student)
    idx = _check_label(y, p.size)
    p_t = softmax_with_temperature(z_teacher)
    if p_t.size != p.size:
        raise ValueError("teacher logits length does not match the class count")
    a = adaptive_alpha(p)
    logs = _log_probs(p)
    hard = float(-logs[idx])
    teacher = float(-np.dot(p_t, logs))
    total = (1.0 - a) * hard + a * teacher
    grad = p.copy()
    grad[idx] -= 1.0 - a
    grad -= a * p_t
    return LossBreakdown(total=total, hard_term=hard, teacher_term=teacher, alpha_used=a), grad


def confidence_penalty_loss(z, y, beta: float = 0.78) -> tuple[LossBreakdown, np.ndarray]:
    """Cross entropy minus ``beta`` times the prediction entropy.

    The entropy bonus discourages peaked outputs. There is no teacher
    mixture here, so the whole value is reported as the hard term with
    ``alpha_used = 0``. The gradient of the penalty through the softmax is
    ``beta * P_i * (ln P_i + H(P))``, which vanishes at the uniform
    distribution.
    """
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta!r}")
    p = softmax_with_temperature(z)
    idx = _check_label(y, p.size)
    logs = _log_probs(p)
    h = float(-np.dot(p, logs))
    total = float(-logs[idx]) - beta * h
    grad = p.copy()
    grad[idx] -= 1.0
    grad += beta * p * (logs + h)
    return LossBreakdown(total=total, hard_term=total, teacher_term=0.0, alpha_used=0.0), grad


def linear_alpha_schedule(epoch: int, max_alpha: float, max_epoch: int) -> float:
    """Linear ramp from 0 to ``max_alpha`` over ``max_epoch`` epochs, then flat."""
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch!r}")
    if max_epoch < 1:
        raise ValueError(f"max_epoch must be >= 1, got {max_epoch!r}")
    if not (0.0 <= max_alpha <= 1.0):
        raise ValueError(f"max_alpha must lie in [0, 1], got {max_alpha!r}")
    return float(min(max_alpha, max_alpha * epoch / max_epoch))


def mixture_loss_rows(
    probs: np.ndarray,
    targets: np.ndarray,
    prior_rows: np.ndarray,
    alphas,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized smoothed-target cross entropy over rows.

    The batched counterpart of the per-sample losses above, used on the
    trainer hot path. ``prior_rows`` may be a single prior vector (shared
    across rows) or one row per sample; ``alphas`` a scalar or one weight
    per row.

    Returns ``(hard, teacher, total, grad)`` where the first three are
    per-row values and ``grad`` holds per-row logit gradients
    ``P - (1-alpha) * onehot - alpha * prior``.
    """
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.int64)
    n, c = p.shape
    q = np.broadcast_to(np.asarray(prior_rows, dtype=np.float64), (n, c))
    a = np.broadcast_to(np.asarray(alphas, dtype=np.float64), (n,))
    logs = np.log(np.maximum(p, PROB_FLOOR))
    rows = np.arange(n)
    hard = -logs[rows, y]
    teacher = -np.sum(q * logs, axis=1)
    total = (1.0 - a) * hard + a * teacher
    grad = p - a[:, None] * q
    grad[rows, y] -= 1.0 - a
    return hard, teacher, total, grad


def confidence_penalty_rows(
    probs: np.ndarray, targets: np.ndarray, beta: float
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized confidence penalty: per-row totals and logit gradients."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.int64)
    rows = np.arange(p.shape[0])
    logs = np.log(np.maximum(p, PROB_FLOOR))
    h = -np.sum(p * logs, axis=1)
    total = -logs[rows, y] - beta * h
    grad = p + beta * p * (logs + h[:, None])
    grad[rows, y] -= 1.0
    return total, grad
