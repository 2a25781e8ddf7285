"""Gradient rescaling analysis for the distillation losses.

Closed-form ratios between the distillation and cross-entropy logit
gradients, the predicates for the regime where the distillation gradient
reverses direction, and a Monte Carlo validator for the claim that (under
matched target probabilities and a shared, less-confident teacher) the
higher-entropy sample of a pair always receives the larger mean rescaling
factor.

Undefined ratios (zero cross-entropy gradient component) are marked with
NaN rather than infinity, and consumers count them separately.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .losses import ce_loss, kd_loss
from .probs import adaptive_alpha, check_prob_dist, entropy, softmax_with_temperature


class SamplingExhaustedError(RuntimeError):
    """Raised when rejection sampling cannot produce enough valid pairs."""


@dataclass(frozen=True)
class GradientReport:
    """Rescaling ratios of the distillation gradient relative to cross entropy.

    ``ratio_target`` uses the absolute-value closed form
    ``(1-alpha) - alpha * |P(y) - P_t(y)| / |P(y) - 1|``; it is NaN when the
    student already puts probability 1 on the target. ``ratio_nontarget``
    holds ``1 - alpha * P_t(i) / P(i)`` for every class, with NaN at the
    target slot and wherever ``P(i) = 0``. Flip flags mark strictly
    negative ratios (gradient direction reversed); they are False where the
    ratio is undefined.

    ``teacher_less_confident`` records whether ``P_t(y) <= P(y)``, the
    regime in which the absolute-value target form equals the literal
    gradient quotient. Outside it the target ratio is flagged rather than
    reinterpreted.
    """

    ratio_target: float
    ratio_nontarget: np.ndarray
    flip_target: bool
    flip_nontarget: np.ndarray
    alpha: float
    teacher_less_confident: bool


def gradient_ratio(p_student, p_teacher, y, alpha: float) -> GradientReport:
    """Closed-form gradient rescaling ratios for one (student, teacher) pair."""
    ps = check_prob_dist(p_student)
    pt = check_prob_dist(p_teacher)
    if ps.size != pt.size:
        raise ValueError("student and teacher distributions differ in length")
    idx = int(y)
    if not (0 <= idx < ps.size):
        raise ValueError(f"target label {y!r} out of range")
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")

    denom = ps[idx] - 1.0
    if denom == 0.0:
        ratio_target = float("nan")
    else:
        ratio_target = (1.0 - alpha) - alpha * abs(ps[idx] - pt[idx]) / abs(denom)

    ratio_nontarget = np.full(ps.size, np.nan)
    nonzero = ps > 0.0
    nonzero[idx] = False
    ratio_nontarget[nonzero] = 1.0 - alpha * pt[nonzero] / ps[nonzero]

    flip_nontarget = np.zeros(ps.size, dtype=bool)
    defined = ~np.isnan(ratio_nontarget)
    flip_nontarget[defined] = ratio_nontarget[defined] < 0.0

    return GradientReport(
        ratio_target=float(ratio_target),
        ratio_nontarget=ratio_nontarget,
        flip_target=bool(not np.isnan(ratio_target) and ratio_target < 0.0),
        flip_nontarget=flip_nontarget,
        alpha=float(alpha),
        teacher_less_confident=bool(pt[idx] <= ps[idx]),
    )


def ratio_consistency_check(z_student, z_teacher, y, alpha: float, atol: float = 1e-9) -> bool:
    """Check the closed-form ratios against the literal gradient quotient.

    Computes the cross-entropy and distillation (temperature 1) gradients
    through the actual loss functions and divides them componentwise; a
    True result means every defined closed-form ratio matches that literal
    quotient within ``atol``. Components with a zero cross-entropy gradient
    are skipped, as is the target component when the teacher is more
    confident than the student there (the absolute-value target form is an
    identity only in the less-confident-teacher regime).
    """
    _, g_ce = ce_loss(z_student, y)
    _, g_kd = kd_loss(z_student, z_teacher, y, alpha, temperature=1.0)
    report = gradient_ratio(
        softmax_with_temperature(z_student),
        softmax_with_temperature(z_teacher),
        y,
        alpha,
    )
    idx = int(y)
    for i in range(g_ce.size):
        if g_ce[i] == 0.0:
            continue
        closed = report.ratio_target if i == idx else report.ratio_nontarget[i]
        if np.isnan(closed):
            continue
        if i == idx and not report.teacher_less_confident:
            continue
        if abs(g_kd[i] / g_ce[i] - closed) > atol:
            return False
    return True


@dataclass(frozen=True)
class PropositionTrial:
    """One sampled pair: smoothing weights and mean rescaling factors.

    The ``high``/``low`` suffixes refer to the entropy ordering of the two
    student distributions; the claim under test is ``w_high > w_low``.
    """

    target: int
    alpha_high: float
    alpha_low: float
    w_high: float
    w_low: float
    violation: bool


@dataclass(frozen=True)
class PropositionReport:
    valid_pairs: int
    violations: int
    trials: list[PropositionTrial]


# Slack on the strict inequality w_high > w_low; differences smaller than
# this are attributed to rounding, not to a counterexample.
PROPOSITION_SLACK = 1e-10


def _sample_pair(rng: np.random.Generator, class_count: int):
    """Draw one candidate pair; returns None when a precondition fails.

    Construction: two simplex points, the second projected to match the
    first's target probability; the teacher's target probability is drawn
    strictly below the shared student value and is common to both samples,
    matching the shared rescaling bracket the ordering claim compares
    against. Off-target teacher mass is sampled freely per sample.
    """
    target = int(rng.integers(class_count))
    p_a = rng.dirichlet(np.ones(class_count))
    p_b = rng.dirichlet(np.ones(class_count))
    t = p_a[target]
    if t <= 0.0 or t >= 1.0 or p_b[target] >= 1.0:
        return None
    p_b = p_b * ((1.0 - t) / (1.0 - p_b[target]))
    p_b[target] = t

    h_a = entropy(p_a)
    h_b = entropy(p_b)
    if h_a == h_b:
        return None
    p_high, p_low = (p_a, p_b) if h_a > h_b else (p_b, p_a)

    s = t * rng.uniform(0.0, 1.0)
    if s >= t:
        return None
    teachers = []
    for _ in range(2):
        off = rng.dirichlet(np.ones(class_count - 1)) * (1.0 - s)
        teacher = np.insert(off, target, s)
        teachers.append(teacher)
    return target, p_high, p_low, teachers[0], teachers[1], t, s


def proposition1_validate(
    n_trials: int,
    class_count: int,
    seed: int,
    max_attempts: int = 10**6,
) -> PropositionReport:
    """Monte Carlo check of the rescaling-factor ordering on sampled pairs.

    Rejection-samples ``n_trials`` pairs satisfying the preconditions
    (equal student target probability, strict entropy ordering, teacher
    strictly less confident on the target, shared teacher target mass),
    derives each sample's smoothing weight from its own entropy, and counts
    violations of ``w_high > w_low`` beyond ``PROPOSITION_SLACK``.
    """
    if class_count < 3:
        raise ValueError(f"class_count must be >= 3, got {class_count!r}")
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials!r}")
    rng = np.random.default_rng(seed)

    trials: list[PropositionTrial] = []
    violations = 0
    attempts = 0
    while len(trials) < n_trials:
        attempts += 1
        if attempts > max_attempts:
            raise SamplingExhaustedError(
                f"could not draw {n_trials} valid pairs in {max_attempts} attempts"
            )
        drawn = _sample_pair(rng, class_count)
        if drawn is None:
            continue
        target, p_high, p_low, _, _, t, s = drawn
        a_high = adaptive_alpha(p_high)
        a_low = adaptive_alpha(p_low)
        bracket = float((t - s) / (t - 1.0))
        w_high = (1.0 - a_high) + a_high * bracket
        w_low = (1.0 - a_low) + a_low * bracket
        violation = not (w_high > w_low - PROPOSITION_SLACK)
        violations += violation
        trials.append(
            PropositionTrial(
                target=target,
                alpha_high=a_high,
                alpha_low=a_low,
                w_high=w_high,
                w_low=w_low,
                violation=violation,
            )
        )
    return PropositionReport(valid_pairs=len(trials), violations=violations, trials=trials)


@dataclass(frozen=True)
class FlipCensus:
    """Grid evaluation of the target direction-flip predicate.

    One row per grid cell in the region ``p_teacher <= p_student``:
    the student's target probability, the teacher's, and whether the
    target gradient flips direction at the given smoothing weight.
    """

    alpha: float
    p_student: np.ndarray
    p_teacher: np.ndarray
    flip: np.ndarray


def flip_region_census(grid_resolution: int, alpha: float) -> FlipCensus:
    """Evaluate the target-flip inequality on an open-interval grid.

    Cell centers ``(i + 0.5) / R`` keep the grid strictly inside (0, 1);
    cells where the teacher is more confident than the student fall outside
    the analysis hypothesis and are excluded.
    """
    if grid_resolution < 1:
        raise ValueError(f"grid_resolution must be >= 1, got {grid_resolution!r}")
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    centers = (np.arange(grid_resolution) + 0.5) / grid_resolution
    ps, pt = np.meshgrid(centers, centers, indexing="ij")
    keep = pt <= ps
    ps = ps[keep]
    pt = pt[keep]
    flip = (1.0 - alpha) < alpha * np.abs(ps - pt) / np.abs(ps - 1.0)
    return FlipCensus(alpha=float(alpha), p_student=ps, p_teacher=pt, flip=flip)


def write_flip_census_csv(census: FlipCensus, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p_student_target", "p_teacher_target", "flip_target"])
        for ps, pt, flip in zip(census.p_student, census.p_teacher, census.flip):
            writer.writerow([repr(float(ps)), repr(float(pt)), str(bool(flip)).lower()])


def write_proposition_csv(report: PropositionReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["trial", "target", "alpha_high_entropy", "alpha_low_entropy",
             "w_high_entropy", "w_low_entropy", "violation"]
        )
        for i, t in enumerate(report.trials):
            writer.writerow(
                [i, t.target, repr(t.alpha_high), repr(t.alpha_low),
                 repr(t.w_high), repr(t.w_low), str(t.violation).lower()]
            )
