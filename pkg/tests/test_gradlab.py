import csv

import numpy as np
import pytest

from alskd.gradlab import (
    PROPOSITION_SLACK,
    SamplingExhaustedError,
    flip_region_census,
    gradient_ratio,
    proposition1_validate,
    ratio_consistency_check,
    write_flip_census_csv,
    write_proposition_csv,
)
from alskd.losses import ce_loss, kd_loss
from alskd.probs import adaptive_alpha, softmax_with_temperature


def region_draw(rng, n):
    """Random (student, teacher, target, alpha) with the teacher no more
    confident than the student on the target."""
    p_s = rng.dirichlet(np.ones(n))
    p_t = rng.dirichlet(np.ones(n))
    y = int(rng.integers(n))
    if p_t[y] > p_s[y]:
        p_s, p_t = p_t, p_s
    return p_s, p_t, y, float(rng.uniform(0, 1))


class TestGradientRatio:
    def test_matched_distributions(self):
        p = np.array([0.5, 0.3, 0.2])
        report = gradient_ratio(p, p.copy(), 0, 0.4)
        assert report.ratio_target == pytest.approx(0.6, abs=1e-12)
        np.testing.assert_allclose(report.ratio_nontarget[1:], 0.6, atol=1e-12)
        assert np.isnan(report.ratio_nontarget[0])
        assert not report.flip_target
        assert not report.flip_nontarget.any()

    def test_target_flip_example(self):
        # confident student (0.95) vs much less confident teacher (0.6)
        # at heavy smoothing: 0.1 < 0.9 * |0.35 / -0.05| = 6.3
        p_s = np.array([0.95, 0.03, 0.02])
        p_t = np.array([0.60, 0.25, 0.15])
        report = gradient_ratio(p_s, p_t, 0, 0.9)
        assert report.flip_target
        assert report.ratio_target == pytest.approx(0.1 - 6.3, abs=1e-10)

    def test_nontarget_flip_example(self):
        # ratio 1 - 0.5 * 0.3 / 0.1 = -0.5 on the non-target class
        p_s = np.array([0.8, 0.1, 0.1])
        p_t = np.array([0.5, 0.3, 0.2])
        report = gradient_ratio(p_s, p_t, 0, 0.5)
        assert report.ratio_nontarget[1] == pytest.approx(-0.5, abs=1e-12)
        assert bool(report.flip_nontarget[1])
        assert not bool(report.flip_nontarget[2])

    def test_certain_student_marks_target_undefined(self):
        p_s = np.array([1.0, 0.0, 0.0])
        p_t = np.array([0.5, 0.25, 0.25])
        report = gradient_ratio(p_s, p_t, 0, 0.5)
        assert np.isnan(report.ratio_target)
        assert not report.flip_target
        assert np.isnan(report.ratio_nontarget[1])  # p_s zero there too

    def test_flip_flags_match_raw_gradient_signs(self, rng):
        for _ in range(300):
            p_s, p_t, y, alpha = region_draw(rng, 6)
            report = gradient_ratio(p_s, p_t, y, alpha)
            _, g_ce = ce_loss(np.log(np.maximum(p_s, 1e-300)), y)
            _, g_kd = kd_loss(np.log(np.maximum(p_s, 1e-300)),
                              np.log(np.maximum(p_t, 1e-300)), y, alpha, 1.0)
            for i in range(6):
                if g_ce[i] == 0.0:
                    continue
                expected_flip = (np.sign(g_kd[i]) != np.sign(g_ce[i])) and g_kd[i] != 0.0
                got = report.flip_target if i == y else bool(report.flip_nontarget[i])
                assert got == expected_flip

    def test_region_flag(self):
        p_s = np.array([0.4, 0.3, 0.3])
        p_t = np.array([0.6, 0.2, 0.2])
        assert not gradient_ratio(p_s, p_t, 0, 0.5).teacher_less_confident
        assert gradient_ratio(p_t, p_s, 0, 0.5).teacher_less_confident


class TestRatioConsistency:
    def test_random_draws_all_consistent(self, rng):
        for _ in range(1000):
            z_s = rng.normal(size=6)
            z_t = rng.normal(size=6)
            y = int(rng.integers(6))
            alpha = float(rng.uniform(0, 1))
            assert ratio_consistency_check(z_s, z_t, y, alpha)

    def test_alpha_zero_gives_unit_ratios(self, rng):
        p_s, p_t, y, _ = region_draw(rng, 5)
        report = gradient_ratio(p_s, p_t, y, 0.0)
        assert report.ratio_target == pytest.approx(1.0, abs=1e-12)
        defined = ~np.isnan(report.ratio_nontarget)
        np.testing.assert_allclose(report.ratio_nontarget[defined], 1.0, atol=1e-12)

    def test_one_hot_student_skips_target(self):
        z_s = np.array([200.0, 0.0, 0.0])
        z_t = np.array([0.5, 0.2, 0.1])
        assert ratio_consistency_check(z_s, z_t, 0, 0.7)

    def test_absolute_form_is_identity_in_region(self, rng):
        # the rewritten target ratio equals the signed closed form whenever
        # the student dominates the teacher on the target
        for _ in range(500):
            p_s, p_t, y, alpha = region_draw(rng, 7)
            if p_s[y] >= 1.0:
                continue
            signed = (1 - alpha) + alpha * (p_s[y] - p_t[y]) / (p_s[y] - 1.0)
            report = gradient_ratio(p_s, p_t, y, alpha)
            assert abs(report.ratio_target - signed) < 1e-12

    def test_aggregate_nontarget_identity(self, rng):
        # summed non-target distillation gradient over summed non-target
        # cross-entropy gradient collapses to the target ratio
        for _ in range(500):
            z_s = rng.normal(size=6)
            z_t = rng.normal(size=6)
            y = int(rng.integers(6))
            alpha = float(rng.uniform(0, 1))
            _, g_ce = ce_loss(z_s, y)
            _, g_kd = kd_loss(z_s, z_t, y, alpha, 1.0)
            others = [i for i in range(6) if i != y]
            aggregate = g_kd[others].sum() / g_ce[others].sum()
            p_s = softmax_with_temperature(z_s)
            p_t = softmax_with_temperature(z_t)
            signed = (1 - alpha) + alpha * (p_s[y] - p_t[y]) / (p_s[y] - 1.0)
            assert abs(aggregate - signed) < 1e-10


class TestProposition:
    def test_no_violations_across_seeds(self):
        for seed in (0, 3333, 5555):
            report = proposition1_validate(2000, 10, seed)
            assert report.valid_pairs == 2000
            assert report.violations == 0

    def test_entropy_ordering_implies_weight_ordering(self):
        report = proposition1_validate(500, 6, seed=1)
        for trial in report.trials:
            # higher entropy must mean smaller smoothing weight
            assert trial.alpha_high < trial.alpha_low
            assert trial.w_high > trial.w_low - PROPOSITION_SLACK

    def test_shared_fixed_alpha_collapses_the_ordering(self, rng):
        # with one shared weight (and the shared bracket) the two mean
        # rescaling factors coincide, so the instance-specific weight is
        # what creates the ordering
        t, s, alpha = 0.6, 0.3, 0.4
        bracket = (t - s) / (t - 1.0)
        w_i = (1 - alpha) + alpha * bracket
        w_k = (1 - alpha) + alpha * bracket
        assert w_i == w_k

    def test_small_class_count_rejected(self):
        with pytest.raises(ValueError):
            proposition1_validate(10, 2, 0)

    def test_exhausted_sampling(self):
        with pytest.raises(SamplingExhaustedError):
            proposition1_validate(10, 5, 0, max_attempts=0)

    def test_csv_artifact(self, tmp_path):
        report = proposition1_validate(50, 5, 0)
        path = tmp_path / "prop.csv"
        write_proposition_csv(report, path)
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 50
        assert all(row["violation"] == "false" for row in rows)
        assert float(rows[0]["w_high_entropy"]) == pytest.approx(report.trials[0].w_high)


class TestFlipCensus:
    def test_alpha_zero_never_flips(self):
        census = flip_region_census(50, 0.0)
        assert not census.flip.any()

    def test_alpha_one_flips_everywhere_but_the_diagonal(self):
        census = flip_region_census(50, 1.0)
        expected = census.p_teacher != census.p_student
        np.testing.assert_array_equal(census.flip, expected)

    def test_cells_match_pointwise_inequality(self):
        census = flip_region_census(100, 0.5)
        for ps, pt, flip in zip(census.p_student, census.p_teacher, census.flip):
            assert bool(flip) == (0.5 < 0.5 * abs(ps - pt) / abs(ps - 1.0))

    def test_region_restriction_and_openness(self):
        census = flip_region_census(40, 0.3)
        assert np.all(census.p_teacher <= census.p_student)
        assert census.p_student.min() > 0.0 and census.p_student.max() < 1.0

    def test_flip_monotone_in_student_confidence(self):
        census = flip_region_census(60, 0.7)
        for pt in np.unique(census.p_teacher):
            sel = census.p_teacher == pt
            order = np.argsort(census.p_student[sel])
            flips = census.flip[sel][order].astype(int)
            assert np.all(np.diff(flips) >= 0)

    def test_csv_artifact(self, tmp_path):
        census = flip_region_census(10, 0.5)
        path = tmp_path / "flip.csv"
        write_flip_census_csv(census, path)
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == census.flip.size
        assert {row["flip_target"] for row in rows} <= {"true", "false"}
