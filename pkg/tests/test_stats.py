import math
import random

import mpmath
import pytest

from specforge.stats import (
    DegenerateReference,
    InsufficientData,
    ReportEntry,
    accuracy_se,
    classify,
    p_value,
    relative_error,
    write_report,
)


def welch_p_oracle(a, b):
    """Straight-from-formula Welch t-test, sharing nothing with the library
    path: statistic, Welch-Satterthwaite df, and the t survival function via
    the regularized incomplete beta."""
    na, nb = len(a), len(b)
    mean_a = sum(a) / na
    mean_b = sum(b) / nb
    var_a = sum((x - mean_a) ** 2 for x in a) / (na - 1)
    var_b = sum((x - mean_b) ** 2 for x in b) / (nb - 1)
    if var_a == 0.0 and var_b == 0.0:
        return 1.0 if mean_a == mean_b else 0.0
    se2 = var_a / na + var_b / nb
    t = (mean_a - mean_b) / math.sqrt(se2)
    df = se2**2 / ((var_a / na) ** 2 / (na - 1) + (var_b / nb) ** 2 / (nb - 1))
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    sf = float(mpmath.betainc(df / 2, mpmath.mpf(1) / 2, 0, x, regularized=True)) / 2
    return 2 * sf


class TestAccuracySe:
    def test_constant_sample(self):
        assert accuracy_se([1, 1, 1, 1]) == (1.0, 0.0)

    def test_half_and_half(self):
        mean, se = accuracy_se([1, 1, 0, 0])
        assert mean == 0.5
        assert se == pytest.approx(math.sqrt(1 / 3) / 2, abs=1e-12)

    def test_single_score_insufficient(self):
        with pytest.raises(InsufficientData):
            accuracy_se([0.5])


class TestRelativeError:
    def test_candidate_equals_reference_is_zero(self):
        rel, _ = relative_error(0.8, 0.01, 0.8)
        assert rel == 0.0

    def test_point9_vs_point8_is_minus_50(self):
        rel, _ = relative_error(0.9, 0.0, 0.8)
        assert rel == pytest.approx(-50.0, abs=1e-12)

    def test_perfect_reference_degenerate(self):
        with pytest.raises(DegenerateReference):
            relative_error(0.9, 0.01, 1.0)

    def test_se_scaled_by_reference_error(self):
        _, rel_se = relative_error(0.9, 0.05, 0.8)
        assert rel_se == pytest.approx(100 * 0.05 / 0.2)
        assert rel_se >= 0


class TestPValue:
    def test_identical_lists_p_one(self):
        scores = [0.0, 0.5, 1.0, 0.5]
        assert p_value(scores, scores) == pytest.approx(1.0)

    def test_complete_separation_near_zero(self):
        assert p_value([1.0] * 50, [0.0] * 50) < 1e-6

    def test_zero_variance_equal_means(self):
        assert p_value([0.5] * 10, [0.5] * 7) == 1.0

    def test_matches_straight_formula_oracle(self):
        a = [1.0, 0.5, 0.5, 0.0, 1.0, 1.0, 0.5]
        b = [0.5, 0.0, 0.5, 0.0, 0.5, 1.0]
        assert p_value(a, b) == pytest.approx(welch_p_oracle(a, b), abs=1e-9)

    def test_oracle_equivalence_randomized(self):
        rng = random.Random(7)
        for _ in range(50):
            n_a = rng.randint(5, 400)
            n_b = rng.randint(5, 400)
            a = [rng.choice([0.0, 0.5, 1.0]) for _ in range(n_a)]
            b = [rng.choice([0.0, 0.5, 1.0]) for _ in range(n_b)]
            assert p_value(a, b) == pytest.approx(welch_p_oracle(a, b), abs=1e-9)

    def test_symmetry(self):
        a = [1.0, 0.5, 0.0, 1.0, 0.5]
        b = [0.0, 0.0, 0.5, 0.5]
        assert p_value(a, b) == pytest.approx(p_value(b, a), abs=1e-15)

    def test_insufficient_data(self):
        with pytest.raises(InsufficientData):
            p_value([1.0], [0.0, 1.0])

    def test_bounds(self):
        rng = random.Random(3)
        for _ in range(20):
            a = [rng.random() for _ in range(rng.randint(2, 30))]
            b = [rng.random() for _ in range(rng.randint(2, 30))]
            assert 0.0 <= p_value(a, b) <= 1.0

    def test_permutation_method_seeded_and_sane(self):
        a = [1.0] * 12 + [0.0] * 3
        b = [0.0] * 12 + [1.0] * 3
        p1 = p_value(a, b, method="permutation", n_resamples=2000, seed=11)
        p2 = p_value(a, b, method="permutation", n_resamples=2000, seed=11)
        assert p1 == p2
        assert p1 < 0.05  # clearly separated means

    def test_permutation_tie_case(self):
        scores = [0.0, 0.5, 1.0] * 4
        assert p_value(scores, scores, method="permutation", n_resamples=500) > 0.9


WIN_CANDIDATE = [1.0] * 45 + [0.5] * 5
WIN_REFERENCE = [0.5] * 40 + [0.0] * 10


class TestClassify:
    def test_equal_samples_tie(self):
        scores = [0.0, 0.5, 1.0, 1.0]
        assert classify(scores, scores).verdict == "Tie"

    def test_constructed_win(self):
        stats = classify(WIN_CANDIDATE, WIN_REFERENCE)
        assert stats.verdict == "Win"
        assert stats.p_value < 0.05
        assert welch_p_oracle(WIN_CANDIDATE, WIN_REFERENCE) < 0.05

    def test_label_swap_gives_loss_with_identical_p(self):
        win = classify(WIN_CANDIDATE, WIN_REFERENCE)
        loss = classify(WIN_REFERENCE, WIN_CANDIDATE)
        assert loss.verdict == "Loss"
        assert loss.p_value == pytest.approx(win.p_value, abs=1e-15)

    def test_near_boundary_alpha_semantics(self):
        # verdict flips exactly at p >= alpha
        stats = classify(WIN_CANDIDATE, WIN_REFERENCE, alpha=stats_p(WIN_CANDIDATE, WIN_REFERENCE))
        assert stats.verdict == "Tie"

    def test_verdict_depends_only_on_moments(self):
        rng = random.Random(5)
        shuffled_c = WIN_CANDIDATE[:]
        shuffled_r = WIN_REFERENCE[:]
        rng.shuffle(shuffled_c)
        rng.shuffle(shuffled_r)
        assert classify(shuffled_c, shuffled_r) == classify(WIN_CANDIDATE, WIN_REFERENCE)

    def test_duplicating_both_samples_preserves_rel_pct(self):
        once = classify(WIN_CANDIDATE, WIN_REFERENCE)
        twice = classify(WIN_CANDIDATE * 2, WIN_REFERENCE * 2)
        assert twice.relative_error_pct == pytest.approx(once.relative_error_pct)

    def test_fields_populated(self):
        stats = classify(WIN_CANDIDATE, WIN_REFERENCE)
        assert stats.n_candidate == 50 and stats.n_reference == 50
        assert 0 <= stats.candidate_accuracy <= 1
        assert stats.rel_se_pct >= 0


def stats_p(a, b):
    return p_value(a, b)


class TestReportEmission:
    def test_writes_json_csv_svg(self, tmp_path):
        entry = ReportEntry(
            task="demo-task",
            candidate="model-a",
            reference="model-b",
            reasoning_effort="medium",
            stats=classify(WIN_CANDIDATE, WIN_REFERENCE),
        )
        paths = write_report([entry], tmp_path)
        assert paths["json"].exists() and paths["csv"].exists()
        svg = paths["svg"].read_text()
        assert svg.lstrip().startswith("<?xml")
        assert "demo-task" in paths["json"].read_text()
        assert "Win" in paths["csv"].read_text()
