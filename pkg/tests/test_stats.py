import math

import numpy as np
import pytest
from scipy import integrate, special

from momner.stats import (aggregate, paired_t_test,
                          regularized_incomplete_beta,
                          student_t_two_tailed_p, t_critical_two_tailed)


def two_tailed_p_by_quadrature(t, df):
    """Numerical integration of the t density (independent oracle)."""
    def density(x):
        log_norm = (special.gammaln((df + 1) / 2) - special.gammaln(df / 2)
                    - 0.5 * math.log(df * math.pi))
        return math.exp(log_norm) * (1 + x * x / df) ** (-(df + 1) / 2)
    tail, _ = integrate.quad(density, abs(t), np.inf)
    return 2 * tail


class TestAggregate:
    def test_textbook_values(self):
        agg = aggregate([1.0, 2.0, 3.0])
        assert agg.mean == 2.0
        assert agg.std == pytest.approx(1.0)
        assert not agg.degenerate

    def test_single_score(self):
        agg = aggregate([0.5])
        assert agg.std == 0.0
        assert agg.degenerate

    def test_constant_list(self):
        agg = aggregate([0.7, 0.7, 0.7])
        assert agg.std == 0.0
        assert not agg.degenerate

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            aggregate([])

    def test_recomputable(self):
        rng = np.random.default_rng(0)
        scores = rng.normal(size=8)
        agg = aggregate(scores)
        assert agg.mean == pytest.approx(np.mean(agg.scores))
        assert agg.std == pytest.approx(np.std(agg.scores, ddof=1))


class TestIncompleteBeta:
    def test_matches_scipy(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            a = float(rng.uniform(0.1, 20))
            b = float(rng.uniform(0.1, 20))
            x = float(rng.uniform(0, 1))
            assert regularized_incomplete_beta(a, b, x) == pytest.approx(
                special.betainc(a, b, x), abs=1e-10)

    def test_endpoints(self):
        assert regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0
        assert regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            regularized_incomplete_beta(-1.0, 2.0, 0.5)
        with pytest.raises(ValueError):
            regularized_incomplete_beta(1.0, 2.0, 1.5)


class TestTwoTailedP:
    @pytest.mark.parametrize("df", [2, 9, 30])
    def test_matches_quadrature(self, df):
        for t in np.linspace(0.05, 8.0, 60):
            mine = student_t_two_tailed_p(float(t), df)
            assert mine == pytest.approx(two_tailed_p_by_quadrature(t, df),
                                         abs=1e-6)

    def test_t_zero(self):
        assert student_t_two_tailed_p(0.0, 5) == 1.0

    def test_symmetry_in_t(self):
        assert student_t_two_tailed_p(3.1, 7) == \
            student_t_two_tailed_p(-3.1, 7)

    def test_critical_value_df9(self):
        crit = t_critical_two_tailed(0.05, 9)
        assert crit == pytest.approx(2.2622, abs=5e-4)
        assert student_t_two_tailed_p(crit + 1e-3, 9) < 0.05
        assert student_t_two_tailed_p(crit - 1e-3, 9) > 0.05


class TestPairedTTest:
    def test_worked_example(self):
        result = paired_t_test([1.0, 1.0, 1.0], [0.7, 0.7, 0.6])
        assert result.t == pytest.approx(10.0, abs=1e-12)
        assert result.df == 2
        assert result.p == pytest.approx(0.00985, abs=1e-4)
        assert result.significant

    def test_identical_scores_degenerate(self):
        result = paired_t_test([1.0, 2.0], [1.0, 2.0])
        assert result.degenerate
        assert not result.significant
        assert result.p == 1.0

    def test_constant_nonzero_difference(self):
        result = paired_t_test([1.5, 2.5], [1.0, 2.0])
        assert result.degenerate
        assert result.significant
        assert result.p == 0.0
        assert result.t == math.inf

    def test_antisymmetry(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=10)
        b = rng.normal(size=10)
        fwd = paired_t_test(a, b)
        rev = paired_t_test(b, a)
        assert fwd.t == pytest.approx(-rev.t)
        assert fwd.p == pytest.approx(rev.p)

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=8)
        b = rng.normal(size=8)
        base = paired_t_test(a, b)
        shifted = paired_t_test(a + 5.0, b + 5.0)
        assert shifted.t == pytest.approx(base.t, rel=1e-9)
        assert shifted.p == pytest.approx(base.p, rel=1e-9)

    def test_errors(self):
        with pytest.raises(ValueError):
            paired_t_test([1.0, 2.0], [1.0])
        with pytest.raises(ValueError):
            paired_t_test([1.0], [2.0])
