# tests/test_stats_service.py
import itertools
import math

import numpy as np
import pytest
from scipy import stats

from models.schemas import CIMethod, PairedTest, ZeroMethod
from services.stats_service import (
    confidence_interval,
    mean_std,
    paired_t_test,
    select_paired_test,
    shapiro_wilk,
    wilcoxon_signed_rank,
)
from utils.errors import InputValidationError, InsufficientSamplesError


# ----------------------------------------------------------------------------
# Confidence intervals
# ----------------------------------------------------------------------------

def _mean60_sd2():
    c = math.sqrt(3.6)
    return [60.0 + c] * 5 + [60.0 - c] * 5


def test_mean_std_bessel():
    mean, std = mean_std(_mean60_sd2())
    assert mean == pytest.approx(60.0)
    assert std == pytest.approx(2.0)


def test_t_mean_interval():
    ci = confidence_interval(_mean60_sd2(), 0.95, CIMethod.T_MEAN)
    assert ci.lo == pytest.approx(58.569, abs=1e-3)
    assert ci.hi == pytest.approx(61.431, abs=1e-3)


def test_normal_approx_interval():
    ci = confidence_interval(_mean60_sd2(), 0.95, CIMethod.NORMAL)
    assert ci.lo == pytest.approx(56.08, abs=1e-2)
    assert ci.hi == pytest.approx(63.92, abs=1e-2)


def test_percentile_interval_linear_interpolation():
    ci = confidence_interval([1.0, 2.0, 3.0, 4.0, 5.0], 0.95, CIMethod.PERCENTILE)
    # positions 0.025 * 4 = 0.1 and 0.975 * 4 = 3.9
    assert ci.lo == pytest.approx(1.1)
    assert ci.hi == pytest.approx(4.9)


@pytest.mark.parametrize("method", list(CIMethod))
def test_identical_values_give_point_interval(method):
    ci = confidence_interval([61.0] * 10, 0.95, method)
    assert (ci.lo, ci.hi) == (61.0, 61.0)


def test_point_interval_contains_value_and_mean(rng):
    for v in rng.uniform(40.0, 70.0, size=200):
        values = [float(v)] * 10
        ci = confidence_interval(values)
        assert ci.lo <= float(v) <= ci.hi
        assert ci.lo <= mean_std(values)[0] <= ci.hi


def test_interval_needs_two_values():
    with pytest.raises(InsufficientSamplesError):
        confidence_interval([1.0])
    with pytest.raises(InputValidationError):
        confidence_interval([1.0, 2.0], level=1.0)


def test_t_quantile_reference():
    assert stats.t.ppf(0.975, 9) == pytest.approx(2.2622, abs=1e-4)


# ----------------------------------------------------------------------------
# Shapiro-Wilk
# ----------------------------------------------------------------------------

X1 = [0.11, 7.87, 4.61, 10.14, 7.95, 3.14, 0.46, 4.43, 0.21, 4.75, 0.71, 1.52, 3.24, 0.93, 0.42, 4.97, 9.53, 4.55, 0.47, 6.66]
X2 = [1.36, 1.14, 2.92, 2.55, 1.46, 1.06, 5.27, -1.11, 3.48, 1.10, 0.88, -0.51, 1.46, 0.52, 6.20, 1.69, 0.08, 3.67, 2.81, 3.49]
NORMAL_GRID_10 = [float(q) for q in stats.norm.ppf((np.arange(1, 11) - 0.5) / 10)]


def _three_point_p(w):
    return max(0.0, 6.0 / math.pi * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75))))


@pytest.mark.parametrize(
    "values, w, p",
    [
        (X1, 0.90047, 0.04209),
        (X2, 0.95903, 0.52460),
        ([1.0, 2.0, 4.0], 4.5 / (42.0 / 9.0), _three_point_p(4.5 / (42.0 / 9.0))),
        ([1.0, 2.0, 3.0], 1.0, 1.0),
        ([0.0, 0.0, 1.0], 0.75, 0.0),
    ],
)
def test_shapiro_wilk_reference_values(values, w, p):
    result = shapiro_wilk(values)
    assert result.statistic == pytest.approx(w, abs=1e-3)
    assert result.p_value == pytest.approx(p, abs=1e-3)


def test_shapiro_wilk_normal_grid_and_outlier():
    assert shapiro_wilk(NORMAL_GRID_10).p_value > 0.05
    assert shapiro_wilk([1.0] * 9 + [100.0]).p_value < 0.05


def test_shapiro_wilk_constant_and_small():
    assert shapiro_wilk([2.0, 2.0, 2.0]).degenerate
    with pytest.raises(InsufficientSamplesError):
        shapiro_wilk([1.0, 2.0])


# ----------------------------------------------------------------------------
# Paired t-test
# ----------------------------------------------------------------------------

def test_paired_t_known_value():
    b = [10.0, 11.0, 9.0, 12.0, 10.5]
    a = [x + d for x, d in zip(b, [1.0, 2.0, 3.0, 4.0, 5.0])]
    result = paired_t_test(a, b)
    assert result.statistic == pytest.approx(3.0 * math.sqrt(2.0), rel=1e-9)
    assert result.p_value == pytest.approx(2.0 * stats.t.sf(3.0 * math.sqrt(2.0), 4), abs=1e-6)
    assert result.p_value == pytest.approx(0.013236, abs=1e-5)
    assert result.rejected


def test_paired_t_all_zero_differences():
    result = paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert result.degenerate and not result.rejected and result.p_value == 1.0


def test_paired_t_constant_shift():
    result = paired_t_test([2.0, 3.0, 4.0], [1.0, 2.0, 3.0])
    assert result.degenerate and result.rejected
    assert result.statistic == math.inf


def test_paired_lengths_must_match():
    with pytest.raises(InputValidationError):
        paired_t_test([1.0, 2.0], [1.0, 2.0, 3.0])


# ----------------------------------------------------------------------------
# Wilcoxon signed-rank
# ----------------------------------------------------------------------------

def _brute_force_p(a, b, zero_method):
    """Two-sided exact p by enumerating every sign assignment of the ranks"""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    nonzero = d != 0
    if not nonzero.any():
        return 1.0
    if zero_method == ZeroMethod.PRATT:
        ranks = stats.rankdata(np.abs(d))[nonzero]
    else:
        ranks = stats.rankdata(np.abs(d[nonzero]))
    doubled = [int(round(2 * r)) for r in ranks]
    observed = sum(r for r, pos in zip(doubled, d[nonzero] > 0) if pos)
    lower = upper = 0
    for signs in itertools.product((0, 1), repeat=len(doubled)):
        total = sum(r for r, s in zip(doubled, signs) if s)
        lower += total <= observed
        upper += total >= observed
    return min(1.0, 2.0 * min(lower, upper) / 2 ** len(doubled))


def test_wilcoxon_matches_sign_flip_enumeration(rng):
    for case in range(200):
        n = int(rng.integers(3, 13))
        if case % 2:
            # coarse integers force ties and zero differences
            a = rng.integers(0, 5, size=n).astype(float)
            b = rng.integers(0, 5, size=n).astype(float)
        else:
            a = rng.normal(60.0, 2.0, size=n)
            b = rng.normal(60.5, 2.0, size=n)
        zero_method = ZeroMethod.PRATT if case % 4 == 3 else ZeroMethod.WILCOX
        result = wilcoxon_signed_rank(a, b, zero_method=zero_method)
        assert result.p_value == _brute_force_p(a, b, zero_method)


def test_wilcoxon_matches_scipy_exact_without_ties():
    a = [1.83, 0.50, 1.62, 2.48, 1.68, 1.88, 1.55, 3.06, 1.30]
    b = [0.878, 0.647, 0.598, 2.05, 1.06, 1.29, 1.06, 3.14, 1.29]
    ours = wilcoxon_signed_rank(a, b)
    reference = stats.wilcoxon(a, b, method="exact")
    assert ours.statistic == pytest.approx(reference.statistic)
    assert ours.p_value == pytest.approx(reference.pvalue, abs=1e-12)
    assert ours.p_value == pytest.approx(0.0390625)


def test_wilcoxon_smallest_n5_p_cannot_reject():
    result = wilcoxon_signed_rank([2.0, 3.0, 4.0, 5.0, 6.0], [1.0, 1.5, 2.0, 2.5, 3.0])
    assert result.p_value == pytest.approx(0.0625)
    assert not result.rejected


def test_wilcoxon_large_n_normal_approximation(rng):
    a = rng.normal(0.0, 1.0, size=40)
    b = a - rng.normal(0.3, 1.0, size=40)
    ours = wilcoxon_signed_rank(a, b)
    reference = stats.wilcoxon(a, b, method="approx", correction=True)
    assert ours.p_value == pytest.approx(reference.pvalue, rel=1e-9)


def test_wilcoxon_all_zero_is_degenerate():
    result = wilcoxon_signed_rank([1.0, 2.0], [1.0, 2.0])
    assert result.degenerate and result.p_value == 1.0 and not result.rejected


# ----------------------------------------------------------------------------
# Test selection
# ----------------------------------------------------------------------------

def test_select_routes_normal_differences_to_t():
    b = [60.0, 61.5, 59.0, 62.0, 60.5, 58.5, 61.0, 59.5, 60.0, 62.5]
    a = [x + 1.0 + d for x, d in zip(b, NORMAL_GRID_10)]
    result = select_paired_test(a, b)
    assert result.test == PairedTest.PAIRED_T
    assert result.normality_p_value > 0.05


def test_select_routes_skewed_differences_to_wilcoxon():
    b = [0.0] * 12
    a = [0.01, 0.02, 0.02, 0.03, 0.03, 0.04, 0.05, 0.06, 0.08, 0.1, 5.0, 9.0]
    result = select_paired_test(a, b)
    assert result.test == PairedTest.WILCOXON
    assert result.normality_p_value < 0.05


def test_select_constant_differences():
    same = select_paired_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert same.degenerate and not same.rejected
    shifted = select_paired_test([2.0, 3.0, 4.0], [1.0, 2.0, 3.0])
    assert shifted.degenerate and shifted.rejected


def test_select_needs_three_pairs():
    with pytest.raises(InsufficientSamplesError):
        select_paired_test([1.0, 2.0], [2.0, 1.0])
