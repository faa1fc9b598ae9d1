# services/stats_service.py
import math
from typing import Sequence, Tuple

import numpy as np
from scipy import stats

from models.schemas import CIMethod, PairedTest, ZeroMethod
from models.stats_schemas import ConfidenceInterval, NormalityResult, TestResult
from utils.errors import InputValidationError, InsufficientSamplesError

EXACT_WILCOXON_MAX_N = 25
CONSTANT_RTOL = 1e-12


def _as_array(values: Sequence[float]) -> np.ndarray:
    return np.asarray(values, dtype=float).ravel()


def _is_constant(x: np.ndarray) -> bool:
    """True when the spread is zero relative to the magnitude of the values"""
    if x.size == 0:
        return True
    spread = float(np.max(x) - np.min(x))
    return spread <= CONSTANT_RTOL * float(np.max(np.abs(x)))


def mean_std(values: Sequence[float]) -> Tuple[float, float]:
    """Arithmetic mean and Bessel-corrected sample standard deviation"""
    x = _as_array(values)
    if x.size < 2:
        raise InsufficientSamplesError(f"standard deviation needs at least 2 values, got {x.size}")
    mean = math.fsum(x) / x.size
    var = math.fsum((x - mean) ** 2) / (x.size - 1)
    return mean, math.sqrt(var)


def confidence_interval(
    values: Sequence[float],
    level: float = 0.95,
    method: CIMethod = CIMethod.T_MEAN,
) -> ConfidenceInterval:
    """95% limits by default: t-mean is the CI of the mean, normal-approx spans mean ± z·s,
    percentile takes linear-interpolated empirical quantiles"""
    x = _as_array(values)
    if x.size < 2:
        raise InsufficientSamplesError(f"a confidence interval needs at least 2 values, got {x.size}")
    if not 0.0 < level < 1.0:
        raise InputValidationError(f"confidence level must be in (0,1), got {level}")
    method = CIMethod(method)

    if np.all(x == x[0]):
        # zero spread: the interval holds the value and its mean_std mean, which may differ by an ulp
        v, mean = float(x[0]), mean_std(x)[0]
        return ConfidenceInterval(lo=min(v, mean), hi=max(v, mean), level=level, method=method)

    q = (1.0 + level) / 2.0
    if method == CIMethod.PERCENTILE:
        lo, hi = np.quantile(x, [1.0 - q, q], method="linear")
        return ConfidenceInterval(lo=float(lo), hi=float(hi), level=level, method=method)

    mean, std = mean_std(x)
    if method == CIMethod.T_MEAN:
        half = stats.t.ppf(q, x.size - 1) * std / math.sqrt(x.size)
    else:
        half = stats.norm.ppf(q) * std
    return ConfidenceInterval(lo=mean - half, hi=mean + half, level=level, method=method)


def shapiro_wilk(values: Sequence[float]) -> NormalityResult:
    """Shapiro-Wilk W and p (Royston's approximation, as implemented by scipy)"""
    x = _as_array(values)
    if not 3 <= x.size <= 5000:
        raise InsufficientSamplesError(f"Shapiro-Wilk needs 3 <= n <= 5000, got n={x.size}")
    if np.all(x == x[0]):
        return NormalityResult(n=x.size, degenerate=True)
    w, p = stats.shapiro(x)
    return NormalityResult(statistic=float(w), p_value=min(1.0, max(0.0, float(p))), n=x.size)


def _differences(a: Sequence[float], b: Sequence[float], min_n: int) -> np.ndarray:
    xa, xb = _as_array(a), _as_array(b)
    if xa.size != xb.size:
        raise InputValidationError(f"paired samples must have equal lengths, got {xa.size} and {xb.size}")
    if xa.size < min_n:
        raise InsufficientSamplesError(f"paired test needs at least {min_n} pairs, got {xa.size}")
    return xa - xb


def paired_t_test(a: Sequence[float], b: Sequence[float], alpha: float = 0.05) -> TestResult:
    """Two-sided paired t-test on d = a - b"""
    d = _differences(a, b, 2)
    n = d.size

    if np.all(d == 0):
        return TestResult(test=PairedTest.PAIRED_T, statistic=0.0, p_value=1.0, rejected=False,
                          alpha=alpha, degenerate=True, n=n)
    if _is_constant(d):
        # deterministic nonzero shift: any continuous test rejects
        mean = math.fsum(d) / n
        return TestResult(test=PairedTest.PAIRED_T, statistic=math.copysign(math.inf, mean), p_value=0.0,
                          rejected=True, alpha=alpha, degenerate=True, n=n)

    result = stats.ttest_rel(a, b)
    p = min(1.0, max(0.0, float(result.pvalue)))
    return TestResult(test=PairedTest.PAIRED_T, statistic=float(result.statistic), p_value=p,
                      rejected=p < alpha, alpha=alpha, n=n)


def _signed_rank_counts(doubled_ranks: np.ndarray) -> np.ndarray:
    """counts[s] = number of sign assignments whose doubled positive-rank sum is s"""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    reach = 0
    for r in doubled_ranks:
        r = int(r)
        counts[r:reach + r + 1] += counts[:reach + 1].copy()
        reach += r
    return counts


def wilcoxon_signed_rank(
    a: Sequence[float],
    b: Sequence[float],
    alpha: float = 0.05,
    zero_method: ZeroMethod = ZeroMethod.WILCOX,
) -> TestResult:
    """Two-sided Wilcoxon signed-rank test on d = a - b.

    Exact null distribution for up to 25 non-zero differences, normal
    approximation with continuity correction above that. Ties get average
    ranks; the exact path works on doubled ranks so it stays in integers.
    """
    zero_method = ZeroMethod(zero_method)
    d = _differences(a, b, 1)
    nonzero = d != 0
    n_eff = int(np.count_nonzero(nonzero))
    if n_eff == 0:
        return TestResult(test=PairedTest.WILCOXON, statistic=0.0, p_value=1.0, rejected=False,
                          alpha=alpha, degenerate=True, n=0, zero_method=zero_method)

    if zero_method == ZeroMethod.PRATT:
        ranks = stats.rankdata(np.abs(d))[nonzero]
    else:
        ranks = stats.rankdata(np.abs(d[nonzero]))
    positive = d[nonzero] > 0
    w_plus = float(ranks[positive].sum())
    w_minus = float(ranks[~positive].sum())
    statistic = min(w_plus, w_minus)

    if n_eff <= EXACT_WILCOXON_MAX_N:
        doubled = np.rint(ranks * 2).astype(np.int64)
        counts = _signed_rank_counts(doubled)
        observed = int(round(2 * w_plus))
        lower = int(counts[:observed + 1].sum())
        upper = int(counts[observed:].sum())
        p = min(1.0, 2.0 * min(lower, upper) / 2 ** n_eff)
    else:
        expected = float(ranks.sum()) / 2.0
        variance = float((ranks ** 2).sum()) / 4.0
        z = max(0.0, abs(w_plus - expected) - 0.5) / math.sqrt(variance)
        p = min(1.0, 2.0 * stats.norm.sf(z))

    return TestResult(test=PairedTest.WILCOXON, statistic=statistic, p_value=p, rejected=p < alpha,
                      alpha=alpha, n=n_eff, zero_method=zero_method)


def select_paired_test(
    a: Sequence[float],
    b: Sequence[float],
    alpha: float = 0.05,
    zero_method: ZeroMethod = ZeroMethod.WILCOX,
) -> TestResult:
    """Shapiro-Wilk on the paired differences routes to the paired t-test (p >= alpha) or Wilcoxon"""
    d = _differences(a, b, 3)
    if _is_constant(d):
        # zero spread: no normality test; all-zero is not rejected, a constant shift is
        return paired_t_test(a, b, alpha)
    normality = shapiro_wilk(d)
    if normality.p_value >= alpha:
        result = paired_t_test(a, b, alpha)
    else:
        result = wilcoxon_signed_rank(a, b, alpha, zero_method)
    return result.with_normality(normality.p_value)
