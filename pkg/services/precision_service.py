# services/precision_service.py
import math
from collections import Counter
from typing import Dict, List, Optional, Sequence, Tuple

from models.biomarker_schemas import SubjectPair
from models.precision_schemas import (
    ExcludedCombination,
    PrecisionReport,
    PrecisionRow,
    PrecisionSettings,
    SubjectPrecision,
)
from models.schemas import BIOMARKER_ORDER, METHOD_ORDER, Biomarker, CIMethod, CovMode, CPPMode, Method, Scan, ZeroMethod
from models.stats_schemas import ConfidenceInterval
from services.background_tasks import run_per_subject
from services.stats_service import confidence_interval, mean_std, select_paired_test
from utils.errors import InputValidationError, InsufficientSamplesError

CIOU_THRESHOLDS: Tuple[Tuple[str, float], ...] = ((">0%", 0.0), (">25%", 0.25), (">50%", 0.5), (">75%", 0.75))


def ciou(ci_a: ConfidenceInterval, ci_b: ConfidenceInterval) -> float:
    """Intersection length over union length of two closed intervals"""
    intersection = max(0.0, min(ci_a.hi, ci_b.hi) - max(ci_a.lo, ci_b.lo))
    union = ci_a.width + ci_b.width - intersection
    if union <= 0.0:
        # both intervals are points
        return 1.0 if (ci_a.lo == ci_b.lo and ci_a.hi == ci_b.hi) else 0.0
    return min(1.0, intersection / union)


def cpp_direction(mean_src: float, ci_dst: ConfidenceInterval) -> bool:
    return ci_dst.lo <= mean_src <= ci_dst.hi


def pairwise_cov(mean_a: float, mean_b: float) -> float:
    """Two-point coefficient of variation in percent: (|a-b|/√2) / ((a+b)/2) x 100"""
    pair_mean = (mean_a + mean_b) / 2.0
    if pair_mean == 0.0:
        raise InputValidationError(f"CoV undefined for a zero pair mean ({mean_a}, {mean_b})")
    return (abs(mean_a - mean_b) / math.sqrt(2.0)) / pair_mean * 100.0


def _fraction_inside(values: Sequence[float], ci: ConfidenceInterval) -> float:
    return sum(1 for v in values if ci.contains(v)) / len(values)


def subject_precision(
    pair: SubjectPair,
    biomarker: Biomarker,
    method: Method,
    ci_method: CIMethod = CIMethod.T_MEAN,
    alpha: float = 0.05,
    ci_level: float = 0.95,
    zero_method: ZeroMethod = ZeroMethod.WILCOX,
) -> SubjectPrecision:
    values_a = pair.get(Scan.A, biomarker, method).values
    values_b = pair.get(Scan.B, biomarker, method).values
    if len(values_a) != len(values_b):
        raise InputValidationError(
            f"subject '{pair.subject_id}' {biomarker.value}/{method.value}: "
            f"scan A has {len(values_a)} samples but scan B has {len(values_b)}"
        )

    mean_a = mean_std(values_a)[0]
    mean_b = mean_std(values_b)[0]
    ci_a = confidence_interval(values_a, ci_level, ci_method)
    ci_b = confidence_interval(values_b, ci_level, ci_method)

    return SubjectPrecision(
        subject_id=pair.subject_id,
        biomarker=biomarker,
        method=method,
        n=len(values_a),
        mean_a=mean_a,
        mean_b=mean_b,
        abs_mean_diff=abs(mean_a - mean_b),
        pairwise_cov=pairwise_cov(mean_a, mean_b),
        ci_a=ci_a,
        ci_b=ci_b,
        cpp_a_in_b=cpp_direction(mean_a, ci_b),
        cpp_b_in_a=cpp_direction(mean_b, ci_a),
        cpp_frac_a_in_b=_fraction_inside(values_a, ci_b),
        cpp_frac_b_in_a=_fraction_inside(values_b, ci_a),
        ciou=ciou(ci_a, ci_b),
        test=select_paired_test(values_a, values_b, alpha, zero_method),
    )


def _percent(count: float, n: int) -> float:
    return 100.0 * count / n


def aggregate_rows(
    rows: List[SubjectPrecision],
    cpp_mode: CPPMode = CPPMode.MEAN,
    cov_mode: CovMode = CovMode.PAIRWISE,
) -> PrecisionRow:
    """Reduce the subjects of one (biomarker, method) to a report row; order-independent"""
    if not rows:
        raise InsufficientSamplesError("cannot aggregate an empty set of subjects")
    n = len(rows)
    diffs = [r.abs_mean_diff for r in rows]
    diff_mean = math.fsum(diffs) / n
    diff_std = mean_std(diffs)[1] if n >= 2 else None

    covs = [r.pairwise_cov for r in rows]
    if cov_mode == CovMode.RMS:
        cov_percent = math.sqrt(math.fsum(c * c for c in covs) / n)
    else:
        cov_percent = math.fsum(covs) / n

    if cpp_mode == CPPMode.SAMPLES:
        cpp_a_to_b = _percent(math.fsum(r.cpp_frac_a_in_b for r in rows), n)
        cpp_b_to_a = _percent(math.fsum(r.cpp_frac_b_in_a for r in rows), n)
    else:
        cpp_a_to_b = _percent(sum(r.cpp_a_in_b for r in rows), n)
        cpp_b_to_a = _percent(sum(r.cpp_b_in_a for r in rows), n)

    thresholds = {label: _percent(sum(1 for r in rows if r.ciou > theta), n) for label, theta in CIOU_THRESHOLDS}

    tests_run = Counter("degenerate" if r.test.degenerate else r.test.test.value for r in rows)

    return PrecisionRow(
        biomarker=rows[0].biomarker,
        method=rows[0].method,
        n_subjects=n,
        diff_mean=diff_mean,
        diff_std=diff_std,
        cov_percent=cov_percent,
        cpp_a_to_b=cpp_a_to_b,
        cpp_b_to_a=cpp_b_to_a,
        ciou_thresholds=thresholds,
        pdp=_percent(sum(1 for r in rows if r.test.rejected), n),
        mean_ciou=math.fsum(r.ciou for r in rows) / n,
        mean_ci_width_a=math.fsum(r.ci_a.width for r in rows) / n,
        mean_ci_width_b=math.fsum(r.ci_b.width for r in rows) / n,
        tests_run=dict(sorted(tests_run.items())),
    )


def aggregate(
    dataset: List[SubjectPrecision],
    name: str = "dataset",
    settings: Optional[PrecisionSettings] = None,
    excluded: Optional[List[ExcludedCombination]] = None,
) -> PrecisionReport:
    settings = settings or PrecisionSettings()
    if not dataset:
        raise InsufficientSamplesError("cannot build a precision report from an empty dataset")

    groups: Dict[Tuple[Biomarker, Method], List[SubjectPrecision]] = {}
    for row in dataset:
        groups.setdefault((row.biomarker, row.method), []).append(row)

    report_rows = [
        aggregate_rows(groups[(b, m)], settings.cpp_mode, settings.cov_mode)
        for b in BIOMARKER_ORDER
        for m in METHOD_ORDER
        if (b, m) in groups
    ]
    return PrecisionReport(dataset=name, settings=settings, rows=report_rows, excluded=list(excluded or []))


class PrecisionService:
    def __init__(self, settings: Optional[PrecisionSettings] = None, zero_method: ZeroMethod = ZeroMethod.WILCOX):
        self.settings = settings or PrecisionSettings()
        self.zero_method = zero_method

    def subject_precision(self, pair: SubjectPair, biomarker: Biomarker, method: Method) -> SubjectPrecision:
        return subject_precision(
            pair,
            biomarker,
            method,
            ci_method=self.settings.ci_method,
            alpha=self.settings.alpha,
            ci_level=self.settings.ci_level,
            zero_method=self.zero_method,
        )

    def evaluate_pair(self, pair: SubjectPair) -> Tuple[List[SubjectPrecision], List[ExcludedCombination]]:
        """Every biomarker of every method of one subject; a failing method is excluded as a whole"""
        rows, excluded = [], []
        for method in pair.methods:
            try:
                rows.extend(
                    self.subject_precision(pair, biomarker, method)
                    for biomarker in BIOMARKER_ORDER
                    if pair.has(biomarker, method)
                )
            except InputValidationError as e:
                rows = [r for r in rows if r.method != method]
                print(f"⚠️ Excluding {pair.subject_id}/{method.value}: {e}")
                excluded.append(ExcludedCombination(subject_id=pair.subject_id, method=method, reason=str(e)))
        return rows, excluded

    def evaluate_dataset(
        self, pairs: List[SubjectPair], threads: Optional[int] = None
    ) -> Tuple[List[SubjectPrecision], List[ExcludedCombination]]:
        """evaluate_pair over every subject on the worker pool, results in subject order"""
        per_subject = run_per_subject(self.evaluate_pair, pairs, threads=threads, label=lambda p: p.subject_id)
        rows = [r for subject_rows, _ in per_subject for r in subject_rows]
        excluded = [e for _, subject_excluded in per_subject for e in subject_excluded]
        return rows, excluded

    def aggregate(self, dataset: List[SubjectPrecision], name: str = "dataset",
                  excluded: Optional[List[ExcludedCombination]] = None) -> PrecisionReport:
        return aggregate(dataset, name, self.settings, excluded)


_precision_service = None


def get_precision_service() -> PrecisionService:
    global _precision_service
    if _precision_service is None:
        _precision_service = PrecisionService()
    return _precision_service


def init_precision_service(settings: PrecisionSettings, zero_method: ZeroMethod = ZeroMethod.WILCOX) -> PrecisionService:
    global _precision_service
    _precision_service = PrecisionService(settings, zero_method)
    print(f"✅ Precision service initialized (CI {settings.ci_method.value}, alpha {settings.alpha})")
    return _precision_service
