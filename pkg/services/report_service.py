# services/report_service.py
import json
import math
from pathlib import Path
from typing import Dict, List, Optional, Union

import pandas as pd
from pydantic import ValidationError

from models.precision_schemas import PrecisionReport, PrecisionRow, SubjectPrecision
from models.schemas import BIOMARKER_ORDER, METHOD_ORDER
from models.stats_schemas import ConfidenceInterval, TestResult
from services.precision_service import CIOU_THRESHOLDS
from utils.errors import MissingFileError, ReportInputError
from utils.format_utils import fixed, jsonable

PathLike = Union[str, Path]

# Numeric row fields, rendered with two decimals
ROW_NUMBERS = [
    "diff_mean",
    "diff_std",
    "cov_percent",
    "cpp_a_to_b",
    "cpp_b_to_a",
    "pdp",
    "mean_ciou",
    "mean_ci_width_a",
    "mean_ci_width_b",
]
THRESHOLD_COLUMNS = {label: f"ciou_gt_{label[1:-1]}" for label, _ in CIOU_THRESHOLDS}
REPORT_CSV_COLUMNS = (
    ["biomarker", "method", "n_subjects"]
    + ROW_NUMBERS[:5]
    + list(THRESHOLD_COLUMNS.values())
    + ROW_NUMBERS[5:]
    + ["tests_run"]
)

SUBJECT_COLUMNS = [
    "subject_id", "biomarker", "method", "n",
    "mean_a", "mean_b", "abs_mean_diff", "pairwise_cov",
    "ci_a_lo", "ci_a_hi", "ci_b_lo", "ci_b_hi", "ci_width_a", "ci_width_b", "ci_level", "ci_method",
    "cpp_a_in_b", "cpp_b_in_a", "cpp_frac_a_in_b", "cpp_frac_b_in_a", "ciou",
    "test", "test_statistic", "test_p_value", "test_rejected", "test_alpha", "test_degenerate", "test_n",
    "normality_p_value", "zero_method",
]


def _tests_run_text(tests_run: Dict[str, int]) -> str:
    return ";".join(f"{name}:{count}" for name, count in tests_run.items())


# ----------------------------------------------------------------------------
# Dataset report
# ----------------------------------------------------------------------------

def report_row_dict(row: PrecisionRow) -> dict:
    """One report row with 2-dp strings and the full-precision numbers under _raw"""
    out = {"biomarker": row.biomarker.value, "method": row.method.value, "n_subjects": row.n_subjects}
    for name in ROW_NUMBERS:
        out[name] = fixed(getattr(row, name))
    out["ciou_thresholds"] = {label: fixed(v) for label, v in row.ciou_thresholds.items()}
    out["tests_run"] = dict(row.tests_run)
    out["_raw"] = jsonable({
        **{name: getattr(row, name) for name in ROW_NUMBERS},
        "ciou_thresholds": dict(row.ciou_thresholds),
    })
    return out


def report_to_dict(report: PrecisionReport) -> dict:
    return {
        "dataset": report.dataset,
        "settings": report.settings.model_dump(mode="json"),
        "rows": [report_row_dict(r) for r in report.rows],
        "excluded": [e.model_dump(mode="json") for e in report.excluded],
    }


def write_report_json(report: PrecisionReport, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report_to_dict(report), f, indent=2)
        f.write("\n")
    return path


def report_csv_frame(report: PrecisionReport) -> pd.DataFrame:
    records = []
    for row in report.rows:
        rendered = report_row_dict(row)
        record = {"biomarker": rendered["biomarker"], "method": rendered["method"], "n_subjects": row.n_subjects}
        for name in ROW_NUMBERS:
            record[name] = rendered[name]
        for label, column in THRESHOLD_COLUMNS.items():
            record[column] = rendered["ciou_thresholds"].get(label)
        record["tests_run"] = _tests_run_text(row.tests_run)
        records.append(record)
    return pd.DataFrame(records, columns=REPORT_CSV_COLUMNS)


def write_report_csv(report: PrecisionReport, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    report_csv_frame(report).to_csv(path, index=False)
    return path


# ----------------------------------------------------------------------------
# Per-subject CSV
# ----------------------------------------------------------------------------

def subject_record(sp: SubjectPrecision) -> dict:
    t = sp.test
    return {
        "subject_id": sp.subject_id,
        "biomarker": sp.biomarker.value,
        "method": sp.method.value,
        "n": sp.n,
        "mean_a": sp.mean_a,
        "mean_b": sp.mean_b,
        "abs_mean_diff": sp.abs_mean_diff,
        "pairwise_cov": sp.pairwise_cov,
        "ci_a_lo": sp.ci_a.lo,
        "ci_a_hi": sp.ci_a.hi,
        "ci_b_lo": sp.ci_b.lo,
        "ci_b_hi": sp.ci_b.hi,
        "ci_width_a": sp.ci_a.width,
        "ci_width_b": sp.ci_b.width,
        "ci_level": sp.ci_a.level,
        "ci_method": sp.ci_a.method.value,
        "cpp_a_in_b": sp.cpp_a_in_b,
        "cpp_b_in_a": sp.cpp_b_in_a,
        "cpp_frac_a_in_b": sp.cpp_frac_a_in_b,
        "cpp_frac_b_in_a": sp.cpp_frac_b_in_a,
        "ciou": sp.ciou,
        "test": t.test.value,
        "test_statistic": t.statistic,
        "test_p_value": t.p_value,
        "test_rejected": t.rejected,
        "test_alpha": t.alpha,
        "test_degenerate": t.degenerate,
        "test_n": t.n,
        "normality_p_value": "" if t.normality_p_value is None else t.normality_p_value,
        "zero_method": "" if t.zero_method is None else t.zero_method.value,
    }


def write_subjects_csv(rows: List[SubjectPrecision], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame([subject_record(r) for r in rows], columns=SUBJECT_COLUMNS).to_csv(path, index=False)
    return path


_BOOLS = {"True": True, "False": False, "true": True, "false": False}


def _bool(text: str, column: str) -> bool:
    if text not in _BOOLS:
        raise ReportInputError(f"column '{column}': expected True/False, got {text!r}")
    return _BOOLS[text]


def _subject_from_record(rec: Dict[str, str]) -> SubjectPrecision:
    level = float(rec["ci_level"])
    ci_method = rec["ci_method"]
    test = TestResult(
        test=rec["test"],
        statistic=float(rec["test_statistic"]),
        p_value=float(rec["test_p_value"]),
        rejected=_bool(rec["test_rejected"], "test_rejected"),
        alpha=float(rec["test_alpha"]),
        degenerate=_bool(rec["test_degenerate"], "test_degenerate"),
        n=int(rec["test_n"]),
        normality_p_value=float(rec["normality_p_value"]) if rec["normality_p_value"] else None,
        zero_method=rec["zero_method"] or None,
    )
    return SubjectPrecision(
        subject_id=rec["subject_id"],
        biomarker=rec["biomarker"],
        method=rec["method"],
        n=int(rec["n"]),
        mean_a=float(rec["mean_a"]),
        mean_b=float(rec["mean_b"]),
        abs_mean_diff=float(rec["abs_mean_diff"]),
        pairwise_cov=float(rec["pairwise_cov"]),
        ci_a=ConfidenceInterval(lo=float(rec["ci_a_lo"]), hi=float(rec["ci_a_hi"]), level=level, method=ci_method),
        ci_b=ConfidenceInterval(lo=float(rec["ci_b_lo"]), hi=float(rec["ci_b_hi"]), level=level, method=ci_method),
        cpp_a_in_b=_bool(rec["cpp_a_in_b"], "cpp_a_in_b"),
        cpp_b_in_a=_bool(rec["cpp_b_in_a"], "cpp_b_in_a"),
        cpp_frac_a_in_b=float(rec["cpp_frac_a_in_b"]),
        cpp_frac_b_in_a=float(rec["cpp_frac_b_in_a"]),
        ciou=float(rec["ciou"]),
        test=test,
    )


def read_subjects_csv(path: PathLike) -> List[SubjectPrecision]:
    """Inverse of write_subjects_csv; any malformed line is a ReportInputError naming the line"""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"per-subject CSV not found: {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ReportInputError(f"unreadable per-subject CSV {path}: {e}") from e

    missing = [c for c in SUBJECT_COLUMNS if c not in df.columns]
    if missing:
        raise ReportInputError(f"{path}: missing column(s) {', '.join(missing)}")

    rows = []
    for line, rec in enumerate(df.to_dict(orient="records"), start=2):
        try:
            rows.append(_subject_from_record(rec))
        except (ValueError, ValidationError) as e:
            raise ReportInputError(f"{path} line {line}: {e}") from e
    if not rows:
        raise ReportInputError(f"{path}: no subject rows")
    return rows


# ----------------------------------------------------------------------------
# CIoU bar chart data
# ----------------------------------------------------------------------------

def ciou_bars(rows: List[SubjectPrecision]) -> dict:
    """Per (biomarker, method), the percentage of subjects above each CIoU threshold"""
    groups: Dict[tuple, List[float]] = {}
    for r in rows:
        groups.setdefault((r.biomarker, r.method), []).append(r.ciou)

    bars = []
    for biomarker in BIOMARKER_ORDER:
        for method in METHOD_ORDER:
            values = groups.get((biomarker, method))
            if not values:
                continue
            raw = {label: 100.0 * sum(1 for c in values if c > theta) / len(values) for label, theta in CIOU_THRESHOLDS}
            bars.append({
                "biomarker": biomarker.value,
                "method": method.value,
                "n_subjects": len(values),
                "thresholds": {label: fixed(v) for label, v in raw.items()},
                "_raw": raw,
            })
    return {"thresholds": [label for label, _ in CIOU_THRESHOLDS], "bars": bars}


def write_ciou_bars(rows: List[SubjectPrecision], path: PathLike) -> dict:
    bars = ciou_bars(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(bars, f, indent=2)
        f.write("\n")
    return bars


# ----------------------------------------------------------------------------
# Dice table
# ----------------------------------------------------------------------------

DICE_COLUMNS = ["subject", "frame", "structure", "dice"]


def dice_frame(records: List[dict]) -> pd.DataFrame:
    """Per-structure per-frame rows followed by one 'ALL' average row per structure and frame"""
    df = pd.DataFrame(records, columns=DICE_COLUMNS)
    if df.empty:
        return df
    averages = (
        df.groupby(["frame", "structure"], sort=False)["dice"]
        .apply(lambda s: math.fsum(s) / len(s))
        .reset_index()
    )
    averages.insert(0, "subject", "ALL")
    return pd.concat([df, averages[DICE_COLUMNS]], ignore_index=True)


def write_dice_csv(records: List[dict], path: Optional[PathLike]) -> pd.DataFrame:
    df = dice_frame(records)
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False)
    return df

