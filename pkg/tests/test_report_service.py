# tests/test_report_service.py
import json
import math

import pandas as pd
import pytest

from models.biomarker_schemas import BiomarkerSamples, SubjectPair
from models.schemas import Biomarker, Method, Scan
from services.precision_service import aggregate, subject_precision
from services.report_service import (
    ciou_bars,
    dice_frame,
    read_subjects_csv,
    report_csv_frame,
    report_to_dict,
    write_report_json,
    write_subjects_csv,
)
from utils.errors import ReportInputError
from utils.format_utils import fixed


def _precision(subject, shift, biomarker=Biomarker.LVEF, method=Method.DE):
    a = [60.0, 61.5, 59.25, 60.75, 58.5]
    b = [v + shift for v in [59.5, 61.0, 60.25, 60.0, 59.0]]
    samples = {
        (scan, biomarker, method): BiomarkerSamples(
            subject_id=subject, scan=scan, method=method, biomarker=biomarker, values=values
        )
        for scan, values in ((Scan.A, a), (Scan.B, b))
    }
    return subject_precision(SubjectPair(subject_id=subject, samples=samples), biomarker, method)


def _rows():
    return [_precision(f"S{i}", shift) for i, shift in enumerate([0.0, 0.4, 1.3, 2.5])]


def test_fixed_rendering():
    assert fixed(31.521739) == "31.52"
    assert fixed(-0.001) == "0.00"
    assert fixed(None) is None
    assert fixed(math.inf) is None


def test_report_json_has_rounded_and_raw_values(tmp_path):
    report = aggregate(_rows(), name="demo")
    path = write_report_json(report, tmp_path / "report.json")
    data = json.loads(path.read_text(encoding="utf-8"))
    row = data["rows"][0]
    assert data["dataset"] == "demo"
    assert row["biomarker"] == "LVEF" and row["method"] == "DE"
    assert row["pdp"] == fixed(report.rows[0].pdp)
    assert row["_raw"]["cov_percent"] == report.rows[0].cov_percent
    assert list(row["ciou_thresholds"]) == [">0%", ">25%", ">50%", ">75%"]
    assert data["settings"]["ci_method"] == "t-mean"


def test_csv_and_json_reports_encode_the_same_numbers():
    report = aggregate(_rows())
    as_json = report_to_dict(report)["rows"]
    as_csv = report_csv_frame(report).to_dict(orient="records")
    for j, c in zip(as_json, as_csv):
        for name in ("diff_mean", "diff_std", "cov_percent", "cpp_a_to_b", "cpp_b_to_a", "pdp"):
            assert j[name] == c[name]
        assert j["ciou_thresholds"][">50%"] == c["ciou_gt_50"]


def test_subjects_csv_round_trip(tmp_path):
    rows = _rows()
    path = write_subjects_csv(rows, tmp_path / "subjects.csv")
    assert read_subjects_csv(path) == rows
    header = pd.read_csv(path, nrows=0).columns.tolist()
    assert {"ci_width_a", "cpp_frac_b_in_a", "test_p_value", "normality_p_value"} <= set(header)


def test_subjects_csv_with_infinite_statistic(tmp_path):
    a = [60.0, 61.5, 59.25, 60.75, 58.5]
    samples = {
        (scan, Biomarker.LVEF, Method.DE): BiomarkerSamples(
            subject_id="S9", scan=scan, method=Method.DE, biomarker=Biomarker.LVEF, values=values
        )
        for scan, values in ((Scan.A, a), (Scan.B, [v - 1.0 for v in a]))
    }
    row = subject_precision(SubjectPair(subject_id="S9", samples=samples), Biomarker.LVEF, Method.DE)
    assert row.test.degenerate and math.isinf(row.test.statistic)
    path = write_subjects_csv([row], tmp_path / "subjects.csv")
    assert read_subjects_csv(path) == [row]


def test_malformed_subjects_csv(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("subject_id,biomarker\nS1,LVEF\n", encoding="utf-8")
    with pytest.raises(ReportInputError, match="missing column"):
        read_subjects_csv(path)

    rows_path = write_subjects_csv(_rows(), tmp_path / "subjects.csv")
    df = pd.read_csv(rows_path, dtype=str, keep_default_na=False)
    df.loc[1, "ciou"] = "lots"
    df.to_csv(rows_path, index=False)
    with pytest.raises(ReportInputError, match="line 3"):
        read_subjects_csv(rows_path)


def _with_ciou(values):
    base = _precision("S0", 0.0)
    return [base.model_copy(update={"subject_id": f"S{i}", "ciou": v}) for i, v in enumerate(values)]


@pytest.mark.parametrize(
    "values, expected",
    [
        ([1.0, 1.0, 1.0], ["100.00"] * 4),
        ([0.0, 0.0], ["0.00"] * 4),
        ([0.1, 0.3, 0.6, 0.8], ["100.00", "75.00", "50.00", "25.00"]),
    ],
)
def test_ciou_bars(values, expected):
    bars = ciou_bars(_with_ciou(values))
    assert bars["thresholds"] == [">0%", ">25%", ">50%", ">75%"]
    assert list(bars["bars"][0]["thresholds"].values()) == expected


def test_dice_frame_appends_averages():
    records = [
        {"subject": "S1", "frame": "ED", "structure": "LVBP", "dice": 1.0},
        {"subject": "S2", "frame": "ED", "structure": "LVBP", "dice": 0.5},
        {"subject": "S1", "frame": "ES", "structure": "LVBP", "dice": 0.25},
    ]
    df = dice_frame(records)
    averages = df[df["subject"] == "ALL"].set_index("frame")["dice"].to_dict()
    assert averages == {"ED": 0.75, "ES": 0.25}
