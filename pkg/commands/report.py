# commands/report.py

from pathlib import Path

from models.schemas import RunConfig
from services.report_service import read_subjects_csv, write_ciou_bars

DEFAULT_OUT = Path("ciou_bars.json")


def register(subparsers) -> None:
    parser = subparsers.add_parser("report", help="CIoU threshold bar data from a per-subject CSV")
    parser.add_argument("--input", required=True, type=Path, help="subjects.csv written by analyze")
    parser.add_argument("--out", type=Path, default=None, help=f"output JSON (default {DEFAULT_OUT})")


def run(cfg: RunConfig) -> int:
    out_path = Path(cfg.out or DEFAULT_OUT)
    try:
        rows = read_subjects_csv(cfg.input_csv)
        bars = write_ciou_bars(rows, out_path)
    except Exception as e:
        print(f"❌ Error building CIoU bars from {cfg.input_csv}: {e}")
        raise

    for bar in bars["bars"]:
        values = " ".join(f"{label} {v}" for label, v in bar["thresholds"].items())
        print(f"✅ {bar['biomarker']:<4} {bar['method']:<3} {values}")
    print(f"🎉 CIoU bars written: {out_path}")
    return 0
