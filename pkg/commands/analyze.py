# commands/analyze.py

from pathlib import Path
from typing import List, Optional, Tuple

from models.biomarker_schemas import BiomarkerSamples
from models.manifest_schemas import DatasetManifest, SubjectEntry
from models.precision_schemas import ExcludedCombination, PrecisionReport, PrecisionSettings
from models.schemas import CovMode, CPPMode, OutputFormat, RunConfig, ZeroMethod
from services.background_tasks import run_per_subject
from services.biomarker_service import BiomarkerService, group_into_pairs, init_biomarker_service
from services.mask_io_service import load_manifest, load_precomputed_samples, write_precomputed_samples
from services.precision_service import init_precision_service
from services.report_service import write_report_csv, write_report_json, write_subjects_csv
from utils.errors import DegenerateVolumeError, InsufficientSamplesError

DEFAULT_OUT = Path("results")


def register(subparsers) -> None:
    parser = subparsers.add_parser("analyze", help="Scan-rescan precision report for a dataset manifest")
    parser.add_argument("--manifest", required=True, type=Path, help="dataset manifest JSON")
    parser.add_argument("--ci-method", choices=["t-mean", "normal", "percentile"], default=None)
    parser.add_argument("--ci-level", type=float, default=0.95)
    parser.add_argument("--cpp-mode", choices=[m.value for m in CPPMode], default=CPPMode.MEAN.value)
    parser.add_argument("--cov-mode", choices=[m.value for m in CovMode], default=CovMode.PAIRWISE.value)
    parser.add_argument("--zero-method", choices=[m.value for m in ZeroMethod], default=ZeroMethod.WILCOX.value)
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--format", choices=[f.value for f in OutputFormat], default=OutputFormat.JSON.value)
    parser.add_argument("--out", type=Path, default=None, help=f"output directory (default {DEFAULT_OUT})")
    parser.add_argument("--strict", action="store_true", help="check files eagerly and fail on any exclusion")
    parser.add_argument("--threads", type=int, default=None)


def derive_subject(
    service: BiomarkerService, subject: SubjectEntry
) -> Tuple[List[BiomarkerSamples], List[ExcludedCombination]]:
    """Biomarker samples for every method of one subject; degenerate methods are excluded"""
    samples, excluded = [], []
    for method in subject.methods:
        try:
            samples.extend(service.derive_samples(subject, method))
        except (DegenerateVolumeError, InsufficientSamplesError) as e:
            print(f"⚠️ Excluding {subject.subject_id}/{method.value}: {e}")
            excluded.append(ExcludedCombination(subject_id=subject.subject_id, method=method, reason=str(e)))
    return samples, excluded


def derive_dataset(
    manifest: DatasetManifest, threads: Optional[int] = None
) -> Tuple[List[BiomarkerSamples], List[ExcludedCombination]]:
    if manifest.precomputed_samples is not None:
        print(f"🔍 Using precomputed samples {manifest.precomputed_samples}")
        return load_precomputed_samples(manifest.precomputed_samples), []

    service = init_biomarker_service(manifest.label_map)
    print(f"🔄 Deriving biomarkers for {len(manifest.subjects)} subjects")
    per_subject = run_per_subject(
        lambda subject: derive_subject(service, subject),
        manifest.subjects,
        threads=threads,
        label=lambda subject: subject.subject_id,
    )
    samples = [s for subject_samples, _ in per_subject for s in subject_samples]
    excluded = [e for _, subject_excluded in per_subject for e in subject_excluded]
    return samples, excluded


def settings_from(cfg: RunConfig) -> PrecisionSettings:
    return PrecisionSettings(
        ci_method=cfg.ci_method,
        ci_level=cfg.ci_level,
        cpp_mode=cfg.cpp_mode,
        cov_mode=cfg.cov_mode,
        alpha=cfg.alpha,
    )


def run(cfg: RunConfig) -> int:
    out_dir = Path(cfg.out or DEFAULT_OUT)
    try:
        manifest = load_manifest(cfg.manifest, strict=cfg.strict)
        samples, excluded = derive_dataset(manifest, cfg.threads)

        precision = init_precision_service(settings_from(cfg), cfg.zero_method)
        rows, test_excluded = precision.evaluate_dataset(group_into_pairs(samples), cfg.threads)
        excluded = excluded + test_excluded
        report: PrecisionReport = precision.aggregate(rows, manifest.name, excluded)

        # single writer after the reduction
        write_subjects_csv(rows, out_dir / "subjects.csv")
        write_precomputed_samples(samples, out_dir / "samples.csv")
        if cfg.output_format == OutputFormat.CSV:
            report_path = write_report_csv(report, out_dir / "report.csv")
        else:
            report_path = write_report_json(report, out_dir / "report.json")
    except Exception as e:
        print(f"❌ Error analyzing {cfg.manifest}: {e}")
        raise

    for row in report.rows:
        print(
            f"✅ {row.biomarker.value:<4} {row.method.value:<3} "
            f"diff {row.diff_mean:.2f}  CoV {row.cov_percent:.2f}%  "
            f"CPP {row.cpp_a_to_b:.2f}/{row.cpp_b_to_a:.2f}  PDP {row.pdp:.2f}"
        )
    print(f"🎉 Report written: {report_path}")

    if excluded and cfg.strict:
        print(f"❌ {len(excluded)} subject/method combination(s) excluded under --strict")
        return 2
    return 0
