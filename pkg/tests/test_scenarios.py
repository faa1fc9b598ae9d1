# tests/test_scenarios.py
"""Whole-scenario checks run in memory through the simulator and precision services"""
from models.schemas import Biomarker, Method
from models.simulator_schemas import PerturbationSpec, ScenarioConfig
from services.precision_service import PrecisionService
from services.simulator_service import ScenarioGenerator


def _report(cfg: ScenarioConfig):
    service = PrecisionService()
    rows, excluded = service.evaluate_dataset(ScenarioGenerator(cfg).simulate_pairs())
    assert not excluded
    return service.aggregate(rows, cfg.name)


def test_replanning_shift_is_detected_though_scans_look_precise():
    cfg = ScenarioConfig(n_subjects=24, samples_per_scan=10, methods=[Method.TTA, Method.MCD])
    report = _report(cfg)
    for method in (Method.TTA, Method.MCD):
        lvef = report.row(Biomarker.LVEF, method)
        assert lvef.pdp > 65.0
        assert lvef.ciou_thresholds[">50%"] < 45.0
        for biomarker in (Biomarker.LVEF, Biomarker.RVEF):
            assert report.row(biomarker, method).cov_percent < 3.0


def _shifted(translation_z: float) -> ScenarioConfig:
    between = PerturbationSpec(
        rotation_deg_max=0.0,
        crop_fraction_max=0.0,
        blur_sigma_range=(0.0, 0.0),
        translation_mm=(0.0, 0.0, translation_z),
    )
    return ScenarioConfig(n_subjects=10, samples_per_scan=10, methods=[Method.TTA], between=between)


def test_larger_shifts_only_lower_agreement():
    rows = [_report(_shifted(z)).row(Biomarker.LVEF, Method.TTA) for z in (0.0, 4.0, 32.0)]
    pdp = [r.pdp for r in rows]
    diffs = [r.diff_mean for r in rows]
    above_half = [r.ciou_thresholds[">50%"] for r in rows]
    mean_ciou = [r.mean_ciou for r in rows]
    assert diffs == sorted(diffs)
    assert pdp == sorted(pdp)
    assert above_half == sorted(above_half, reverse=True)
    assert mean_ciou == sorted(mean_ciou, reverse=True)
    assert pdp[-1] >= 90.0
