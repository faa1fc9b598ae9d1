# tests/test_simulator_service.py
import numpy as np
import pytest

from models.schemas import Biomarker, Frame, Method, Scan
from models.simulator_schemas import AppliedPerturbation, PerturbationSpec, PhantomSpec, ScenarioConfig
from models.volume_schemas import LabelVolume
from services.biomarker_service import BiomarkerService
from services.simulator_service import (
    ScenarioGenerator,
    apply_perturbation,
    check_phantom,
    ellipsoid_volume_ml,
    generate_phantom,
    ground_truth,
    perturb,
)
from services.volumetry_service import structure_volumes
from utils.errors import PhantomError


def _lv_phantom(spacing):
    dims = tuple(int(round(e / s)) for e, s in zip((80.0, 80.0, 120.0), spacing))
    return PhantomSpec(
        dims=dims,
        spacing=spacing,
        lv_center_mm=(40.0, 40.0, 60.0),
        lv_inner_mm=(30.0, 30.0, 50.0),
        lv_outer_mm=(34.0, 34.0, 54.0),
    )


def _relative_errors(spacing):
    vol = generate_phantom(_lv_phantom(spacing), Frame.ED)
    volumes = structure_volumes(vol)
    cavity = volumes["LVBP"].volume_ml
    whole = cavity + volumes["LV-myocardium"].volume_ml
    return (
        abs(cavity - ellipsoid_volume_ml((30.0, 30.0, 50.0))) / ellipsoid_volume_ml((30.0, 30.0, 50.0)),
        abs(whole - ellipsoid_volume_ml((34.0, 34.0, 54.0))) / ellipsoid_volume_ml((34.0, 34.0, 54.0)),
    )


def test_voxelized_volumes_converge_to_analytic():
    fine = _relative_errors((1.0, 1.0, 1.0))
    coarse = _relative_errors((2.0, 2.0, 2.0))
    assert fine[0] < 0.02 and fine[1] < 0.02
    assert fine[0] < coarse[0]


def _heart(spacing=(1.0, 1.0, 1.0)):
    dims = tuple(int(round(e / s)) for e, s in zip((112.0, 80.0, 112.0), spacing))
    return PhantomSpec(
        dims=dims,
        spacing=spacing,
        lv_center_mm=(40.0, 40.0, 56.0),
        lv_inner_mm=(25.0, 25.0, 40.0),
        lv_outer_mm=(33.0, 33.0, 48.0),
        rv_offset_mm=(39.0, 0.0, 0.0),
        rv_axes_mm=(28.0, 32.0, 43.0),
        es_scale=(0.75, 0.75, 0.75),
        rv_es_scale=(0.8, 0.8, 0.8),
    )


def test_phantom_labels_and_ejection_fractions():
    spec = _heart()
    ed, es = generate_phantom(spec, Frame.ED), generate_phantom(spec, Frame.ES)
    assert set(np.unique(ed.labels).tolist()) == {0, 1, 2, 3}
    values = BiomarkerService().sample_values(ed, es)
    truth = ground_truth(spec, step_mm=0.5)
    assert spec.lv_ef == pytest.approx(100.0 * (1.0 - 0.75 ** 3))
    assert truth.LVEF == spec.lv_ef
    assert values[Biomarker.LVEF] == pytest.approx(truth.LVEF, abs=1.0)
    assert values[Biomarker.RVEF] == pytest.approx(truth.RVEF, abs=2.0)
    assert values[Biomarker.LVM] == pytest.approx(truth.LVM, rel=0.03)


def test_zero_wall_thickness_rejected():
    spec = _lv_phantom((2.0, 2.0, 2.0)).model_copy(update={"lv_outer_mm": (30.0, 30.0, 50.0)})
    with pytest.raises(PhantomError, match="wall"):
        check_phantom(spec)


def test_shape_outside_grid_needs_clipping():
    spec = _lv_phantom((2.0, 2.0, 2.0)).shifted((0.0, 0.0, 30.0), clip_to_grid=False)
    with pytest.raises(PhantomError, match="exceeds the grid"):
        generate_phantom(spec, Frame.ED)
    clipped = generate_phantom(spec.model_copy(update={"clip_to_grid": True}), Frame.ED)
    full = generate_phantom(_lv_phantom((2.0, 2.0, 2.0)), Frame.ED)
    assert np.count_nonzero(clipped.labels) < np.count_nonzero(full.labels)


def test_identity_perturbation_returns_input():
    vol = generate_phantom(_lv_phantom((2.0, 2.0, 2.0)), Frame.ES)
    assert perturb(vol, PerturbationSpec.identity(), np.random.default_rng(0)) == vol
    assert PerturbationSpec.identity().is_identity


def test_perturb_uses_spec_seed():
    vol = generate_phantom(_lv_phantom((2.0, 2.0, 2.0)), Frame.ED)
    spec = PerturbationSpec(rotation_deg_max=10.0, crop_fraction_max=0.1, blur_sigma_range=(0.5, 1.0), seed=7)
    assert perturb(vol, spec) == perturb(vol, spec)


def test_crop_and_blur_keep_labels_in_map():
    vol = generate_phantom(_heart((2.0, 2.0, 2.0)), Frame.ED)
    cropped = apply_perturbation(vol, AppliedPerturbation(crop_fraction=0.5))
    assert np.count_nonzero(cropped.labels) < np.count_nonzero(vol.labels)
    blurred = apply_perturbation(vol, AppliedPerturbation(sigma=1.0))
    assert set(np.unique(blurred.labels).tolist()) <= {0, 1, 2, 3}
    assert blurred.dims == vol.dims


def test_rotation_preserves_cavity_size_roughly():
    vol = generate_phantom(_heart((2.0, 2.0, 2.0)), Frame.ED)
    rotated = apply_perturbation(vol, AppliedPerturbation(angle_deg=10.0))
    before = np.count_nonzero(vol.labels == 1)
    after = np.count_nonzero(rotated.labels == 1)
    assert after == pytest.approx(before, rel=0.02)
    assert not np.array_equal(rotated.labels, vol.labels)


def test_translation_shifts_voxels():
    labels = np.zeros((4, 4, 6), dtype=np.uint8)
    labels[1, 1, 1] = 2
    vol = LabelVolume.from_array(labels, (1.0, 1.0, 8.0))
    moved = apply_perturbation(vol, AppliedPerturbation(shift_vox=(0, 0, 2)))
    assert moved.labels[1, 1, 3] == 2 and np.count_nonzero(moved.labels) == 1


# ----------------------------------------------------------------------------
# Scenarios
# ----------------------------------------------------------------------------

def _small_scenario(**updates):
    base = dict(n_subjects=3, samples_per_scan=3, methods=[Method.TTA], seed=11)
    base.update(updates)
    return ScenarioConfig(**base)


def test_samples_per_method_defaults_and_overrides():
    cfg = ScenarioConfig()
    assert [cfg.samples_for(m) for m in (Method.DE, Method.TTA, Method.MCD)] == [5, 10, 10]
    custom = ScenarioConfig(method_overrides={"MCD": {"samples": 4, "within": PerturbationSpec.identity()}})
    assert custom.samples_for(Method.MCD) == 4
    assert custom.within_for(Method.MCD).is_identity
    assert ScenarioConfig(samples_per_scan=7).samples_for(Method.DE) == 7


def test_drawn_anatomy_matches_ranges():
    cfg = ScenarioConfig(seed=3)
    generator = ScenarioGenerator(cfg)
    for index in range(5):
        truth = ground_truth(generator.draw_phantom(index), cfg.truth_step_mm)
        assert cfg.lvef_range[0] <= truth.LVEF <= cfg.lvef_range[1]
        assert cfg.lvm_range_g[0] - 1e-6 <= truth.LVM <= cfg.lvm_range_g[1] + 1e-6


def test_identity_scenario_gives_identical_scans():
    cfg = _small_scenario(within=PerturbationSpec.identity(), between=PerturbationSpec.identity())
    generator = ScenarioGenerator(cfg)
    _, bases, samples = generator.subject_volumes(0)
    assert bases[Scan.A][Frame.ED] == bases[Scan.B][Frame.ED]
    assert all(s[Frame.ES] == bases[Scan.A][Frame.ES] for s in samples[Scan.B][Method.TTA])


def test_scenario_is_deterministic_and_seed_sensitive():
    first = ScenarioGenerator(_small_scenario()).subject_sample_sets(1)
    second = ScenarioGenerator(_small_scenario()).subject_sample_sets(1)
    other = ScenarioGenerator(_small_scenario(seed=12)).subject_sample_sets(1)
    assert first == second
    assert [s.values for s in first] != [s.values for s in other]


def test_subjects_are_independent_of_each_other():
    # subject 1 does not depend on how many subjects the scenario holds
    few = ScenarioGenerator(_small_scenario(n_subjects=2)).subject_sample_sets(1)
    many = ScenarioGenerator(_small_scenario(n_subjects=9)).subject_sample_sets(1)
    assert few == many


def test_simulate_pairs_thread_independent():
    generator = ScenarioGenerator(_small_scenario(samples_per_scan=2))
    assert generator.simulate_pairs(threads=1) == generator.simulate_pairs(threads=3)
