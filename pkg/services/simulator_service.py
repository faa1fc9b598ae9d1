# services/simulator_service.py
import json
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import ndimage, optimize

from models.schemas import Frame, Method, Scan
from models.simulator_schemas import (
    AppliedPerturbation,
    PerturbationSpec,
    PhantomSpec,
    ScenarioConfig,
    SubjectTruth,
    Vec3,
)
from models.biomarker_schemas import BiomarkerSamples, SubjectPair
from models.volume_schemas import DEFAULT_LABEL_MAP, LabelVolume
from services.background_tasks import run_per_subject
from services.biomarker_service import MYOCARDIAL_DENSITY_G_PER_ML, BiomarkerService, group_into_pairs
from services.mask_io_service import write_volume
from utils.errors import PhantomError
from utils.rng_utils import Stream, stream_rng

LVBP = DEFAULT_LABEL_MAP["LVBP"]
MYO = DEFAULT_LABEL_MAP["LV-myocardium"]
RVBP = DEFAULT_LABEL_MAP["RVBP"]

SCAN_INDEX = {Scan.A: 0, Scan.B: 1}
METHOD_INDEX = {m: i for i, m in enumerate(Method)}


# ----------------------------------------------------------------------------
# Phantoms
# ----------------------------------------------------------------------------

def _voxel_centers(spec: PhantomSpec):
    """Sparse (X, Y, Z) grids of voxel-centre coordinates in mm, voxel i centred at (i + 0.5) * s"""
    axes = [(np.arange(n) + 0.5) * s for n, s in zip(spec.dims, spec.spacing)]
    return np.meshgrid(*axes, indexing="ij", sparse=True)


def _inside(grid, center: Vec3, axes: Vec3, scale: Vec3 = (1.0, 1.0, 1.0)) -> np.ndarray:
    X, Y, Z = grid
    return (
        ((X - center[0]) / (axes[0] * scale[0])) ** 2
        + ((Y - center[1]) / (axes[1] * scale[1])) ** 2
        + ((Z - center[2]) / (axes[2] * scale[2])) ** 2
    ) <= 1.0


def _scaled(axes: Vec3, scale: Vec3) -> Vec3:
    return tuple(a * s for a, s in zip(axes, scale))


def check_phantom(spec: PhantomSpec) -> None:
    if any(i >= o for i, o in zip(spec.lv_inner_mm, spec.lv_outer_mm)):
        raise PhantomError(
            f"LV inner semi-axes {spec.lv_inner_mm} must be strictly smaller than outer {spec.lv_outer_mm} "
            "(zero wall thickness)"
        )
    if any(i >= o for i, o in zip(_scaled(spec.lv_inner_mm, spec.es_scale), spec.lv_outer_mm)):
        raise PhantomError(f"ES cavity scaled by {spec.es_scale} reaches the LV outer wall")
    if spec.clip_to_grid:
        return

    extent = [n * s for n, s in zip(spec.dims, spec.spacing)]
    shapes = [("LV", spec.lv_center_mm, spec.lv_outer_mm)]
    if spec.rv_axes_mm is not None:
        shapes.append(("RV", spec.rv_center_mm, spec.rv_axes_mm))
    for name, center, axes in shapes:
        for k, axis in enumerate("xyz"):
            if center[k] - axes[k] < 0 or center[k] + axes[k] > extent[k]:
                raise PhantomError(
                    f"{name} shape exceeds the grid along {axis}: "
                    f"[{center[k] - axes[k]:.2f}, {center[k] + axes[k]:.2f}] mm vs [0, {extent[k]:.2f}] mm"
                )


def generate_phantom(spec: PhantomSpec, frame: Frame) -> LabelVolume:
    """Voxelize the phantom: each voxel takes the label of the shape containing its centre"""
    check_phantom(spec)
    grid = _voxel_centers(spec)
    systole = frame == Frame.ES

    lv_outer = _inside(grid, spec.lv_center_mm, spec.lv_outer_mm)
    cavity = _inside(grid, spec.lv_center_mm, spec.lv_inner_mm, spec.es_scale if systole else (1.0, 1.0, 1.0))

    labels = np.zeros(spec.dims, dtype=np.uint8)
    if spec.rv_axes_mm is not None:
        rv_scale = spec.rv_es_scale if systole else (1.0, 1.0, 1.0)
        rv = _inside(grid, spec.rv_center_mm, spec.rv_axes_mm, rv_scale) & ~lv_outer
        labels[rv] = RVBP
    labels[lv_outer] = MYO
    labels[cavity] = LVBP
    return LabelVolume(dims=spec.dims, spacing=spec.spacing, labels=labels, dtype="u8")


def ellipsoid_volume_ml(axes: Vec3) -> float:
    return 4.0 / 3.0 * math.pi * axes[0] * axes[1] * axes[2] / 1000.0


def rv_volume_ml(spec: PhantomSpec, frame: Frame, step_mm: float = 1.0) -> float:
    """RV crescent volume by midpoint quadrature: RV ellipsoid minus the LV outer wall"""
    if spec.rv_axes_mm is None:
        return 0.0
    axes = _scaled(spec.rv_axes_mm, spec.rv_es_scale if frame == Frame.ES else (1.0, 1.0, 1.0))
    center = spec.rv_center_mm
    coords = []
    for c, a in zip(center, axes):
        n = int(math.ceil(2.0 * a / step_mm))
        start = c - n * step_mm / 2.0
        coords.append(start + (np.arange(n) + 0.5) * step_mm)
    grid = np.meshgrid(*coords, indexing="ij", sparse=True)
    rv = _inside(grid, center, axes) & ~_inside(grid, spec.lv_center_mm, spec.lv_outer_mm)
    return int(np.count_nonzero(rv)) * step_mm ** 3 / 1000.0


def ground_truth(spec: PhantomSpec, step_mm: float = 1.0) -> SubjectTruth:
    """Biomarkers of the continuous phantom, independent of the voxel grid"""
    lvm = MYOCARDIAL_DENSITY_G_PER_ML * (ellipsoid_volume_ml(spec.lv_outer_mm) - ellipsoid_volume_ml(spec.lv_inner_mm))
    rv_ed = rv_volume_ml(spec, Frame.ED, step_mm)
    rv_es = rv_volume_ml(spec, Frame.ES, step_mm)
    rvef = (rv_ed - rv_es) / rv_ed * 100.0 if rv_ed > 0 else 0.0
    return SubjectTruth(LVEF=spec.lv_ef, RVEF=rvef, LVM=lvm)


# ----------------------------------------------------------------------------
# Perturbations
# ----------------------------------------------------------------------------

def draw_perturbation(spec: PerturbationSpec, rng: np.random.Generator, spacing: Vec3) -> AppliedPerturbation:
    """Draw angle, crop and sigma in that fixed order, whatever their magnitudes"""
    angle = float(rng.uniform(-spec.rotation_deg_max, spec.rotation_deg_max))
    crop = float(rng.uniform(0.0, spec.crop_fraction_max))
    sigma = float(rng.uniform(spec.blur_sigma_range[0], spec.blur_sigma_range[1]))
    shift = tuple(int(round(t / s)) for t, s in zip(spec.translation_mm, spacing))
    return AppliedPerturbation(angle_deg=angle, shift_vox=shift, crop_fraction=crop, sigma=sigma)


def _rotate_in_plane(labels: np.ndarray, angle_deg: float, spacing: Vec3) -> np.ndarray:
    """Nearest-neighbour rotation about the z axis through the grid centre, in physical space"""
    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    # output voxel -> input voxel: S^-1 R^T S
    rotation_t = np.array([[cos_t, sin_t, 0.0], [-sin_t, cos_t, 0.0], [0.0, 0.0, 1.0]])
    scale = np.diag(spacing)
    matrix = np.linalg.inv(scale) @ rotation_t @ scale
    center = (np.array(labels.shape, dtype=float) - 1.0) / 2.0
    offset = center - matrix @ center
    return ndimage.affine_transform(labels, matrix, offset=offset, order=0, mode="constant", cval=0, output=labels.dtype)


def _central_crop(labels: np.ndarray, fraction: float) -> np.ndarray:
    """Keep the central (1 - fraction) of the in-plane area, background elsewhere"""
    keep = math.sqrt(1.0 - fraction)
    out = np.zeros_like(labels)
    window = []
    for n in labels.shape[:2]:
        k = int(round(n * keep))
        lo = (n - k) // 2
        window.append(slice(lo, lo + k))
    out[window[0], window[1], :] = labels[window[0], window[1], :]
    return out


def _soft_blur(labels: np.ndarray, sigma: float) -> np.ndarray:
    """Per-label in-plane Gaussian blur of one-hot masks, argmax, then 0.5 threshold"""
    present = [int(v) for v in np.unique(labels) if v != 0]
    if not present:
        return labels.copy()
    soft = np.stack([
        ndimage.gaussian_filter((labels == v).astype(np.float64), sigma=(sigma, sigma, 0.0), mode="constant", cval=0.0)
        for v in present
    ])
    winner = np.argmax(soft, axis=0)
    strength = np.max(soft, axis=0)
    out = np.asarray(present, dtype=labels.dtype)[winner]
    out[strength < 0.5] = 0
    return out


def apply_perturbation(vol: LabelVolume, applied: AppliedPerturbation) -> LabelVolume:
    """Rotation, translation, crop, blur in that order; zero-magnitude steps are skipped"""
    labels = vol.labels
    changed = False
    if applied.angle_deg != 0.0:
        labels = _rotate_in_plane(labels, applied.angle_deg, vol.spacing)
        changed = True
    if any(applied.shift_vox):
        labels = ndimage.shift(labels, applied.shift_vox, order=0, mode="constant", cval=0)
        changed = True
    if applied.crop_fraction > 0.0:
        labels = _central_crop(labels, applied.crop_fraction)
        changed = True
    if applied.sigma > 0.0:
        labels = _soft_blur(labels, applied.sigma)
        changed = True
    if not changed:
        return vol

    if not np.any(labels) and np.any(vol.labels):
        print(f"⚠️ Perturbation {applied.model_dump()} removed every foreground voxel")
    return LabelVolume(dims=vol.dims, spacing=vol.spacing, labels=labels, dtype=vol.dtype)


def perturb(vol: LabelVolume, spec: PerturbationSpec, rng: Optional[np.random.Generator] = None) -> LabelVolume:
    """Draw and apply one perturbation; without an explicit generator the perturbation's own seed is used"""
    if rng is None:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(spec.seed)))
    return apply_perturbation(vol, draw_perturbation(spec, rng, vol.spacing))


# ----------------------------------------------------------------------------
# Scenarios
# ----------------------------------------------------------------------------

def _wall_thickness(inner: Vec3, lvm_g: float) -> float:
    """Uniform wall thickness t giving myocardial mass lvm_g around the inner ellipsoid"""
    target_ml = lvm_g / MYOCARDIAL_DENSITY_G_PER_ML

    def excess(t: float) -> float:
        return ellipsoid_volume_ml(tuple(a + t for a in inner)) - ellipsoid_volume_ml(inner) - target_ml

    return optimize.brentq(excess, 1e-3, 100.0)


class ScenarioGenerator:
    """Builds a synthetic scan/rescan dataset: per-subject phantoms, a between-scan
    replanning shift, and within-scan perturbation samples per uncertainty method.
    """

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg

    def subject_id(self, index: int) -> str:
        return f"S{index + 1:03d}"

    def draw_phantom(self, index: int) -> PhantomSpec:
        cfg = self.cfg
        rng = stream_rng(cfg.seed, Stream.ANATOMY, index)
        lvef = rng.uniform(*cfg.lvef_range)
        rvef = rng.uniform(*cfg.rvef_range)
        lvm = rng.uniform(*cfg.lvm_range_g)
        inner = (
            float(rng.uniform(*cfg.lv_inner_ab_range_mm)),
            float(rng.uniform(*cfg.lv_inner_ab_range_mm)),
            float(rng.uniform(*cfg.lv_inner_c_range_mm)),
        )
        rv_axes = (float(rng.uniform(26.0, 30.0)), float(rng.uniform(30.0, 34.0)), 0.0)
        rv_gap = float(rng.uniform(4.0, 8.0))
        jitter = rng.uniform(0.0, 1.0, size=3) * np.asarray(cfg.spacing)

        wall = _wall_thickness(inner, lvm)
        outer = tuple(a + wall for a in inner)
        rv_axes = (rv_axes[0], rv_axes[1], 0.9 * outer[2])
        extent = [n * s for n, s in zip(cfg.dims, cfg.spacing)]
        center = (
            6.0 + outer[0] + float(jitter[0]),
            extent[1] / 2.0 + float(jitter[1]),
            extent[2] - cfg.top_margin_mm - outer[2] - float(jitter[2]),
        )
        lv_scale = (1.0 - lvef / 100.0) ** (1.0 / 3.0)
        rv_scale = (1.0 - rvef / 100.0) ** (1.0 / 3.0)
        return PhantomSpec(
            dims=cfg.dims,
            spacing=cfg.spacing,
            lv_center_mm=center,
            lv_inner_mm=inner,
            lv_outer_mm=outer,
            rv_offset_mm=(outer[0] + rv_gap, 0.0, 0.0),
            rv_axes_mm=rv_axes,
            es_scale=(lv_scale,) * 3,
            rv_es_scale=(rv_scale,) * 3,
        )

    def scan_bases(self, index: int, spec: PhantomSpec) -> Dict[Scan, Dict[Frame, LabelVolume]]:
        """Scan A is the phantom as planned; scan B is re-voxelized after the replanning
        shift, then given one between-scan perturbation shared by ED and ES"""
        between = self.cfg.between
        bases = {Scan.A: {f: generate_phantom(spec, f) for f in Frame}}

        shift = between.translation_mm
        spec_b = spec.shifted(shift) if any(shift) else spec
        rng = stream_rng(self.cfg.seed, Stream.BETWEEN_SCAN, index)
        residual = between.model_copy(update={"translation_mm": (0.0, 0.0, 0.0)})
        applied = draw_perturbation(residual, rng, spec.spacing)
        bases[Scan.B] = {f: apply_perturbation(generate_phantom(spec_b, f), applied) for f in Frame}
        return bases

    def scan_samples(self, index: int, scan: Scan, method: Method,
                     base: Dict[Frame, LabelVolume]) -> List[Dict[Frame, LabelVolume]]:
        """N within-scan draws; draw i perturbs ED and ES identically"""
        spec = self.cfg.within_for(method)
        samples = []
        for i in range(self.cfg.samples_for(method)):
            rng = stream_rng(self.cfg.seed, Stream.WITHIN_SCAN, index, SCAN_INDEX[scan], METHOD_INDEX[method], i)
            applied = draw_perturbation(spec, rng, base[Frame.ED].spacing)
            samples.append({f: apply_perturbation(base[f], applied) for f in Frame})
        return samples

    def subject_volumes(self, index: int):
        """Phantom spec, scan bases and every within-scan sample of one subject"""
        spec = self.draw_phantom(index)
        bases = self.scan_bases(index, spec)
        samples = {
            scan: {method: self.scan_samples(index, scan, method, bases[scan]) for method in self.cfg.methods}
            for scan in (Scan.A, Scan.B)
        }
        return spec, bases, samples

    def subject_sample_sets(self, index: int, service: Optional[BiomarkerService] = None) -> List[BiomarkerSamples]:
        """Biomarker samples straight from the in-memory volumes, no files written"""
        service = service or BiomarkerService()
        _, _, samples = self.subject_volumes(index)
        sid = self.subject_id(index)
        result = []
        for scan, by_method in samples.items():
            for method, draws in by_method.items():
                frames = ((d[Frame.ED], d[Frame.ES]) for d in draws)
                result.extend(service.samples_from_volumes(sid, scan, method, frames))
        return result

    def simulate_pairs(self, threads: Optional[int] = None) -> List[SubjectPair]:
        """Whole scenario evaluated in memory, ready for the precision service"""
        per_subject = run_per_subject(
            self.subject_sample_sets,
            list(range(self.cfg.n_subjects)),
            threads=threads,
            label=self.subject_id,
        )
        return group_into_pairs([s for subject in per_subject for s in subject])

    def _write_subject(self, index: int, out_dir: Path) -> Tuple[dict, dict, dict, dict]:
        sid = self.subject_id(index)
        spec, bases, samples = self.subject_volumes(index)
        truth = ground_truth(spec, self.cfg.truth_step_mm)
        subject_dir = Path("subjects") / sid

        scans = {}
        prediction_frames = {}
        for scan in (Scan.A, Scan.B):
            methods = {}
            for method in self.cfg.methods:
                frames = {f.value: [] for f in Frame}
                for i, sample in enumerate(samples[scan][method]):
                    for frame in Frame:
                        rel = subject_dir / scan.value / method.value / f"{frame.value}_{i:02d}.cpv"
                        write_volume(sample[frame], out_dir / rel)
                        frames[frame.value].append(rel.as_posix())
                methods[method.value] = frames
            scans[scan.value] = {"methods": methods}
            if scan == Scan.A:
                first = self.cfg.methods[0].value
                prediction_frames = {f.value: methods[first][f.value][0] for f in Frame}

        reference_frames = {}
        for frame in Frame:
            rel = subject_dir / "reference" / f"{frame.value}.cpv"
            write_volume(bases[Scan.A][frame], out_dir / rel)
            reference_frames[frame.value] = rel.as_posix()

        entry = {"id": sid, "scans": scans}
        return entry, truth.model_dump(), {"id": sid, "frames": reference_frames}, {"id": sid, "frames": prediction_frames}

    def generate(self, out_dir: Path, threads: Optional[int] = None) -> Path:
        """Write volumes, manifest.json, ground_truth.json, scenario.json and the Dice manifests"""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        cfg = self.cfg
        print(f"🚀 Simulating {cfg.n_subjects} subjects ({', '.join(m.value for m in cfg.methods)}) into {out_dir}")

        results = run_per_subject(
            lambda index: self._write_subject(index, out_dir),
            list(range(cfg.n_subjects)),
            threads=threads,
            label=self.subject_id,
        )

        manifest = {
            "name": cfg.name,
            "label_map": dict(DEFAULT_LABEL_MAP),
            "subjects": [r[0] for r in results],
        }
        truth = {self.subject_id(i): r[1] for i, r in enumerate(results)}
        dice_reference = {"label_map": dict(DEFAULT_LABEL_MAP), "subjects": [r[2] for r in results]}
        dice_predictions = {"label_map": dict(DEFAULT_LABEL_MAP), "subjects": [r[3] for r in results]}
        effective = cfg.model_dump(mode="json", exclude={"output_dir"})

        _write_json(out_dir / "manifest.json", manifest)
        _write_json(out_dir / "ground_truth.json", truth)
        _write_json(out_dir / "scenario.json", effective)
        _write_json(out_dir / "dice_reference.json", dice_reference)
        _write_json(out_dir / "dice_predictions.json", dice_predictions)
        print(f"🎉 Scenario written: {out_dir / 'manifest.json'}")
        return out_dir / "manifest.json"


def _write_json(path: Path, data: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=False)
        f.write("\n")


def load_scenario_config(path: Path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as f:
        return ScenarioConfig.model_validate(json.load(f))


def generate_scenario(cfg: ScenarioConfig, out_dir: Optional[Path] = None, threads: Optional[int] = None) -> Path:
    target = out_dir or cfg.output_dir
    if target is None:
        raise PhantomError("scenario needs an output directory")
    return ScenarioGenerator(cfg).generate(Path(target), threads=threads)
