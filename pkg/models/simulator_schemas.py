# models/simulator_schemas.py
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.schemas import Method

Vec3 = Tuple[float, float, float]

# Sample-set sizes per uncertainty method: five ensemble members, ten augmentations / dropout passes
DEFAULT_SAMPLES: Dict[Method, int] = {Method.DE: 5, Method.TTA: 10, Method.MCD: 10}


class PhantomSpec(BaseModel):
    """Concentric-ellipsoid LV plus an RV crescent on a voxel grid.

    Centres and semi-axes are in mm, measured from the grid corner. The RV is
    an ellipsoid centred at lv_center + rv_offset with the LV outer wall cut
    out of it; rv_axes_mm=None builds an LV-only phantom.
    """
    model_config = ConfigDict(frozen=True)

    dims: Tuple[int, int, int]
    spacing: Vec3
    lv_center_mm: Vec3
    lv_inner_mm: Vec3
    lv_outer_mm: Vec3
    rv_offset_mm: Vec3 = (38.0, 0.0, 0.0)
    rv_axes_mm: Optional[Vec3] = None
    es_scale: Vec3 = (1.0, 1.0, 1.0)
    rv_es_scale: Vec3 = (1.0, 1.0, 1.0)
    clip_to_grid: bool = False

    @field_validator("dims")
    @classmethod
    def _positive_dims(cls, v):
        if any(d <= 0 for d in v):
            raise ValueError(f"grid dims must be positive, got {v}")
        return v

    @field_validator("spacing", "lv_inner_mm", "lv_outer_mm", "es_scale", "rv_es_scale")
    @classmethod
    def _positive_vec(cls, v):
        if any(not math.isfinite(x) or x <= 0 for x in v):
            raise ValueError(f"values must be finite and > 0, got {v}")
        return v

    @property
    def lv_ef(self) -> float:
        """Analytic LVEF in percent: the ES cavity is the ED cavity scaled per axis"""
        return (1.0 - math.prod(self.es_scale)) * 100.0

    @property
    def rv_center_mm(self) -> Vec3:
        return tuple(c + o for c, o in zip(self.lv_center_mm, self.rv_offset_mm))

    def shifted(self, translation_mm: Vec3, clip_to_grid: bool = True) -> "PhantomSpec":
        center = tuple(c + t for c, t in zip(self.lv_center_mm, translation_mm))
        return self.model_copy(update={"lv_center_mm": center, "clip_to_grid": clip_to_grid})


class PerturbationSpec(BaseModel):
    """Magnitudes for one family of label-mask perturbations.

    rotation is in-plane about the grid centre, crop removes up to
    crop_fraction_max of the in-plane area, blur sigma is in in-plane voxels.
    """
    model_config = ConfigDict(frozen=True)

    rotation_deg_max: float = Field(default=10.0, ge=0)
    crop_fraction_max: float = Field(default=0.10, ge=0, lt=1)
    blur_sigma_range: Tuple[float, float] = (0.0, 1.0)
    translation_mm: Vec3 = (0.0, 0.0, 0.0)
    seed: Optional[int] = None

    @field_validator("blur_sigma_range")
    @classmethod
    def _ordered_range(cls, v):
        lo, hi = v
        if lo < 0 or hi < lo:
            raise ValueError(f"blur_sigma_range must satisfy 0 <= lo <= hi, got {v}")
        return v

    @classmethod
    def identity(cls) -> "PerturbationSpec":
        return cls(rotation_deg_max=0.0, crop_fraction_max=0.0, blur_sigma_range=(0.0, 0.0))

    @property
    def is_identity(self) -> bool:
        return (
            self.rotation_deg_max == 0
            and self.crop_fraction_max == 0
            and self.blur_sigma_range[1] == 0
            and all(t == 0 for t in self.translation_mm)
        )


class AppliedPerturbation(BaseModel):
    """One concrete draw from a PerturbationSpec"""
    model_config = ConfigDict(frozen=True)

    angle_deg: float = 0.0
    shift_vox: Tuple[int, int, int] = (0, 0, 0)
    crop_fraction: float = 0.0
    sigma: float = 0.0


class MethodProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    samples: Optional[int] = Field(default=None, ge=2)
    within: Optional[PerturbationSpec] = None


def _default_within() -> PerturbationSpec:
    return PerturbationSpec(rotation_deg_max=10.0, crop_fraction_max=0.0, blur_sigma_range=(0.0, 0.0))


def _default_between() -> PerturbationSpec:
    return PerturbationSpec(
        rotation_deg_max=0.0,
        crop_fraction_max=0.0,
        blur_sigma_range=(0.0, 0.0),
        translation_mm=(0.0, 0.0, 4.0),
    )


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "synthetic"
    n_subjects: int = Field(default=20, ge=1)
    samples_per_scan: Optional[int] = Field(default=None, ge=2)
    methods: List[Method] = Field(default_factory=lambda: list(Method))
    within: PerturbationSpec = Field(default_factory=_default_within)
    between: PerturbationSpec = Field(default_factory=_default_between)
    method_overrides: Dict[Method, MethodProfile] = Field(default_factory=dict)

    # subject anatomy draws
    lvef_range: Tuple[float, float] = (55.0, 68.0)
    rvef_range: Tuple[float, float] = (50.0, 62.0)
    lvm_range_g: Tuple[float, float] = (100.0, 140.0)
    lv_inner_ab_range_mm: Tuple[float, float] = (22.0, 27.0)
    lv_inner_c_range_mm: Tuple[float, float] = (36.0, 42.0)

    dims: Tuple[int, int, int] = (88, 72, 16)
    spacing: Vec3 = (1.5, 1.5, 8.0)
    top_margin_mm: float = 8.0
    truth_step_mm: float = Field(default=1.0, gt=0)

    output_dir: Optional[Path] = None
    seed: int = 20240101

    @field_validator("methods")
    @classmethod
    def _unique_methods(cls, v):
        if not v:
            raise ValueError("at least one method is required")
        if len(set(v)) != len(v):
            raise ValueError(f"duplicate methods in {v}")
        return v

    @model_validator(mode="after")
    def _ranges(self):
        for name in ("lvef_range", "rvef_range", "lvm_range_g", "lv_inner_ab_range_mm", "lv_inner_c_range_mm"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
        for name in ("lvef_range", "rvef_range"):
            lo, hi = getattr(self, name)
            if lo <= 0 or hi >= 100:
                raise ValueError(f"{name} must lie inside (0, 100), got {(lo, hi)}")
        return self

    def samples_for(self, method: Method) -> int:
        if self.samples_per_scan is not None:
            return self.samples_per_scan
        profile = self.method_overrides.get(method)
        if profile is not None and profile.samples is not None:
            return profile.samples
        return DEFAULT_SAMPLES[method]

    def within_for(self, method: Method) -> PerturbationSpec:
        profile = self.method_overrides.get(method)
        if profile is not None and profile.within is not None:
            return profile.within
        return self.within


class SubjectTruth(BaseModel):
    model_config = ConfigDict(frozen=True)

    LVEF: float
    RVEF: float
    LVM: float
