# models/manifest_schemas.py
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator

from models.schemas import Frame, Method, Scan
from models.volume_schemas import DEFAULT_LABEL_MAP


def _resolve(path_value, info: ValidationInfo):
    """Resolve a manifest path against the manifest directory passed in the validation context"""
    path = Path(path_value)
    root = (info.context or {}).get("root")
    if root is not None and not path.is_absolute():
        path = Path(root) / path
    return path


def merge_label_map(v) -> Dict[str, int]:
    """Overlay a manifest label_map on the defaults; names must be known, values distinct and positive"""
    if v is None:
        return dict(DEFAULT_LABEL_MAP)
    if not isinstance(v, dict):
        raise ValueError("label_map must be an object of structure name -> integer label")
    unknown = sorted(set(v) - set(DEFAULT_LABEL_MAP))
    if unknown:
        raise ValueError(f"unknown label in label_map: {', '.join(unknown)}")
    merged = {**DEFAULT_LABEL_MAP, **v}
    for name, value in merged.items():
        if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
            raise ValueError(f"label for '{name}' must be a positive integer, got {value!r}")
    if len(set(merged.values())) != len(merged):
        raise ValueError(f"label_map values must be distinct, got {merged}")
    return merged


class FrameSamples(BaseModel):
    """ED/ES mask sample lists for one (subject, scan, method)"""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    ed: List[Path] = Field(alias="ED")
    es: List[Path] = Field(alias="ES")

    @field_validator("ed", "es", mode="before")
    @classmethod
    def _resolve_paths(cls, v, info: ValidationInfo):
        if not isinstance(v, list):
            raise ValueError("expected a list of mask paths")
        return [_resolve(p, info) for p in v]

    @model_validator(mode="after")
    def _equal_lengths(self):
        if len(self.ed) != len(self.es):
            raise ValueError(f"unequal ED/ES sample counts ({len(self.ed)} ED vs {len(self.es)} ES)")
        if len(self.ed) < 2:
            raise ValueError(f"need at least 2 samples per frame, got {len(self.ed)}")
        return self

    @property
    def n(self) -> int:
        return len(self.ed)

    def paths(self, frame: Frame) -> List[Path]:
        return self.ed if frame == Frame.ED else self.es


class ScanEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    methods: Dict[Method, FrameSamples]

    @field_validator("methods")
    @classmethod
    def _non_empty(cls, v):
        if not v:
            raise ValueError("scan lists no uncertainty methods")
        return v


class SubjectEntry(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    subject_id: str = Field(alias="id")
    scans: Dict[Scan, ScanEntry]

    @model_validator(mode="after")
    def _both_scans(self):
        for scan in (Scan.A, Scan.B):
            if scan not in self.scans:
                raise ValueError(f"missing scan {scan.value}")
        methods_a = set(self.scans[Scan.A].methods)
        methods_b = set(self.scans[Scan.B].methods)
        if methods_a != methods_b:
            raise ValueError(
                f"scans A and B list different methods ({sorted(m.value for m in methods_a)} vs "
                f"{sorted(m.value for m in methods_b)})"
            )
        for method in methods_a:
            n_a = self.scans[Scan.A].methods[method].n
            n_b = self.scans[Scan.B].methods[method].n
            if n_a != n_b:
                raise ValueError(f"method {method.value}: scan A has N={n_a} but scan B has N={n_b}")
        return self

    @property
    def methods(self) -> List[Method]:
        return sorted(self.scans[Scan.A].methods, key=lambda m: list(Method).index(m))

    def samples(self, scan: Scan, method: Method) -> FrameSamples:
        return self.scans[scan].methods[method]


class DatasetManifest(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    name: str = "dataset"
    label_map: Dict[str, int] = Field(default_factory=lambda: dict(DEFAULT_LABEL_MAP))
    subjects: List[SubjectEntry] = Field(default_factory=list)
    precomputed_samples: Optional[Path] = None
    root: Optional[Path] = None

    @field_validator("label_map", mode="before")
    @classmethod
    def _merge_defaults(cls, v):
        return merge_label_map(v)

    @field_validator("precomputed_samples", mode="before")
    @classmethod
    def _resolve_csv(cls, v, info: ValidationInfo):
        return None if v is None else _resolve(v, info)

    @model_validator(mode="after")
    def _subjects_or_samples(self):
        if not self.subjects and self.precomputed_samples is None:
            raise ValueError("manifest lists no subjects and no precomputed_samples")
        seen = set()
        for subject in self.subjects:
            if subject.subject_id in seen:
                raise ValueError(f"duplicate subject id '{subject.subject_id}'")
            seen.add(subject.subject_id)
        return self


class DiceEntry(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    subject_id: str = Field(alias="id")
    frames: Dict[Frame, Path]

    @field_validator("frames", mode="before")
    @classmethod
    def _resolve_frames(cls, v, info: ValidationInfo):
        if not isinstance(v, dict) or not v:
            raise ValueError("frames must map ED/ES to a mask path")
        return {k: _resolve(p, info) for k, p in v.items()}


class DiceManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    label_map: Dict[str, int] = Field(default_factory=lambda: dict(DEFAULT_LABEL_MAP))
    subjects: List[DiceEntry]

    @field_validator("label_map", mode="before")
    @classmethod
    def _merge_defaults(cls, v):
        return merge_label_map(v)

    def by_subject(self) -> Dict[str, DiceEntry]:
        return {s.subject_id: s for s in self.subjects}
