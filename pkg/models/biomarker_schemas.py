# models/biomarker_schemas.py
import math
from typing import Dict, List, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from models.schemas import Biomarker, Method, Scan


class BiomarkerSamples(BaseModel):
    """N biomarker values for one subject/scan/method; index i pairs with index i of the other scan"""
    model_config = ConfigDict(frozen=True)

    subject_id: str
    scan: Scan
    method: Method
    biomarker: Biomarker
    values: List[float]
    flagged_indices: List[int] = Field(default_factory=list)

    @field_validator("values")
    @classmethod
    def _finite_and_enough(cls, v):
        if len(v) < 2:
            raise ValueError(f"need at least 2 sample values, got {len(v)}")
        bad = [i for i, x in enumerate(v) if not math.isfinite(x)]
        if bad:
            raise ValueError(f"non-finite sample values at indices {bad}")
        return v

    @property
    def n(self) -> int:
        return len(self.values)


class SubjectPair(BaseModel):
    """All sample sets of one subject, keyed by (scan, biomarker, method)"""
    model_config = ConfigDict(frozen=True)

    subject_id: str
    samples: Dict[Tuple[Scan, Biomarker, Method], BiomarkerSamples]

    def get(self, scan: Scan, biomarker: Biomarker, method: Method) -> BiomarkerSamples:
        return self.samples[(scan, biomarker, method)]

    def has(self, biomarker: Biomarker, method: Method) -> bool:
        return (Scan.A, biomarker, method) in self.samples and (Scan.B, biomarker, method) in self.samples

    @property
    def methods(self) -> List[Method]:
        found = {key[2] for key in self.samples}
        return [m for m in Method if m in found]
