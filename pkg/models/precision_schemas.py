# models/precision_schemas.py
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.schemas import Biomarker, CIMethod, CovMode, CPPMode, Method
from models.stats_schemas import ConfidenceInterval, TestResult


class SubjectPrecision(BaseModel):
    model_config = ConfigDict(frozen=True)

    subject_id: str
    biomarker: Biomarker
    method: Method
    n: int
    mean_a: float
    mean_b: float
    abs_mean_diff: float = Field(ge=0)
    pairwise_cov: float
    ci_a: ConfidenceInterval
    ci_b: ConfidenceInterval
    cpp_a_in_b: bool
    cpp_b_in_a: bool
    # fraction of one scan's samples inside the other scan's CI
    cpp_frac_a_in_b: float = Field(ge=0, le=1)
    cpp_frac_b_in_a: float = Field(ge=0, le=1)
    ciou: float = Field(ge=0, le=1)
    test: TestResult


class PrecisionRow(BaseModel):
    """One (biomarker, method) line of the dataset report"""
    model_config = ConfigDict(frozen=True)

    biomarker: Biomarker
    method: Method
    n_subjects: int
    diff_mean: float
    diff_std: Optional[float] = None
    cov_percent: float
    cpp_a_to_b: float = Field(ge=0, le=100)
    cpp_b_to_a: float = Field(ge=0, le=100)
    ciou_thresholds: Dict[str, float]
    pdp: float = Field(ge=0, le=100)
    mean_ciou: float
    mean_ci_width_a: float
    mean_ci_width_b: float
    tests_run: Dict[str, int] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _non_increasing_thresholds(self):
        values = list(self.ciou_thresholds.values())
        if any(later > earlier for earlier, later in zip(values, values[1:])):
            raise ValueError(f"CIoU threshold percentages must be non-increasing, got {values}")
        return self


class ExcludedCombination(BaseModel):
    model_config = ConfigDict(frozen=True)

    subject_id: str
    method: Method
    reason: str


class PrecisionSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    ci_method: CIMethod = CIMethod.T_MEAN
    ci_level: float = Field(default=0.95, gt=0, lt=1)
    cpp_mode: CPPMode = CPPMode.MEAN
    cov_mode: CovMode = CovMode.PAIRWISE
    alpha: float = Field(default=0.05, gt=0, lt=1)


class PrecisionReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    dataset: str
    settings: PrecisionSettings
    rows: List[PrecisionRow]
    excluded: List[ExcludedCombination] = Field(default_factory=list)

    def row(self, biomarker: Biomarker, method: Method) -> PrecisionRow:
        for r in self.rows:
            if r.biomarker == biomarker and r.method == method:
                return r
        raise KeyError(f"no report row for {biomarker.value}/{method.value}")
