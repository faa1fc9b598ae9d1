# models/schemas.py
from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator


class Scan(str, Enum):
    A = "A"
    B = "B"


class Frame(str, Enum):
    ED = "ED"
    ES = "ES"


class Method(str, Enum):
    DE = "DE"
    TTA = "TTA"
    MCD = "MCD"


class Biomarker(str, Enum):
    LVEF = "LVEF"
    RVEF = "RVEF"
    LVM = "LVM"


class CIMethod(str, Enum):
    T_MEAN = "t-mean"
    NORMAL = "normal-approx"
    PERCENTILE = "percentile"

    @classmethod
    def parse(cls, value: str) -> "CIMethod":
        """Accepts the short CLI spelling 'normal' as well as the full value"""
        if value == "normal":
            return cls.NORMAL
        return cls(value)


class CPPMode(str, Enum):
    MEAN = "mean"
    SAMPLES = "samples"


class CovMode(str, Enum):
    PAIRWISE = "pairwise"
    RMS = "rms"


class PairedTest(str, Enum):
    PAIRED_T = "paired-t"
    WILCOXON = "wilcoxon-signed-rank"


class ZeroMethod(str, Enum):
    WILCOX = "wilcox"
    PRATT = "pratt"


class OutputFormat(str, Enum):
    JSON = "json"
    CSV = "csv"


class Command(str, Enum):
    SIMULATE = "simulate"
    ANALYZE = "analyze"
    DICE = "dice"
    REPORT = "report"


# Display order for report rows
BIOMARKER_ORDER = [Biomarker.LVEF, Biomarker.LVM, Biomarker.RVEF]
METHOD_ORDER = [Method.DE, Method.TTA, Method.MCD]


class RunConfig(BaseModel):
    """Everything one CLI invocation needs"""
    command: Command
    manifest: Optional[Path] = None
    scenario: Optional[Path] = None
    input_csv: Optional[Path] = None
    predictions: Optional[Path] = None
    references: Optional[Path] = None
    ci_method: CIMethod = CIMethod.T_MEAN
    ci_level: float = 0.95
    cpp_mode: CPPMode = CPPMode.MEAN
    cov_mode: CovMode = CovMode.PAIRWISE
    zero_method: ZeroMethod = ZeroMethod.WILCOX
    alpha: float = 0.05
    output_format: OutputFormat = Field(default=OutputFormat.JSON, alias="format")
    out: Optional[Path] = None
    strict: bool = False
    seed: Optional[int] = None
    subjects: Optional[int] = None
    samples: Optional[int] = None
    threads: Optional[int] = None

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    @field_validator("alpha", "ci_level")
    @classmethod
    def _open_unit_interval(cls, v: float) -> float:
        if not (0.0 < v < 1.0):
            raise ValueError(f"must be in (0,1), got {v}")
        return v

    @field_validator("subjects", "samples", "threads")
    @classmethod
    def _positive(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 1:
            raise ValueError(f"must be a positive integer, got {v}")
        return v
