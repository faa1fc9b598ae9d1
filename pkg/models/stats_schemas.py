# models/stats_schemas.py
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.schemas import CIMethod, PairedTest, ZeroMethod


class ConfidenceInterval(BaseModel):
    """Closed interval [lo, hi]"""
    model_config = ConfigDict(frozen=True)

    lo: float
    hi: float
    level: float = Field(default=0.95, gt=0, lt=1)
    method: CIMethod = CIMethod.T_MEAN

    @model_validator(mode="after")
    def _ordered(self):
        if self.lo > self.hi:
            raise ValueError(f"interval lower bound {self.lo} exceeds upper bound {self.hi}")
        return self

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi


class NormalityResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    statistic: Optional[float] = None
    p_value: Optional[float] = None
    n: int
    degenerate: bool = False


class TestResult(BaseModel):
    model_config = ConfigDict(frozen=True)
    __test__ = False

    test: PairedTest
    statistic: float
    p_value: float = Field(ge=0, le=1)
    rejected: bool
    alpha: float = 0.05
    degenerate: bool = False
    n: int = 0
    normality_p_value: Optional[float] = None
    zero_method: Optional[ZeroMethod] = None

    @model_validator(mode="after")
    def _verdict_matches_p(self):
        if not self.degenerate and self.rejected != (self.p_value < self.alpha):
            raise ValueError("rejected must equal p_value < alpha for a non-degenerate test")
        return self

    def with_normality(self, p_value: Optional[float]) -> "TestResult":
        return self.model_copy(update={"normality_p_value": p_value})

