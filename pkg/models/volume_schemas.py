# models/volume_schemas.py
import math
from typing import Dict, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

DEFAULT_LABEL_MAP: Dict[str, int] = {
    "LVBP": 1,
    "LV-myocardium": 2,
    "RVBP": 3,
}

DTYPE_LIMITS = {"u8": 255, "u16": 65535}
NATIVE_DTYPES = {"u8": np.uint8, "u16": np.uint16}
DISK_DTYPES = {"u8": np.dtype("<u1"), "u16": np.dtype("<u2")}


class LabelVolume(BaseModel):
    """3D label grid indexed [x, y, z]; spacing in mm per voxel.

    The labels array is stored read-only so a volume can be shared freely
    between worker threads.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    dims: Tuple[int, int, int]
    spacing: Tuple[float, float, float]
    labels: np.ndarray
    dtype: str = "u8"

    @field_validator("dims", mode="before")
    @classmethod
    def _positive_dims(cls, v):
        v = tuple(int(d) for d in v)
        if len(v) != 3 or any(d <= 0 for d in v):
            raise ValueError(f"dims must be positive, got {v}")
        return v

    @field_validator("spacing", mode="before")
    @classmethod
    def _positive_spacing(cls, v):
        v = tuple(float(s) for s in v)
        if len(v) != 3 or any(not math.isfinite(s) or s <= 0 for s in v):
            raise ValueError(f"spacing must be finite and > 0, got {v}")
        return v

    @field_validator("dtype")
    @classmethod
    def _known_dtype(cls, v):
        if v not in DTYPE_LIMITS:
            raise ValueError(f"dtype must be one of {sorted(DTYPE_LIMITS)}, got {v}")
        return v

    @model_validator(mode="after")
    def _check_labels(self):
        arr = np.asarray(self.labels)
        if arr.shape != self.dims:
            raise ValueError(f"labels shape {arr.shape} does not match dims {self.dims}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError(f"labels must be integers, got {arr.dtype}")
        if arr.size and (int(arr.min()) < 0 or int(arr.max()) > DTYPE_LIMITS[self.dtype]):
            raise ValueError(f"label values out of range for {self.dtype}")
        arr = np.array(arr, dtype=NATIVE_DTYPES[self.dtype], copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)
        return self

    @classmethod
    def from_array(cls, labels: np.ndarray, spacing, dtype: str = None) -> "LabelVolume":
        labels = np.asarray(labels)
        if dtype is None:
            dtype = "u8" if labels.size == 0 or int(labels.max()) <= 255 else "u16"
        return cls(dims=labels.shape, spacing=tuple(spacing), labels=labels, dtype=dtype)

    def flat(self) -> np.ndarray:
        """Labels flattened with x fastest, then y, then z"""
        return self.labels.ravel(order="F")

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelVolume):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and self.dtype == other.dtype
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


class StructureVolume(BaseModel):
    structure: str
    volume_ml: float = Field(ge=0)
