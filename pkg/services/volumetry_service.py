# services/volumetry_service.py
from typing import Dict, Optional

import numpy as np

from models.volume_schemas import DEFAULT_LABEL_MAP, LabelVolume, StructureVolume
from utils.errors import DimensionMismatchError, LabelMapError


def voxel_volume_mm3(vol: LabelVolume) -> float:
    sx, sy, sz = vol.spacing
    return sx * sy * sz


def _structure_name(label: int, label_map: Dict[str, int]) -> str:
    for name, value in label_map.items():
        if value == label:
            return name
    raise LabelMapError(f"label {label} is not in the label map {label_map}")


def structure_volume(vol: LabelVolume, label: int, label_map: Optional[Dict[str, int]] = None) -> StructureVolume:
    """Volume in mL of all voxels equal to label: count x voxel volume / 1000"""
    label_map = label_map or DEFAULT_LABEL_MAP
    name = _structure_name(int(label), label_map)
    count = int(np.count_nonzero(vol.labels == label))
    return StructureVolume(structure=name, volume_ml=count * voxel_volume_mm3(vol) / 1000.0)


def structure_volumes(vol: LabelVolume, label_map: Optional[Dict[str, int]] = None) -> Dict[str, StructureVolume]:
    """All named structures in one bincount pass"""
    label_map = label_map or DEFAULT_LABEL_MAP
    top = max(label_map.values())
    counts = np.bincount(vol.labels.ravel(), minlength=top + 1)
    voxel_ml = voxel_volume_mm3(vol) / 1000.0
    return {
        name: StructureVolume(structure=name, volume_ml=int(counts[value]) * voxel_ml)
        for name, value in label_map.items()
    }


def dice(a: LabelVolume, b: LabelVolume, label: int) -> float:
    """2|A∩B| / (|A|+|B|) for voxels equal to label; 1.0 when both are empty"""
    if a.dims != b.dims:
        raise DimensionMismatchError(f"cannot compare volumes with dims {a.dims} and {b.dims}", field="dims")
    mask_a = a.labels == label
    mask_b = b.labels == label
    size_a = int(np.count_nonzero(mask_a))
    size_b = int(np.count_nonzero(mask_b))
    if size_a + size_b == 0:
        return 1.0
    overlap = int(np.count_nonzero(mask_a & mask_b))
    return 2.0 * overlap / (size_a + size_b)
