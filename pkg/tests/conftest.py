# tests/conftest.py
import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from models.volume_schemas import LabelVolume  # noqa: E402
from services.mask_io_service import write_volume  # noqa: E402


def box_volume(dims=(10, 10, 4), spacing=(1.0, 1.0, 1.0), lv=8, myo=4, rv=6) -> LabelVolume:
    """Label volume with the given voxel counts of LVBP (1), myocardium (2) and RVBP (3)"""
    flat = np.zeros(int(np.prod(dims)), dtype=np.uint8)
    flat[:lv] = 1
    flat[lv:lv + myo] = 2
    flat[lv + myo:lv + myo + rv] = 3
    return LabelVolume.from_array(flat.reshape(dims, order="F"), spacing)


def write_subject_manifest(root: Path, subjects: dict, method: str = "DE", name: str = "fixture") -> Path:
    """Write CPV masks and a manifest.

    subjects maps subject id -> {"A": [(ed, es), ...], "B": [(ed, es), ...]}.
    """
    entries = []
    for sid, scans in subjects.items():
        scan_entries = {}
        for scan, frames in scans.items():
            ed_paths, es_paths = [], []
            for i, (ed, es) in enumerate(frames):
                ed_rel = f"{sid}/{scan}/ED_{i:02d}.cpv"
                es_rel = f"{sid}/{scan}/ES_{i:02d}.cpv"
                write_volume(ed, root / ed_rel)
                write_volume(es, root / es_rel)
                ed_paths.append(ed_rel)
                es_paths.append(es_rel)
            scan_entries[scan] = {"methods": {method: {"ED": ed_paths, "ES": es_paths}}}
        entries.append({"id": sid, "scans": scan_entries})
    path = root / "manifest.json"
    path.write_text(json.dumps({"name": name, "subjects": entries}), encoding="utf-8")
    return path


@pytest.fixture
def small_volume() -> LabelVolume:
    return LabelVolume.from_array(np.array([0, 1, 1, 2], dtype=np.uint8).reshape((2, 2, 1), order="F"), (1.0, 1.0, 1.0))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
