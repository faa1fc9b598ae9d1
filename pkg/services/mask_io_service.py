# services/mask_io_service.py
import json
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

import nibabel as nib
import numpy as np
import pandas as pd
from pydantic import ValidationError

from models.biomarker_schemas import BiomarkerSamples
from models.manifest_schemas import DatasetManifest, DiceManifest
from models.schemas import Biomarker, Method, Scan
from models.volume_schemas import DISK_DTYPES, LabelVolume
from utils.errors import (
    DimensionMismatchError,
    InvalidSpacingError,
    LabelMapError,
    MalformedHeaderError,
    ManifestError,
    MissingFileError,
    UnsupportedDataTypeError,
    VolumeFormatError,
)

PathLike = Union[str, Path]

CPV_MAGIC = "CPV1"
MAX_HEADER_LINE = 256
SAMPLES_COLUMNS = ["subject", "scan", "method", "biomarker", "sample_index", "value"]


# ----------------------------------------------------------------------------
# Label volumes
# ----------------------------------------------------------------------------

def parse_volume(path: PathLike) -> LabelVolume:
    """Read a CPV1 file or an uncompressed single-file NIfTI-1 label volume"""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"mask file not found: {path}")
    name = path.name.lower()
    if name.endswith(".nii.gz") or name.endswith(".gz"):
        raise UnsupportedDataTypeError("compressed volumes are not supported", field="format", path=str(path))
    if name.endswith(".nii"):
        return _parse_nifti(path)
    return _parse_cpv(path.read_bytes(), str(path))


def _header_lines(data: bytes, source: str):
    lines = []
    pos = 0
    for _ in range(5):
        end = data.find(b"\n", pos, pos + MAX_HEADER_LINE + 1)
        if end < 0:
            raise MalformedHeaderError("header truncated or line too long", field="header", path=source)
        try:
            lines.append(data[pos:end].decode("ascii").rstrip("\r"))
        except UnicodeDecodeError:
            raise MalformedHeaderError("header is not ASCII", field="header", path=source)
        pos = end + 1
    return lines, pos


def _tokens(line: str, keyword: str, count: int, source: str) -> List[str]:
    parts = line.split()
    if len(parts) != count + 1 or parts[0] != keyword:
        raise MalformedHeaderError(f"expected '{keyword}' followed by {count} values, got {line!r}", field=keyword, path=source)
    return parts[1:]


def _parse_cpv(data: bytes, source: str) -> LabelVolume:
    lines, offset = _header_lines(data, source)
    if lines[0] != CPV_MAGIC:
        raise MalformedHeaderError(f"bad magic {lines[0]!r}, expected {CPV_MAGIC!r}", field="magic", path=source)

    try:
        dims = tuple(int(t) for t in _tokens(lines[1], "dims", 3, source))
    except ValueError:
        raise MalformedHeaderError(f"dims must be integers, got {lines[1]!r}", field="dims", path=source)
    if any(d <= 0 for d in dims):
        raise MalformedHeaderError(f"dims must be positive, got {dims}", field="dims", path=source)

    try:
        spacing = tuple(float(t) for t in _tokens(lines[2], "spacing", 3, source))
    except ValueError:
        raise MalformedHeaderError(f"spacing must be decimal numbers, got {lines[2]!r}", field="spacing", path=source)
    if any(not math.isfinite(s) or s <= 0 for s in spacing):
        raise InvalidSpacingError(f"spacing must be finite and > 0, got {spacing}", field="spacing", path=source)

    dtype = _tokens(lines[3], "dtype", 1, source)[0]
    if dtype not in DISK_DTYPES:
        raise UnsupportedDataTypeError(f"unsupported dtype {dtype!r} (expected u8 or u16)", field="dtype", path=source)

    if lines[4] != "end":
        raise MalformedHeaderError(f"expected 'end', got {lines[4]!r}", field="end", path=source)

    disk_dtype = DISK_DTYPES[dtype]
    n_voxels = dims[0] * dims[1] * dims[2]
    expected = n_voxels * disk_dtype.itemsize
    actual = len(data) - offset
    if actual != expected:
        raise DimensionMismatchError(
            f"payload holds {actual} bytes but dims {dims} x {dtype} need {expected}",
            field="dims",
            path=source,
        )

    flat = np.frombuffer(data, dtype=disk_dtype, count=n_voxels, offset=offset)
    labels = flat.reshape(dims, order="F")
    return LabelVolume(dims=dims, spacing=spacing, labels=labels, dtype=dtype)


def _parse_nifti(path: Path) -> LabelVolume:
    source = str(path)
    try:
        img = nib.load(source)
    except Exception as e:
        raise MalformedHeaderError(f"unreadable NIfTI file: {e}", field="header", path=source) from e
    if type(img) is not nib.Nifti1Image:
        raise UnsupportedDataTypeError(f"not a single-file NIfTI-1 image ({type(img).__name__})", field="format", path=source)

    header = img.header
    disk_dtype = header.get_data_dtype()
    if disk_dtype.kind not in ("i", "u"):
        raise UnsupportedDataTypeError(f"label volumes need an integer datatype, got {disk_dtype}", field="datatype", path=source)

    shape = img.shape
    if len(shape) == 4 and shape[3] == 1:
        shape = shape[:3]
    if len(shape) != 3:
        raise DimensionMismatchError(f"expected a 3D volume, got shape {img.shape}", field="dim", path=source)

    spacing = tuple(float(z) for z in header.get_zooms()[:3])
    if any(not math.isfinite(s) or s <= 0 for s in spacing):
        raise InvalidSpacingError(f"voxel sizes must be finite and > 0, got {spacing}", field="pixdim", path=source)

    data = np.asarray(img.dataobj.get_unscaled()).reshape(shape)
    if data.size and (int(data.min()) < 0 or int(data.max()) > 65535):
        raise UnsupportedDataTypeError("label values must lie in [0, 65535]", field="datatype", path=source)
    dtype = "u8" if data.size == 0 or int(data.max()) <= 255 else "u16"
    return LabelVolume(dims=shape, spacing=spacing, labels=data, dtype=dtype)


def write_volume(vol: LabelVolume, path: PathLike) -> None:
    """Write vol as CPV1; spacing uses repr so it parses back bit-exact"""
    path = Path(path)
    header = (
        f"{CPV_MAGIC}\n"
        f"dims {vol.dims[0]} {vol.dims[1]} {vol.dims[2]}\n"
        f"spacing {vol.spacing[0]!r} {vol.spacing[1]!r} {vol.spacing[2]!r}\n"
        f"dtype {vol.dtype}\n"
        "end\n"
    ).encode("ascii")
    payload = vol.flat().astype(DISK_DTYPES[vol.dtype]).tobytes()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(header + payload)
    except OSError as e:
        print(f"❌ Error writing volume {path}: {e}")
        raise


def check_labels(vol: LabelVolume, label_map: Dict[str, int], source: Optional[str] = None) -> None:
    allowed = set(label_map.values()) | {0}
    present = set(int(v) for v in np.unique(vol.labels))
    unexpected = sorted(present - allowed)
    if unexpected:
        where = f"{source}: " if source else ""
        raise LabelMapError(f"{where}label values {unexpected} are not in the label map {label_map}")


# ----------------------------------------------------------------------------
# Manifests
# ----------------------------------------------------------------------------

def _read_json(path: Path, what: str) -> dict:
    if not path.is_file():
        raise MissingFileError(f"{what} not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ManifestError(f"{what} {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ManifestError(f"{what} {path} must be a JSON object")
    return data


def _manifest_error(e: ValidationError, data: dict):
    """Turn the first pydantic error into a ManifestError/LabelMapError with subject context"""
    err = e.errors()[0]
    loc = list(err.get("loc", ()))
    msg = str(err.get("msg", "invalid manifest"))
    if msg.startswith("Value error, "):
        msg = msg[len("Value error, "):]

    subject_id = None
    if len(loc) >= 2 and loc[0] == "subjects" and isinstance(loc[1], int):
        raw = data.get("subjects") or []
        if loc[1] < len(raw) and isinstance(raw[loc[1]], dict):
            subject_id = raw[loc[1]].get("id")
        loc = loc[2:]
    if err.get("type") != "value_error" and loc:
        msg = f"{'.'.join(str(p) for p in loc)}: {msg}"

    if loc and loc[0] == "label_map":
        return LabelMapError(msg)
    return ManifestError(msg, subject_id=subject_id)


def load_manifest(path: PathLike, strict: bool = False) -> DatasetManifest:
    """Validate a dataset manifest; strict mode also checks every referenced file up front"""
    path = Path(path)
    data = _read_json(path, "manifest")
    root = path.parent.resolve()
    try:
        manifest = DatasetManifest.model_validate({**data, "root": str(root)}, context={"root": root})
    except ValidationError as e:
        error = _manifest_error(e, data)
        print(f"❌ Invalid manifest {path}: {error}")
        raise error from e

    if strict:
        _check_files_exist(manifest)
    n_values = sorted({s.samples(Scan.A, m).n for s in manifest.subjects for m in s.methods})
    print(f"✅ Loaded manifest '{manifest.name}': {len(manifest.subjects)} subjects, N={n_values}")
    return manifest


def _check_files_exist(manifest: DatasetManifest) -> None:
    for subject in manifest.subjects:
        for scan in subject.scans.values():
            for samples in scan.methods.values():
                for p in list(samples.ed) + list(samples.es):
                    if not p.is_file():
                        raise ManifestError(f"referenced mask file does not exist: {p}", subject_id=subject.subject_id)
    if manifest.precomputed_samples is not None and not manifest.precomputed_samples.is_file():
        raise ManifestError(f"precomputed samples file does not exist: {manifest.precomputed_samples}")


def load_dice_manifest(path: PathLike) -> DiceManifest:
    path = Path(path)
    data = _read_json(path, "dice manifest")
    try:
        return DiceManifest.model_validate(data, context={"root": path.parent.resolve()})
    except ValidationError as e:
        error = _manifest_error(e, data)
        print(f"❌ Invalid dice manifest {path}: {error}")
        raise error from e


# ----------------------------------------------------------------------------
# Precomputed samples CSV
# ----------------------------------------------------------------------------

def load_precomputed_samples(path: PathLike) -> List[BiomarkerSamples]:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"precomputed samples file not found: {path}")
    try:
        df = pd.read_csv(
            path,
            dtype={"subject": str, "scan": str, "method": str, "biomarker": str},
            keep_default_na=False,
            float_precision="round_trip",
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ManifestError(f"unreadable precomputed samples {path}: {e}") from e

    if list(df.columns) != SAMPLES_COLUMNS:
        raise ManifestError(f"precomputed samples header must be {','.join(SAMPLES_COLUMNS)}, got {','.join(map(str, df.columns))}")

    _check_tokens(df, "scan", [s.value for s in Scan])
    _check_tokens(df, "method", [m.value for m in Method])
    _check_tokens(df, "biomarker", [b.value for b in Biomarker])
    df["sample_index"] = pd.to_numeric(df["sample_index"], errors="coerce")
    df["value"] = pd.to_numeric(df["value"], errors="coerce")
    if df["sample_index"].isna().any() or df["value"].isna().any():
        raise ManifestError("precomputed samples contain non-numeric sample_index or value entries")

    result = []
    for (subject, scan, method, biomarker), group in df.groupby(["subject", "scan", "method", "biomarker"], sort=False):
        group = group.sort_values("sample_index")
        indices = group["sample_index"].tolist()
        if indices != list(range(len(indices))):
            raise ManifestError(
                f"{scan}/{method}/{biomarker}: sample indices must be 0..N-1 without gaps, got {indices}",
                subject_id=subject,
            )
        try:
            result.append(
                BiomarkerSamples(
                    subject_id=subject,
                    scan=Scan(scan),
                    method=Method(method),
                    biomarker=Biomarker(biomarker),
                    values=[float(v) for v in group["value"]],
                )
            )
        except ValidationError as e:
            raise ManifestError(f"{scan}/{method}/{biomarker}: {e.errors()[0]['msg']}", subject_id=subject) from e
    print(f"✅ Loaded {len(result)} precomputed sample sets from {path}")
    return result


def _check_tokens(df: pd.DataFrame, column: str, allowed: Iterable[str]) -> None:
    bad = sorted(set(df[column]) - set(allowed))
    if bad:
        raise ManifestError(f"unknown {column} value(s) in precomputed samples: {bad}")


def write_precomputed_samples(samples: Iterable[BiomarkerSamples], path: PathLike) -> None:
    rows = []
    for s in samples:
        for i, value in enumerate(s.values):
            rows.append({
                "subject": s.subject_id,
                "scan": s.scan.value,
                "method": s.method.value,
                "biomarker": s.biomarker.value,
                "sample_index": i,
                "value": float(value),
            })
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=SAMPLES_COLUMNS).to_csv(path, index=False)
