# commands/dice.py

import math
from pathlib import Path
from typing import List

from models.manifest_schemas import DiceManifest
from models.schemas import Frame, RunConfig
from services.background_tasks import run_per_subject
from services.mask_io_service import check_labels, load_dice_manifest, parse_volume
from services.report_service import write_dice_csv
from services.volumetry_service import dice
from utils.errors import ManifestError

DEFAULT_OUT = Path("dice.csv")


def register(subparsers) -> None:
    parser = subparsers.add_parser("dice", help="Dice overlap between predicted and reference masks")
    parser.add_argument("--predictions", required=True, type=Path, help="dice manifest of predicted masks")
    parser.add_argument("--references", required=True, type=Path, help="dice manifest of reference masks")
    parser.add_argument("--out", type=Path, default=None, help=f"output CSV (default {DEFAULT_OUT})")
    parser.add_argument("--threads", type=int, default=None)


def match_subjects(predictions: DiceManifest, references: DiceManifest):
    """(prediction, reference) entries per subject; subjects and frames must match exactly"""
    refs = references.by_subject()
    pairs = []
    for entry in predictions.subjects:
        ref = refs.get(entry.subject_id)
        if ref is None:
            raise ManifestError("missing from the reference manifest", subject_id=entry.subject_id)
        if set(entry.frames) != set(ref.frames):
            raise ManifestError(
                f"frame keys differ: predictions {sorted(f.value for f in entry.frames)}, "
                f"references {sorted(f.value for f in ref.frames)}",
                subject_id=entry.subject_id,
            )
        pairs.append((entry, ref))
    extra = sorted(set(refs) - {e.subject_id for e in predictions.subjects})
    if extra:
        raise ManifestError("missing from the predictions manifest", subject_id=extra[0])
    return pairs


def subject_dice(pair, label_map) -> List[dict]:
    entry, ref = pair
    records = []
    for frame in Frame:
        if frame not in entry.frames:
            continue
        predicted = parse_volume(entry.frames[frame])
        reference = parse_volume(ref.frames[frame])
        check_labels(predicted, label_map, source=str(entry.frames[frame]))
        check_labels(reference, label_map, source=str(ref.frames[frame]))
        for structure, label in label_map.items():
            records.append({
                "subject": entry.subject_id,
                "frame": frame.value,
                "structure": structure,
                "dice": dice(predicted, reference, label),
            })
    return records


def run(cfg: RunConfig) -> int:
    out_path = Path(cfg.out or DEFAULT_OUT)
    try:
        predictions = load_dice_manifest(cfg.predictions)
        references = load_dice_manifest(cfg.references)
        label_map = references.label_map
        pairs = match_subjects(predictions, references)
        per_subject = run_per_subject(
            lambda pair: subject_dice(pair, label_map),
            pairs,
            threads=cfg.threads,
            label=lambda pair: pair[0].subject_id,
        )
        records = [r for subject_records in per_subject for r in subject_records]
        table = write_dice_csv(records, out_path)
    except Exception as e:
        print(f"❌ Error computing Dice scores: {e}")
        raise

    averages = table[table["subject"] == "ALL"]
    for _, row in averages.iterrows():
        print(f"✅ {row['frame']} {row['structure']:<14} Dice {row['dice']:.4f}")
    if records:
        overall = math.fsum(r["dice"] for r in records) / len(records)
        print(f"🎉 Mean Dice over all structures: {overall:.4f} ({out_path})")
    return 0
