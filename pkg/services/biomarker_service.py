# services/biomarker_service.py
from typing import Dict, Iterable, List, Optional, Tuple

from models.biomarker_schemas import BiomarkerSamples, SubjectPair
from models.manifest_schemas import SubjectEntry
from models.schemas import Biomarker, Frame, Method, Scan
from models.volume_schemas import DEFAULT_LABEL_MAP, LabelVolume
from services.mask_io_service import check_labels, parse_volume
from services.volumetry_service import structure_volumes
from utils.errors import DegenerateVolumeError, InputValidationError, ManifestError

MYOCARDIAL_DENSITY_G_PER_ML = 1.05


def ejection_fraction(edv: float, esv: float) -> float:
    """(EDV - ESV) / EDV x 100, in percent"""
    if edv <= 0:
        raise DegenerateVolumeError(f"end-diastolic volume must be > 0 (got {edv} mL); empty blood pool at ED?")
    if esv < 0:
        raise InputValidationError(f"end-systolic volume must be >= 0, got {esv} mL")
    return (edv - esv) / edv * 100.0


def lv_mass(myo_ed_volume: float) -> float:
    """Myocardial ED volume (mL) times 1.05 g/mL"""
    if myo_ed_volume < 0:
        raise InputValidationError(f"myocardial volume must be >= 0, got {myo_ed_volume} mL")
    return myo_ed_volume * MYOCARDIAL_DENSITY_G_PER_ML


class BiomarkerService:
    def __init__(self, label_map: Optional[Dict[str, int]] = None):
        self.label_map = dict(label_map or DEFAULT_LABEL_MAP)

    def _volumes(self, vol: LabelVolume) -> Dict[str, float]:
        return {name: sv.volume_ml for name, sv in structure_volumes(vol, self.label_map).items()}

    def sample_values(self, ed: LabelVolume, es: LabelVolume) -> Dict[Biomarker, float]:
        """LVEF and RVEF from blood-pool volumes at ED/ES, LVM from ED myocardium"""
        ed_ml = self._volumes(ed)
        es_ml = self._volumes(es)
        try:
            lvef = ejection_fraction(ed_ml["LVBP"], es_ml["LVBP"])
        except DegenerateVolumeError as e:
            raise e.with_context(structure="LVBP") from e
        try:
            rvef = ejection_fraction(ed_ml["RVBP"], es_ml["RVBP"])
        except DegenerateVolumeError as e:
            raise e.with_context(structure="RVBP") from e
        return {
            Biomarker.LVEF: lvef,
            Biomarker.RVEF: rvef,
            Biomarker.LVM: lv_mass(ed_ml["LV-myocardium"]),
        }

    def samples_from_volumes(
        self,
        subject_id: str,
        scan: Scan,
        method: Method,
        frames: Iterable[Tuple[LabelVolume, LabelVolume]],
    ) -> List[BiomarkerSamples]:
        """One BiomarkerSamples per biomarker from (ED, ES) volume pairs in sample-index order"""
        values = {b: [] for b in Biomarker}
        flagged = {b: [] for b in Biomarker}
        for i, (ed, es) in enumerate(frames):
            context = dict(subject=subject_id, scan=scan.value, method=method.value, sample=i)
            try:
                sample = self.sample_values(ed, es)
            except DegenerateVolumeError as e:
                raise e.with_context(**context) from e
            for biomarker, value in sample.items():
                values[biomarker].append(value)
            for biomarker in (Biomarker.LVEF, Biomarker.RVEF):
                if not 0.0 <= sample[biomarker] <= 100.0:
                    flagged[biomarker].append(i)
                    print(f"⚠️ {biomarker.value} = {sample[biomarker]:.2f}% outside [0, 100] for {subject_id}/{scan.value}/{method.value} sample {i}")
            if sample[Biomarker.LVM] == 0.0:
                flagged[Biomarker.LVM].append(i)
                print(f"⚠️ LVM = 0 g for {subject_id}/{scan.value}/{method.value} sample {i}")

        return [
            BiomarkerSamples(
                subject_id=subject_id,
                scan=scan,
                method=method,
                biomarker=b,
                values=values[b],
                flagged_indices=flagged[b],
            )
            for b in Biomarker
        ]

    def derive_scan(self, subject: SubjectEntry, scan: Scan, method: Method) -> List[BiomarkerSamples]:
        """LVEF, RVEF and LVM sample sets for one scan; value i comes from ED/ES sample i"""
        frames = subject.samples(scan, method)

        def load():
            for ed_path, es_path in zip(frames.paths(Frame.ED), frames.paths(Frame.ES)):
                ed = parse_volume(ed_path)
                check_labels(ed, self.label_map, source=str(ed_path))
                es = parse_volume(es_path)
                check_labels(es, self.label_map, source=str(es_path))
                yield ed, es

        return self.samples_from_volumes(subject.subject_id, scan, method, load())

    def derive_samples(self, subject: SubjectEntry, method: Method) -> List[BiomarkerSamples]:
        """Both scans, three biomarkers each, in sample-index order"""
        samples = []
        for scan in (Scan.A, Scan.B):
            samples.extend(self.derive_scan(subject, scan, method))
        return samples


def group_into_pairs(samples: List[BiomarkerSamples]) -> List[SubjectPair]:
    """Group sample sets by subject (first-appearance order); both scans must be present"""
    by_subject: Dict[str, dict] = {}
    for s in samples:
        bucket = by_subject.setdefault(s.subject_id, {})
        key = (s.scan, s.biomarker, s.method)
        if key in bucket:
            raise ManifestError(f"duplicate sample set {s.scan.value}/{s.biomarker.value}/{s.method.value}", subject_id=s.subject_id)
        bucket[key] = s

    pairs = []
    for subject_id, bucket in by_subject.items():
        scans = {key[0] for key in bucket}
        for scan in (Scan.A, Scan.B):
            if scan not in scans:
                raise ManifestError(f"missing scan {scan.value}", subject_id=subject_id)
        for scan, biomarker, method in bucket:
            other = Scan.B if scan == Scan.A else Scan.A
            if (other, biomarker, method) not in bucket:
                raise ManifestError(f"missing scan {other.value} for {biomarker.value}/{method.value}", subject_id=subject_id)
        pairs.append(SubjectPair(subject_id=subject_id, samples=bucket))
    return pairs


_biomarker_service = None


def get_biomarker_service() -> BiomarkerService:
    global _biomarker_service
    if _biomarker_service is None:
        _biomarker_service = BiomarkerService()
    return _biomarker_service


def init_biomarker_service(label_map: Optional[Dict[str, int]] = None) -> BiomarkerService:
    global _biomarker_service
    _biomarker_service = BiomarkerService(label_map)
    return _biomarker_service
