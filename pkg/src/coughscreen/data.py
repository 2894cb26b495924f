"""Subjects, recordings, clinical records, manifests, and feature plumbing.

The grouping unit throughout is the cougher (study participant). A cougher
carries one binary TB label, one clinical record with the 16 demographic
and symptom variables, and at least one cough recording.

Manifest format (CSV, UTF-8, header row): recording_id, cougher_id,
tb_label, wav_path, then the 16 clinical columns in ``CLINICAL_FIELDS``
order. wav_path is resolved against the audio root. Clinical values must
all be present; a missing cell is a hard error.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import dsp

log = logging.getLogger(__name__)

CLINICAL_FIELDS = [
    "age",
    "sex",
    "height",
    "weight",
    "cough_duration",
    "prior_tb",
    "prior_tb_pulmonary",
    "prior_tb_extrapulmonary",
    "prior_tb_unknown",
    "hemoptysis",
    "heart_rate",
    "temperature",
    "smoked_last_week",
    "fever",
    "night_sweats",
    "weight_loss",
]
BINARY_CLINICAL_FIELDS = frozenset([
    "sex", "prior_tb", "prior_tb_pulmonary", "prior_tb_extrapulmonary",
    "prior_tb_unknown", "hemoptysis", "smoked_last_week", "fever",
    "night_sweats", "weight_loss",
])
BINARY_CLINICAL_INDICES = tuple(i for i, f in enumerate(CLINICAL_FIELDS)
                                if f in BINARY_CLINICAL_FIELDS)
N_CLINICAL = len(CLINICAL_FIELDS)
N_AUDIO_FEATURES = 261
MANIFEST_COLUMNS = ["recording_id", "cougher_id", "tb_label", "wav_path"] + CLINICAL_FIELDS

# Plausible physiological ranges, checked as warnings only.
_RANGES = {
    "age": (0, 120),
    "height": (50, 250),
    "weight": (20, 300),
    "cough_duration": (0, 3650),
    "heart_rate": (20, 250),
    "temperature": (30, 45),
}


class ManifestError(ValueError):
    """Raised for malformed manifests or inconsistent rows."""


@dataclass(frozen=True)
class ClinicalRecord:
    age: float
    sex: int
    height: float
    weight: float
    cough_duration: float
    prior_tb: int
    prior_tb_pulmonary: int
    prior_tb_extrapulmonary: int
    prior_tb_unknown: int
    hemoptysis: int
    heart_rate: float
    temperature: float
    smoked_last_week: int
    fever: int
    night_sweats: int
    weight_loss: int

    def __post_init__(self):
        for name in BINARY_CLINICAL_FIELDS:
            v = getattr(self, name)
            if v not in (0, 1):
                raise ValueError(f"clinical field {name} must be 0/1, got {v!r}")
        for name, (lo, hi) in _RANGES.items():
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"clinical field {name} is not finite")
            if not lo <= v <= hi:
                log.warning("clinical field %s=%s outside plausible range [%s, %s]",
                            name, v, lo, hi)

    def to_vector(self) -> np.ndarray:
        """Encode as 16 reals in ``CLINICAL_FIELDS`` order (binaries as 0/1)."""
        return np.array([float(getattr(self, f)) for f in CLINICAL_FIELDS])

    @classmethod
    def from_vector(cls, vec) -> "ClinicalRecord":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (N_CLINICAL,):
            raise ValueError(f"expected {N_CLINICAL} clinical values, got {vec.shape}")
        kwargs = {}
        for name, value in zip(CLINICAL_FIELDS, vec):
            kwargs[name] = int(value) if name in BINARY_CLINICAL_FIELDS else float(value)
        return cls(**kwargs)


def encode_clinical(record: ClinicalRecord) -> np.ndarray:
    return record.to_vector()


@dataclass(frozen=True)
class CoughRecording:
    id: str
    cougher_id: str
    waveform: dsp.Waveform

    @property
    def duration_s(self) -> float:
        return self.waveform.duration_s


@dataclass(frozen=True)
class Cougher:
    id: str
    tb_label: int
    clinical: ClinicalRecord
    recordings: tuple

    def __post_init__(self):
        if self.tb_label not in (0, 1):
            raise ValueError(f"tb_label must be 0/1, got {self.tb_label!r}")
        if len(self.recordings) == 0:
            raise ValueError(f"cougher {self.id} has no recordings")
        for rec in self.recordings:
            if rec.cougher_id != self.id:
                raise ValueError(f"recording {rec.id} references cougher "
                                 f"{rec.cougher_id}, not {self.id}")


def _parse_row(row: dict, line_no: int) -> dict:
    for col in MANIFEST_COLUMNS:
        if row.get(col) in (None, ""):
            raise ManifestError(f"manifest line {line_no}: missing value for {col!r}")
    out = {"recording_id": row["recording_id"], "cougher_id": row["cougher_id"],
           "wav_path": row["wav_path"]}
    try:
        out["tb_label"] = int(row["tb_label"])
        clinical = {}
        for name in CLINICAL_FIELDS:
            clinical[name] = (int(row[name]) if name in BINARY_CLINICAL_FIELDS
                              else float(row[name]))
        out["clinical"] = ClinicalRecord(**clinical)
    except (ValueError, TypeError) as exc:
        raise ManifestError(f"manifest line {line_no}: {exc}") from exc
    if out["tb_label"] not in (0, 1):
        raise ManifestError(f"manifest line {line_no}: tb_label must be 0/1")
    return out


def load_manifest(manifest_path, audio_root=None) -> list:
    """Assemble coughers from a manifest CSV, ingesting and validating audio.

    Every referenced WAV must exist and parse; audio is resampled to
    16 kHz and tail-padded to 0.5 s at ingestion. Rows sharing a
    cougher_id must agree on the label and clinical values. Coughers and
    their recordings are returned sorted by id, so results never depend
    on manifest row order.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise ManifestError(f"manifest not found: {manifest_path}")
    root = Path(audio_root) if audio_root is not None else manifest_path.parent

    with open(manifest_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in MANIFEST_COLUMNS if c not in header]
        if missing:
            raise ManifestError(f"manifest is missing columns: {missing}")
        rows = [_parse_row(row, i) for i, row in enumerate(reader, start=2)]
    if not rows:
        raise ManifestError("manifest has no data rows")

    by_cougher: dict = {}
    for row in rows:
        by_cougher.setdefault(row["cougher_id"], []).append(row)

    coughers = []
    for cid in sorted(by_cougher):
        group = by_cougher[cid]
        labels = {r["tb_label"] for r in group}
        if len(labels) > 1:
            raise ManifestError(f"cougher {cid} has conflicting tb_label values")
        clinicals = {r["clinical"] for r in group}
        if len(clinicals) > 1:
            raise ManifestError(f"cougher {cid} has conflicting clinical values")
        seen = set()
        recordings = []
        for r in sorted(group, key=lambda r: r["recording_id"]):
            if r["recording_id"] in seen:
                raise ManifestError(f"duplicate recording_id {r['recording_id']!r}")
            seen.add(r["recording_id"])
            wav_path = root / r["wav_path"]
            if not wav_path.exists():
                raise ManifestError(f"audio file not found: {wav_path}")
            w = dsp.pad_to_duration(dsp.resample(dsp.read_wav(wav_path),
                                                 dsp.TARGET_SAMPLE_RATE_HZ))
            recordings.append(CoughRecording(r["recording_id"], cid, w))
        coughers.append(Cougher(cid, group[0]["tb_label"], group[0]["clinical"],
                                tuple(recordings)))
    log.info("loaded %d coughers, %d recordings, %d TB+",
             len(coughers), sum(len(c.recordings) for c in coughers),
             sum(c.tb_label for c in coughers))
    return coughers


def write_manifest(coughers, manifest_path, wav_paths: dict) -> None:
    """Write a manifest for ``coughers``; ``wav_paths`` maps recording id -> path string."""
    with open(manifest_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for c in coughers:
            clin = [getattr(c.clinical, f) for f in CLINICAL_FIELDS]
            for rec in c.recordings:
                writer.writerow([rec.id, c.id, c.tb_label, wav_paths[rec.id]] + clin)


@dataclass
class StandardScaler:
    """Column-wise z-scoring with parameters frozen at fit time.

    The population std (N denominator) is used. Constant columns and
    explicitly excluded columns pass through unchanged and are flagged.
    """

    means: np.ndarray
    stds: np.ndarray
    passthrough: np.ndarray  # boolean mask of untouched columns
    fitted_on: str = ""

    @property
    def n_features(self) -> int:
        return self.means.size


def fit_scaler(X, fitted_on: str = "", passthrough_cols=()) -> StandardScaler:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("scaler needs a nonempty 2-D matrix")
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    passthrough = np.zeros(X.shape[1], dtype=bool)
    passthrough[list(passthrough_cols)] = True
    constant = stds < 1e-12
    if np.any(constant & ~passthrough):
        log.debug("scaler: %d constant column(s) passed through unscaled",
                  int(np.sum(constant & ~passthrough)))
    passthrough |= constant
    means = np.where(passthrough, 0.0, means)
    stds = np.where(passthrough, 1.0, stds)
    return StandardScaler(means, stds, passthrough, fitted_on)


def apply_scaler(scaler: StandardScaler, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != scaler.n_features:
        raise ValueError(f"scaler fitted on {scaler.n_features} features, "
                         f"cannot apply to shape {X.shape}")
    return (X - scaler.means) / scaler.stds


def fuse(audio_vec, clinical_vec) -> np.ndarray:
    """Concatenate the audio block (261) and clinical block (16), audio first.

    Accepts single vectors or row-aligned matrices.
    """
    a = np.asarray(audio_vec, dtype=np.float64)
    c = np.asarray(clinical_vec, dtype=np.float64)
    if a.shape[-1] != N_AUDIO_FEATURES:
        raise ValueError(f"audio block must have {N_AUDIO_FEATURES} values, got {a.shape[-1]}")
    if c.shape[-1] != N_CLINICAL:
        raise ValueError(f"clinical block must have {N_CLINICAL} values, got {c.shape[-1]}")
    if a.ndim != c.ndim or a.shape[:-1] != c.shape[:-1]:
        raise ValueError(f"audio and clinical blocks disagree on rows: {a.shape} vs {c.shape}")
    return np.concatenate([a, c], axis=-1)
