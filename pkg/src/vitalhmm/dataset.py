"""Vital-sign recordings, fixed-length frames, labeling, and patient splits.

Recordings are 1 Hz three-channel signals (RF, RRi, SpO2) with gaps encoded
as NaN. Frames are non-overlapping 1200-sample windows with no missing
entries. Labels come from event logs: a frame is positive when a blood
culture for the same patient falls within the 72 hours after the frame
start, negative when the frame's UTC day carries no events at all for that
patient, and discarded otherwise. Splits are done at the patient level.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ContractError

CHANNELS = ("RF", "RRi", "SpO2")
FRAME_LEN = 1200
SEPSIS_WINDOW_SECONDS = 72 * 3600
SECONDS_PER_DAY = 86400

BLOOD_CULTURE = "blood_culture"
NOTE = "note"
EVENT_KINDS = (BLOOD_CULTURE, NOTE)


@dataclass
class Recording:
    """One patient's contiguous 1 Hz signal block."""

    patient_id: str
    start_epoch: int
    samples: np.ndarray  # (L, 3), NaN marks missing entries

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 2 or self.samples.shape[1] != len(CHANNELS):
            raise ContractError(
                f"recording needs {len(CHANNELS)} channels, got shape {self.samples.shape}"
            )


@dataclass(frozen=True)
class EhrEvent:
    patient_id: str
    event_epoch: int
    kind: str

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ContractError(f"unknown event kind {self.kind!r}")


@dataclass
class Frame:
    """Exactly FRAME_LEN seconds of complete three-channel signal."""

    patient_id: str
    start_epoch: int
    data: np.ndarray  # (FRAME_LEN, 3)
    label: int | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape != (FRAME_LEN, len(CHANNELS)):
            raise ContractError(
                f"frame must be {FRAME_LEN}x{len(CHANNELS)}, got {self.data.shape}"
            )
        if np.isnan(self.data).any():
            raise ContractError("frame contains missing samples")


@dataclass
class Dataset:
    frames: list
    patients: list = field(default_factory=list)

    def __post_init__(self):
        if not self.patients:
            self.patients = sorted({f.patient_id for f in self.frames})
        missing = {f.patient_id for f in self.frames} - set(self.patients)
        if missing:
            raise ContractError(f"frames reference unknown patients {sorted(missing)}")

    def __len__(self):
        return len(self.frames)

    def labels(self):
        return np.array([f.label for f in self.frames], dtype=int)

    def stacked(self):
        """(B, FRAME_LEN, n_channels) array of all frame data."""
        return np.stack([f.data for f in self.frames])


def segment(recording):
    """Cut a recording into clean, non-overlapping FRAME_LEN windows.

    Windows are anchored at the recording start; any window containing a
    NaN is dropped, as is a trailing remainder shorter than FRAME_LEN.
    """
    L = recording.samples.shape[0]
    frames = []
    for k in range(L // FRAME_LEN):
        chunk = recording.samples[k * FRAME_LEN : (k + 1) * FRAME_LEN]
        if np.isnan(chunk).any():
            continue
        frames.append(
            Frame(
                patient_id=recording.patient_id,
                start_epoch=recording.start_epoch + k * FRAME_LEN,
                data=chunk.copy(),
            )
        )
    return frames


def label_frames(frames, events):
    """Assign labels from event logs; frames matching neither rule are dropped.

    The positive rule is checked first: a blood culture for the frame's
    patient at most 72 h after (and not before) the frame start. The
    negative rule requires the frame's UTC day to be free of events of any
    kind for that patient.
    """
    cultures = {}
    event_days = {}
    for ev in events:
        if ev.kind == BLOOD_CULTURE:
            cultures.setdefault(ev.patient_id, []).append(ev.event_epoch)
        event_days.setdefault(ev.patient_id, set()).add(
            ev.event_epoch // SECONDS_PER_DAY
        )

    labeled = []
    for f in frames:
        delta_ok = any(
            0 <= c - f.start_epoch <= SEPSIS_WINDOW_SECONDS
            for c in cultures.get(f.patient_id, ())
        )
        if delta_ok:
            labeled.append(
                Frame(f.patient_id, f.start_epoch, f.data, label=1)
            )
            continue
        day = f.start_epoch // SECONDS_PER_DAY
        if day not in event_days.get(f.patient_id, set()):
            labeled.append(
                Frame(f.patient_id, f.start_epoch, f.data, label=0)
            )
    return Dataset(labeled)


def patient_split(dataset, test_fraction, seed):
    """Disjoint train/test datasets split by patient.

    The test side gets round(test_fraction * n_patients) patients, clipped
    to [1, n_patients - 1] so neither side is empty.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ContractError(f"test fraction {test_fraction} outside (0, 1)")
    patients = sorted(dataset.patients)
    P = len(patients)
    if P < 2:
        raise ContractError("patient split needs at least two patients")
    n_test = int(round(test_fraction * P))
    n_test = min(max(n_test, 1), P - 1)
    rng = np.random.default_rng(seed)
    order = rng.permutation(P)
    test_ids = {patients[i] for i in order[:n_test]}
    train = [f for f in dataset.frames if f.patient_id not in test_ids]
    test = [f for f in dataset.frames if f.patient_id in test_ids]
    return (
        Dataset(train, sorted(set(patients) - test_ids)),
        Dataset(test, sorted(test_ids)),
    )


def write_signals_csv(path, recording):
    """One row per second: epoch,RF,RRi,SpO2 with blanks for missing."""
    epochs = recording.start_epoch + np.arange(recording.samples.shape[0])
    df = pd.DataFrame(
        {
            "epoch": epochs,
            **{c: recording.samples[:, i] for i, c in enumerate(CHANNELS)},
        }
    )
    df.to_csv(path, index=False, na_rep="")


def load_signals_csv(path, patient_id):
    df = pd.read_csv(path)
    expected = ["epoch"] + list(CHANNELS)
    if list(df.columns) != expected:
        raise ContractError(
            f"signals file {path} has columns {list(df.columns)}, expected {expected}"
        )
    if len(df) == 0:
        return Recording(patient_id, 0, np.empty((0, len(CHANNELS))))
    epochs = df["epoch"].to_numpy(dtype=np.int64)
    if not np.all(np.diff(epochs) == 1):
        raise ContractError(f"signals file {path} is not contiguous at 1 Hz")
    samples = df[list(CHANNELS)].to_numpy(dtype=float)
    return Recording(patient_id, int(epochs[0]), samples)


def write_events_csv(path, events):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "epoch", "kind"])
        for ev in events:
            w.writerow([ev.patient_id, ev.event_epoch, ev.kind])


def load_events_csv(path):
    events = []
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if r.fieldnames != ["patient_id", "epoch", "kind"]:
            raise ContractError(
                f"events file {path} has columns {r.fieldnames}"
            )
        for row in r:
            events.append(
                EhrEvent(row["patient_id"], int(row["epoch"]), row["kind"])
            )
    return events


def load_cohort(signal_paths, events_path):
    """Ingest per-patient signal files plus one event log into a Dataset.

    ``signal_paths`` maps patient id to CSV path. Patients whose recordings
    produce no labeled frames simply contribute nothing.
    """
    events = load_events_csv(events_path)
    frames = []
    for patient_id in sorted(signal_paths):
        rec = load_signals_csv(signal_paths[patient_id], patient_id)
        frames.extend(segment(rec))
    return label_frames(frames, events)


def frames_per_patient(dataset):
    counts = {}
    for f in dataset.frames:
        counts[f.patient_id] = counts.get(f.patient_id, 0) + 1
    return counts


def require_both_classes(dataset):
    labels = dataset.labels()
    if len(np.unique(labels)) < 2:
        raise ContractError("dataset does not contain both classes")


def balanced_summary(dataset):
    labels = dataset.labels()
    n1 = int(labels.sum())
    return {
        "frames": len(labels),
        "positive": n1,
        "negative": len(labels) - n1,
        "patients": len(dataset.patients),
    }
