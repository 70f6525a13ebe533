"""Synthetic cohort generator with known ground-truth dynamics.

Each class is a small Gaussian-mixture HMM over the three channels.
Septic patients end their recording with exactly 72 hours of class-1
signal and a blood-culture event at the recording end, so every frame in
that tail is positive by the labeling rule; the earlier portion and all
control recordings are event-free and label negative. The RRi state means
are a permutation of each other across classes, which makes the two
classes nearly indistinguishable through frame-level RRi moments while
the RF and SpO2 channels separate them clearly.
"""

from dataclasses import dataclass

import numpy as np

from .dataset import (
    BLOOD_CULTURE,
    CHANNELS,
    FRAME_LEN,
    SEPSIS_WINDOW_SECONDS,
    EhrEvent,
    Recording,
    label_frames,
    segment,
    write_events_csv,
    write_signals_csv,
)
from .errors import ConfigError
from .gmm import GmmEmission
from .hmm import HmmModel

ROUND_DECIMALS = 6


@dataclass
class SynthSpec:
    """Cohort layout and ground-truth models for the generator."""

    n_patients: int = 10
    n_septic: int = 5
    septic_hours: float = 73.0
    control_hours: float = 24.0
    missing_rate: float = 0.0
    truth0: HmmModel | None = None
    truth1: HmmModel | None = None

    def __post_init__(self):
        if self.n_patients < 2 or not 0 < self.n_septic < self.n_patients:
            raise ConfigError(
                "need at least one septic and one control patient"
            )
        if self.septic_hours * 3600 < SEPSIS_WINDOW_SECONDS:
            raise ConfigError(
                "septic recordings must cover the full 72 h positive window"
            )
        if self.control_hours <= 0:
            raise ConfigError("control recordings need positive length")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ConfigError(f"missing rate {self.missing_rate} outside [0, 1)")
        if self.truth0 is None or self.truth1 is None:
            t0, t1 = default_truth_pair()
            self.truth0 = self.truth0 or t0
            self.truth1 = self.truth1 or t1


def default_truth_pair():
    """Two 3-state single-Gaussian HMMs with permuted RRi state means.

    Channel order follows CHANNELS (RF, RRi, SpO2). The RF and SpO2 means
    sit many within-state standard deviations apart between classes; the
    RRi means are the same multiset in both classes.
    """
    variances = np.array([1.5**2, 0.01**2, 0.4**2])
    means0 = [
        [25.0, 0.35, 97.0],
        [30.0, 0.40, 96.0],
        [35.0, 0.45, 95.0],
    ]
    means1 = [
        [55.0, 0.40, 91.0],
        [60.0, 0.45, 90.0],
        [65.0, 0.35, 89.0],
    ]

    def build(means):
        emissions = [
            GmmEmission(
                log_weights=np.zeros(1),
                means=np.array([m]),
                variances=variances[None, :].copy(),
            )
            for m in means
        ]
        q = np.full(3, 1.0 / 3.0)
        A = np.full((3, 3), 0.05)
        np.fill_diagonal(A, 0.90)
        return HmmModel(np.log(q), np.log(A), emissions)

    return build(means0), build(means1)


def sample_states(model, length, rng):
    """Exact state-path draw via inverse-CDF lookup tables.

    One uniform per step; the per-state next-state tables are built with
    vectorized searchsorted so the remaining loop is plain indexing.
    """
    n = model.n_states
    states = np.empty(length, dtype=np.int64)
    if length == 0:
        return states
    q = np.exp(model.log_q)
    q = q / q.sum()
    A = np.exp(model.log_A)
    A = A / A.sum(axis=1, keepdims=True)
    u = rng.random(length)
    nxt = np.empty((length, n), dtype=np.int64)
    for s in range(n):
        nxt[:, s] = np.searchsorted(np.cumsum(A[s]), u)
    np.clip(nxt, 0, n - 1, out=nxt)
    prev = min(int(np.searchsorted(np.cumsum(q), u[0])), n - 1)
    states[0] = prev
    for t in range(1, length):
        prev = nxt[t, prev]
        states[t] = prev
    return states


def sample_sequence(model, length, rng):
    """Draw one state path and its emissions from a Gaussian-mixture HMM."""
    states = sample_states(model, length, rng)
    out = np.empty((length, len(CHANNELS)))
    for s in range(model.n_states):
        idx = np.flatnonzero(states == s)
        if idx.size:
            out[idx] = model.emissions[s].sample(rng, idx.size)
    return out, states


def _hours_to_rows(hours):
    rows = int(round(hours * 3600))
    return (rows // FRAME_LEN) * FRAME_LEN


def generate_cohort(spec, seed):
    """Deterministic (recordings, events) for the given spec and seed.

    Patient k is septic for k < n_septic. Values are rounded to six
    decimals so that a CSV write/read round trip is exact; missing rows
    are whole-row NaNs drawn at ``missing_rate``.
    """
    children = np.random.SeedSequence(seed).spawn(spec.n_patients)
    recordings = []
    events = []
    for k in range(spec.n_patients):
        rng = np.random.default_rng(children[k])
        patient_id = f"p{k:03d}"
        start = k * 10 * 86400
        septic = k < spec.n_septic
        if septic:
            total = _hours_to_rows(spec.septic_hours)
            pre = total - SEPSIS_WINDOW_SECONDS
            head, _ = sample_sequence(spec.truth0, pre, rng)
            tail, _ = sample_sequence(spec.truth1, SEPSIS_WINDOW_SECONDS, rng)
            samples = np.vstack([head, tail])
            events.append(EhrEvent(patient_id, start + total, BLOOD_CULTURE))
        else:
            total = _hours_to_rows(spec.control_hours)
            samples, _ = sample_sequence(spec.truth0, total, rng)
        samples = np.round(samples, ROUND_DECIMALS)
        if spec.missing_rate > 0:
            holes = rng.random(samples.shape[0]) < spec.missing_rate
            samples[holes] = np.nan
        recordings.append(Recording(patient_id, start, samples))
    return recordings, events


def generate_dataset(spec, seed):
    """Labeled in-memory dataset: generate, segment, and label in one step."""
    recordings, events = generate_cohort(spec, seed)
    frames = []
    for rec in recordings:
        frames.extend(segment(rec))
    return label_frames(frames, events)


def write_cohort(spec, seed, out_dir):
    """Write one signals CSV per patient plus one shared events CSV.

    Returns (signal path map, events path) for direct use by the loader.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    recordings, events = generate_cohort(spec, seed)
    signal_paths = {}
    for rec in recordings:
        path = os.path.join(out_dir, f"{rec.patient_id}_signals.csv")
        write_signals_csv(path, rec)
        signal_paths[rec.patient_id] = path
    events_path = os.path.join(out_dir, "events.csv")
    write_events_csv(events_path, events)
    return signal_paths, events_path
