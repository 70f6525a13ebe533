"""Frame-to-feature transforms.

Sequence models consume frames extended with first and second backward
differences. The static baselines consume summary vectors: a three-value
description of the RR-interval channel (mean, population variance, sample
asymmetry) or a ten-value description adding per-channel moments and the
extremes of the lagged RRi/SpO2 correlation. A fit-once standardizer
provides per-channel z-scoring with training-set statistics.
"""

from dataclasses import dataclass

import numpy as np

from .dataset import CHANNELS
from .errors import ContractError

RRI_COL = CHANNELS.index("RRi")
SPO2_COL = CHANNELS.index("SpO2")
MAX_LAG = 30
ASYMMETRY_EPS = 1e-12
STD_FLOOR = 1e-6


@dataclass
class FeatureFrame:
    patient_id: str
    start_epoch: int
    data: np.ndarray  # (T, width) with width 3 or 9
    label: int | None = None


@dataclass
class StaticFeatures:
    values: np.ndarray  # length 3 or 10
    label: int | None = None


def backward_difference(x):
    """Length-preserving causal difference; first entry is zero."""
    x = np.asarray(x, dtype=float)
    d = np.empty_like(x)
    d[0] = 0.0
    d[1:] = x[1:] - x[:-1]
    return d


def extend_derivatives_matrix(data):
    """Stack [raw | first difference | second difference] column blocks."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ContractError(f"expected a (T, channels) matrix, got shape {data.shape}")
    d1 = np.apply_along_axis(backward_difference, 0, data)
    d2 = np.apply_along_axis(backward_difference, 0, d1)
    return np.hstack([data, d1, d2])


def extend_derivatives(frame):
    return FeatureFrame(
        frame.patient_id,
        frame.start_epoch,
        extend_derivatives_matrix(frame.data),
        frame.label,
    )


def raw_features(frame):
    return FeatureFrame(frame.patient_id, frame.start_epoch, frame.data.copy(), frame.label)


def sample_asymmetry(x):
    """Squared positive deviations from the median over squared negative ones.

    Deviations equal to zero enter neither sum. A zero numerator returns 0
    regardless of the denominator; otherwise the denominator is floored at
    a small epsilon so the ratio stays finite.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 1:
        raise ContractError("sample asymmetry needs at least one value")
    xi = x - np.median(x)
    pos = float((xi[xi > 0] ** 2).sum())
    neg = float((xi[xi < 0] ** 2).sum())
    if pos == 0.0:
        return 0.0
    return pos / max(neg, ASYMMETRY_EPS)


def _moments(x):
    """Population central moments m2, m3, m4 and the mean."""
    x = np.asarray(x, dtype=float)
    mu = float(x.mean())
    c = x - mu
    m2 = float((c**2).mean())
    m3 = float((c**3).mean())
    m4 = float((c**4).mean())
    return mu, m2, m3, m4


def _moment_block(x):
    """[mean, population std, skewness, kurtosis] with zero-variance guard."""
    mu, m2, m3, m4 = _moments(x)
    if m2 <= 0.0:
        return np.array([mu, 0.0, 0.0, 0.0])
    return np.array([mu, np.sqrt(m2), m3 / m2**1.5, m4 / m2**2])


def hrci(frame):
    """Three-value RR-interval summary: mean, population variance, asymmetry."""
    rri = frame.data[:, RRI_COL]
    mu, m2, _, _ = _moments(rri)
    return StaticFeatures(
        np.array([mu, m2, sample_asymmetry(rri)]), frame.label
    )


def lagged_correlation(x, y, lag):
    """Pearson correlation of x[t] against y[t + lag] on the overlap window.

    Degenerate overlaps (fewer than two points or a zero-variance side)
    return 0.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractError("lagged correlation needs equal-length vectors")
    T = x.shape[0]
    if T - abs(lag) < 2:
        return 0.0
    if lag >= 0:
        a, b = x[: T - lag], y[lag:]
    else:
        a, b = x[-lag:], y[: T + lag]
    ac = a - a.mean()
    bc = b - b.mean()
    denom = np.sqrt((ac**2).sum() * (bc**2).sum())
    if denom <= 0.0:
        return 0.0
    return float(np.clip((ac * bc).sum() / denom, -1.0, 1.0))


def correlation_extremes(x, y, max_lag=MAX_LAG):
    corrs = [lagged_correlation(x, y, lag) for lag in range(-max_lag, max_lag + 1)]
    return min(corrs), max(corrs)


def pops(frame):
    """Ten-value summary: RRi moments, SpO2 moments, correlation extremes."""
    rri = frame.data[:, RRI_COL]
    spo2 = frame.data[:, SPO2_COL]
    lo, hi = correlation_extremes(rri, spo2)
    values = np.concatenate(
        [_moment_block(rri), _moment_block(spo2), [lo, hi]]
    )
    return StaticFeatures(values, frame.label)


@dataclass
class Standardizer:
    """Per-channel z-scoring with statistics frozen at fit time."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.asarray(self.std, dtype=float)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ContractError("standardizer statistics must be matching vectors")
        if np.any(self.std < STD_FLOOR):
            raise ContractError(f"standardizer std below floor {STD_FLOOR}")

    def apply_matrix(self, data):
        data = np.asarray(data, dtype=float)
        if data.shape[-1] != self.mean.shape[0]:
            raise ContractError(
                f"data width {data.shape[-1]} does not match standardizer "
                f"width {self.mean.shape[0]}"
            )
        return (data - self.mean) / self.std

    def apply(self, frames):
        return [
            FeatureFrame(f.patient_id, f.start_epoch, self.apply_matrix(f.data), f.label)
            for f in frames
        ]


def standardize_fit(frames):
    """Pool all rows of the given feature frames and take channel statistics.

    Call on training frames only; the returned object is then applied
    unchanged to any split.
    """
    if not frames:
        raise ContractError("cannot fit a standardizer on zero frames")
    pooled = np.vstack([f.data for f in frames])
    mean = pooled.mean(axis=0)
    std = np.maximum(pooled.std(axis=0), STD_FLOOR)
    return Standardizer(mean, std)


SEQUENCE_MODES = ("raw", "deriv")
STATIC_MODES = ("hrci", "pops", "flat")
FEATURE_MODES = SEQUENCE_MODES + STATIC_MODES


def sequence_features(frames, mode):
    """Per-frame sequence matrices for the requested mode (raw or deriv)."""
    if mode == "raw":
        return [raw_features(f) for f in frames]
    if mode == "deriv":
        return [extend_derivatives(f) for f in frames]
    raise ContractError(f"unknown sequence feature mode {mode!r}")


def flat(frame):
    """The whole frame as one long vector, row-major."""
    return StaticFeatures(frame.data.reshape(-1).copy(), frame.label)


def static_features(frames, mode):
    """Per-frame summary vectors for the requested mode (hrci, pops, flat)."""
    if mode == "hrci":
        return [hrci(f) for f in frames]
    if mode == "pops":
        return [pops(f) for f in frames]
    if mode == "flat":
        return [flat(f) for f in frames]
    raise ContractError(f"unknown static feature mode {mode!r}")


def static_matrix(feats):
    X = np.stack([s.values for s in feats])
    y = np.array([s.label for s in feats], dtype=int)
    return X, y
