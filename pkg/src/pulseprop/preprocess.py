"""Signal conditioning: band-pass filtering, pulse segmentation, resampling.

The processing chain per 30-second window is: zero-phase Butterworth
band-pass (0.5-5 Hz, i.e. 30-300 bpm), segmentation at local minima into
individual pulses, linear resampling of every pulse to 256 samples, and
feature standardization. Statistical labeling consumes the resampled but
*unnormalized* pulses (amplitude anomalies must survive); classifiers get
the per-feature standardized matrix.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.signal

from .ingest import SegmentWindow

PULSE_LENGTH = 256
MIN_CYCLE_SECONDS = 0.3
MAX_CYCLE_SECONDS = 1.0


@dataclass(frozen=True)
class BandpassSpec:
    """Butterworth band-pass parameters; order is the realized filter order."""

    low_cut_hz: float = 0.5
    high_cut_hz: float = 5.0
    order: int = 4

    def validate(self, sampling_rate_hz: float) -> None:
        if not 0 < self.low_cut_hz < self.high_cut_hz < sampling_rate_hz / 2:
            raise ValueError(
                f"cut-offs ({self.low_cut_hz}, {self.high_cut_hz}) Hz violate "
                f"0 < low < high < Nyquist ({sampling_rate_hz / 2} Hz)"
            )
        if self.order < 2 or self.order % 2:
            raise ValueError("order must be a positive even integer")


@dataclass(frozen=True)
class FilterCoefficients:
    """Transfer-function view (b, a) plus the second-order sections used to run it."""

    numerator: np.ndarray
    denominator: np.ndarray
    sections: np.ndarray

    @property
    def pad_length(self) -> int:
        # odd-reflection padding, 3 taps per coefficient beyond the leading one
        return 3 * (max(self.numerator.size, self.denominator.size) - 1)


@dataclass(frozen=True)
class Pulse:
    """One segmented pulse: the samples between two consecutive minima, inclusive."""

    pulse_id: str
    start_index: int
    end_index: int
    raw_samples: np.ndarray

    def __post_init__(self):
        if self.end_index <= self.start_index:
            raise ValueError("end_index must exceed start_index")
        object.__setattr__(self, "raw_samples", np.asarray(self.raw_samples, dtype=np.float64))
        if self.raw_samples.size != self.end_index - self.start_index + 1:
            raise ValueError("raw_samples length inconsistent with index span")


@dataclass
class PulseMatrix:
    """N pulses x fixed-length feature rows, the canonical ML input."""

    pulse_ids: list[str]
    features: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be 2-D")
        if len(self.pulse_ids) != self.features.shape[0]:
            raise ValueError("pulse_ids / features row count mismatch")

    @property
    def n_pulses(self) -> int:
        return self.features.shape[0]


def design_bandpass(spec: BandpassSpec, sampling_rate_hz: float) -> FilterCoefficients:
    """Design the Butterworth band-pass for a given rate.

    ``spec.order`` is the order of the realized band-pass transfer function
    (a band-pass doubles the prototype order, hence order/2 below). Both
    band edges sit at -3 dB by construction.
    """
    spec.validate(sampling_rate_hz)
    wn = (spec.low_cut_hz, spec.high_cut_hz)
    b, a = scipy.signal.butter(spec.order // 2, wn, btype="bandpass", fs=sampling_rate_hz)
    sos = scipy.signal.butter(spec.order // 2, wn, btype="bandpass", output="sos", fs=sampling_rate_hz)
    return FilterCoefficients(numerator=b, denominator=a, sections=sos)


def filtfilt(coefficients: FilterCoefficients, samples) -> np.ndarray:
    """Forward-backward filtering: zero net phase, squared magnitude response."""
    x = np.asarray(samples, dtype=np.float64)
    padlen = coefficients.pad_length
    if x.size <= padlen:
        raise ValueError(f"input too short for edge padding: need > {padlen} samples, got {x.size}")
    return scipy.signal.sosfiltfilt(coefficients.sections, x, padtype="odd", padlen=padlen)


def find_pulse_minima(samples, sampling_rate_hz: float, min_cycle_s: float = MIN_CYCLE_SECONDS) -> np.ndarray:
    """Accepted pulse-boundary minima of a filtered window.

    A sample is a candidate when it is strictly below its left neighbor,
    not above its right one (plateaus resolve to the leftmost index), and
    no larger than anything within +-min_cycle_s/2. Candidates closer than
    min_cycle_s to the previously accepted minimum are rejected; that
    refractory gap suppresses double-detection of pulses with a distinct
    diastolic bump.
    """
    x = np.asarray(samples, dtype=np.float64)
    n = x.size
    if n < 3:
        return np.empty(0, dtype=np.int64)
    half = int(min_cycle_s * sampling_rate_hz / 2)
    gap = int(min_cycle_s * sampling_rate_hz)

    interior = np.arange(1, n - 1)
    local = (x[interior] < x[interior - 1]) & (x[interior] <= x[interior + 1])
    candidates = interior[local]

    accepted: list[int] = []
    for i in candidates:
        lo = max(0, i - half)
        hi = min(n, i + half + 1)
        if x[i] > x[lo:hi].min():
            continue
        if accepted and i - accepted[-1] < gap:
            continue
        accepted.append(int(i))
    return np.array(accepted, dtype=np.int64)


def segment_pulses(
    window: SegmentWindow,
    min_cycle_s: float = MIN_CYCLE_SECONDS,
    max_cycle_s: float = MAX_CYCLE_SECONDS,
) -> list[Pulse]:
    """Split a filtered window into pulses between consecutive minima.

    Samples before the first accepted minimum and after the last are
    discarded (the leading partial pulse cannot be segmented). Spans
    shorter than min_cycle_s merge into the following span; pulses longer
    than max_cycle_s are kept whole, resampling absorbs the length.
    """
    x = np.asarray(window.samples, dtype=np.float64)
    if x.size == 0:
        return []
    minima = find_pulse_minima(x, window.sampling_rate_hz, min_cycle_s)
    if minima.size < 2:
        return []

    min_len = int(min_cycle_s * window.sampling_rate_hz)
    bounds: list[int] = [int(minima[0])]
    for m in minima[1:]:
        if int(m) - bounds[-1] < min_len:
            continue
        bounds.append(int(m))

    pulses = []
    for idx in range(len(bounds) - 1):
        start, end = bounds[idx], bounds[idx + 1]
        pulses.append(
            Pulse(
                pulse_id=f"{window.record_id}:{window.window_index}:{idx}",
                start_index=start,
                end_index=end,
                raw_samples=x[start : end + 1],
            )
        )
    return pulses


def resample_pulse(pulse: Pulse, target_len: int = PULSE_LENGTH) -> np.ndarray:
    """Linear interpolation of a pulse onto a uniform grid of target_len points."""
    raw = pulse.raw_samples
    if raw.size < 2:
        raise ValueError("cannot resample a pulse with fewer than 2 samples")
    positions = np.linspace(0.0, raw.size - 1, target_len)
    return np.interp(positions, np.arange(raw.size), raw)


def build_pulse_matrix(pulses: list[Pulse], target_len: int = PULSE_LENGTH) -> PulseMatrix:
    """Resample every pulse and stack the vectors into one matrix."""
    features = np.empty((len(pulses), target_len), dtype=np.float64)
    for row, pulse in enumerate(pulses):
        features[row] = resample_pulse(pulse, target_len)
    return PulseMatrix(pulse_ids=[p.pulse_id for p in pulses], features=features)


def normalize_features(matrix: PulseMatrix, mode: str = "per_feature") -> PulseMatrix:
    """Standardize to zero mean / unit variance (population moments).

    mode='per_pulse' standardizes each row, mode='per_feature' each column.
    Zero-variance rows/columns are centered and left at zero rather than
    divided by zero; flatline rows are the statistical labeler's problem
    (it flags them as artifacts).
    """
    feats = matrix.features
    if mode == "per_pulse":
        mean = feats.mean(axis=1, keepdims=True)
        std = feats.std(axis=1, keepdims=True)
        safe = np.where(std > 0, std, 1.0)
        out = (feats - mean) / safe
    elif mode == "per_feature":
        if feats.shape[0] < 2:
            raise ValueError("per_feature normalization needs at least 2 rows")
        mean = feats.mean(axis=0, keepdims=True)
        std = feats.std(axis=0, keepdims=True)
        safe = np.where(std > 0, std, 1.0)
        out = (feats - mean) / safe
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    return PulseMatrix(pulse_ids=list(matrix.pulse_ids), features=out)


def zero_variance_rows(matrix: PulseMatrix) -> np.ndarray:
    """Indices of flatline rows (population std exactly zero)."""
    return np.flatnonzero(matrix.features.std(axis=1) == 0.0)


def save_pulse_matrix(matrix: PulseMatrix, path) -> None:
    """Write the matrix as CSV: header pulse_id,f0,...,f{n-1}."""
    n_feat = matrix.features.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pulse_id"] + [f"f{i}" for i in range(n_feat)])
        for pid, row in zip(matrix.pulse_ids, matrix.features):
            writer.writerow([pid] + [repr(float(v)) for v in row])


def load_pulse_matrix(path) -> PulseMatrix:
    pulse_ids: list[str] = []
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not header or header[0] != "pulse_id":
            raise ValueError(f"{path}: expected a pulse matrix header starting with 'pulse_id'")
        width = len(header) - 1
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width + 1:
                raise ValueError(f"{path}: row {lineno} has {len(row) - 1} features, expected {width}")
            pulse_ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return PulseMatrix(pulse_ids=pulse_ids, features=np.array(rows, dtype=np.float64).reshape(len(rows), width))
