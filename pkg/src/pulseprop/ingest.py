"""Waveform and annotation file I/O plus fixed-length windowing.

Waveform CSVs hold one amplitude per line (optional ``value`` header); the
sampling rate travels out-of-band. Annotation CSVs are ``pulse_id,label``
rows with labels in {-1, 0, 1} (-1 = unlabeled, 0 = clean, 1 = artifact).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

DEFAULT_SAMPLING_RATE_HZ = 128.0
DEFAULT_WINDOW_SECONDS = 30.0

VALID_LABELS = (-1, 0, 1)


@dataclass(frozen=True)
class WaveformRecord:
    """A sampled signal with its rate and a provenance id."""

    record_id: str
    sampling_rate_hz: float
    samples: np.ndarray

    def __post_init__(self):
        if self.sampling_rate_hz <= 0:
            raise ValueError("sampling_rate_hz must be positive")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        if self.samples.ndim != 1 or self.samples.size < 2:
            raise ValueError("samples must be a 1-D sequence with at least 2 values")


@dataclass(frozen=True)
class SegmentWindow:
    """One fixed-duration analysis window cut from a record."""

    record_id: str
    window_index: int
    samples: np.ndarray
    sampling_rate_hz: float

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))


@dataclass
class AnnotationFile:
    """Ordered (pulse_id, label) pairs with unique ids."""

    entries: list[tuple[str, int]] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for pulse_id, label in self.entries:
            if pulse_id in seen:
                raise ValueError(f"duplicate pulse_id {pulse_id!r}")
            seen.add(pulse_id)
            if label not in VALID_LABELS:
                raise ValueError(f"invalid label {label!r} for {pulse_id!r} (must be -1, 0 or 1)")

    def labels_for(self, pulse_ids) -> np.ndarray:
        """Label vector aligned with pulse_ids; missing ids map to -1."""
        lookup = dict(self.entries)
        return np.array([lookup.get(pid, -1) for pid in pulse_ids], dtype=np.int64)


def load_waveform_csv(path, sampling_rate_hz: float, record_id: str | None = None) -> WaveformRecord:
    """Read a one-column amplitude CSV into a WaveformRecord.

    A single leading header row named ``value`` is skipped. Any other
    non-numeric row is an error reported with its 1-based line number.
    """
    if sampling_rate_hz <= 0:
        raise ValueError("sampling_rate_hz must be positive")
    values: list[float] = []
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            if lineno == 1 and text.lower() == "value":
                continue
            try:
                values.append(float(text))
            except ValueError:
                raise ValueError(f"{path}: non-numeric value {text!r} at row {lineno}") from None
    if len(values) < 2:
        raise ValueError(f"{path}: need at least 2 samples, found {len(values)}")
    rid = record_id if record_id is not None else _stem(path)
    return WaveformRecord(record_id=rid, sampling_rate_hz=float(sampling_rate_hz), samples=np.array(values))


def save_waveform_csv(record: WaveformRecord, path) -> None:
    # repr of a Python float is the shortest round-trip decimal
    with open(path, "w", newline="") as fh:
        fh.write("value\n")
        for v in record.samples:
            fh.write(f"{float(v)!r}\n")


def window_record(record: WaveformRecord, window_seconds: float = DEFAULT_WINDOW_SECONDS) -> list[SegmentWindow]:
    """Cut a record into consecutive non-overlapping windows.

    The trailing partial window is discarded; a record shorter than one
    window yields an empty list.
    """
    if window_seconds <= 0:
        raise ValueError("window_seconds must be positive")
    window_len = int(round(window_seconds * record.sampling_rate_hz))
    if window_len < 1:
        raise ValueError("window shorter than one sample")
    n_windows = record.samples.size // window_len
    return [
        SegmentWindow(
            record_id=record.record_id,
            window_index=w,
            samples=record.samples[w * window_len : (w + 1) * window_len].copy(),
            sampling_rate_hz=record.sampling_rate_hz,
        )
        for w in range(n_windows)
    ]


def load_annotations(path) -> AnnotationFile:
    """Read a ``pulse_id,label`` CSV (header required)."""
    entries: list[tuple[str, int]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty annotation file")
        if [h.strip().lower() for h in header[:2]] != ["pulse_id", "label"]:
            raise ValueError(f"{path}: expected header 'pulse_id,label', found {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}: malformed row {lineno}")
            pulse_id, raw_label = row[0], row[1].strip()
            try:
                label = int(raw_label)
            except ValueError:
                raise ValueError(f"{path}: non-integer label {raw_label!r} at row {lineno}") from None
            if label not in VALID_LABELS:
                raise ValueError(f"{path}: invalid label {label} at row {lineno}")
            entries.append((pulse_id, label))
    return AnnotationFile(entries=entries)


def save_annotations(annotations: AnnotationFile, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pulse_id", "label"])
        writer.writerows(annotations.entries)


def _stem(path) -> str:
    name = str(path).replace("\\", "/").rsplit("/", 1)[-1]
    return name.rsplit(".", 1)[0] if "." in name else name
