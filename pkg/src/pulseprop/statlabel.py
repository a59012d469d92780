"""Statistical seed labeler.

For similar cardiac cycles the per-pulse skewness, kurtosis and standard
deviation stay roughly constant, so a pulse whose statistics escape the
window's normal range is marked as an artifact. For every 30-second window
each statistic gets a band [mean - 2*std, mean + 2*std] computed over the
window's pulses (a ~95% interval under a normal approximation); a pulse is
labeled artifact as soon as at least one of its three statistics falls
outside its band. Boundary values count as inside. All moments are
population moments (divide by n).

Flatline pulses (zero variance) have undefined skewness/kurtosis and are
artifacts by definition; they are excluded from band estimation so their
NaNs cannot poison the thresholds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .preprocess import PulseMatrix

THRESHOLD_SIGMA = 2.0
MIN_PULSES_PER_WINDOW = 3


class UnlabelableWindowError(ValueError):
    """Raised when a window has too few usable pulses to build thresholds."""


@dataclass(frozen=True)
class PulseStats:
    """Third/fourth standardized moments and the dispersion of one pulse."""

    skewness: float
    kurtosis: float
    std: float

    @property
    def degenerate(self) -> bool:
        return self.std == 0.0


@dataclass(frozen=True)
class ThresholdBand:
    lower: float
    upper: float

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def pulse_stats(samples) -> PulseStats:
    """Population skewness, non-excess kurtosis and std of one pulse."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    mu = x.mean()
    centered = x - mu
    var = np.mean(centered**2)
    if var == 0.0:
        return PulseStats(skewness=math.nan, kurtosis=math.nan, std=0.0)
    std = math.sqrt(var)
    # standardize before taking powers: x**3 of tiny amplitudes underflows
    z = centered / std
    skew = float(np.mean(z**3))
    kurt = float(np.mean(z**4))
    return PulseStats(skewness=skew, kurtosis=kurt, std=float(std))


def window_thresholds(stats_list: list[PulseStats]) -> dict[str, ThresholdBand]:
    """mean +- 2*std band per statistic over one window's pulses.

    Degenerate (flatline) pulses are skipped; fewer than three usable
    pulses make the window unlabelable by this method.
    """
    usable = [s for s in stats_list if not s.degenerate]
    if len(usable) < MIN_PULSES_PER_WINDOW:
        raise UnlabelableWindowError(
            f"window has {len(usable)} usable pulses, need >= {MIN_PULSES_PER_WINDOW}"
        )
    bands = {}
    for name in ("skewness", "kurtosis", "std"):
        values = np.array([getattr(s, name) for s in usable])
        mu = float(values.mean())
        sigma = float(values.std())
        bands[name] = ThresholdBand(lower=mu - THRESHOLD_SIGMA * sigma, upper=mu + THRESHOLD_SIGMA * sigma)
    return bands


def label_window(pulses: list[tuple[str, PulseStats]], bands: dict[str, ThresholdBand]) -> np.ndarray:
    """0/1 labels for one window, aligned with the input order.

    Artifact (1) iff any of the three statistics leaves its band, or the
    pulse is a flatline.
    """
    labels = np.zeros(len(pulses), dtype=np.int64)
    for row, (_, stats) in enumerate(pulses):
        if stats.degenerate:
            labels[row] = 1
            continue
        outside = (
            not bands["skewness"].contains(stats.skewness)
            or not bands["kurtosis"].contains(stats.kurtosis)
            or not bands["std"].contains(stats.std)
        )
        labels[row] = 1 if outside else 0
    return labels


def window_key(pulse_id: str) -> str:
    """Group key '<record_id>:<window_index>' of a pulse id."""
    head, _, _ = pulse_id.rpartition(":")
    return head


def label_matrix(matrix: PulseMatrix) -> tuple[np.ndarray, dict[str, PulseStats]]:
    """Run the labeler over a whole (unnormalized) pulse matrix.

    Pulses are grouped into windows by their id prefix. Returns labels in
    {-1, 0, 1} (-1 for pulses in unlabelable windows) and the per-pulse
    stats for optional audit dumps.
    """
    stats = {pid: pulse_stats(row) for pid, row in zip(matrix.pulse_ids, matrix.features)}
    labels = np.full(matrix.n_pulses, -1, dtype=np.int64)

    groups: dict[str, list[int]] = {}
    for row, pid in enumerate(matrix.pulse_ids):
        groups.setdefault(window_key(pid), []).append(row)

    for rows in groups.values():
        members = [(matrix.pulse_ids[r], stats[matrix.pulse_ids[r]]) for r in rows]
        try:
            bands = window_thresholds([s for _, s in members])
        except UnlabelableWindowError:
            continue
        window_labels = label_window(members, bands)
        for r, lab in zip(rows, window_labels):
            labels[r] = lab
    return labels, stats


def save_stats_csv(stats: dict[str, PulseStats], path) -> None:
    """Audit dump: pulse_id,skew,kurt,std."""
    with open(path, "w", newline="") as fh:
        fh.write("pulse_id,skew,kurt,std\n")
        for pid, s in stats.items():
            fh.write(f"{pid},{s.skewness!r},{s.kurtosis!r},{s.std!r}\n")
