"""Synthetic test-bench data with known ground truth.

Two generators live here. `generate_ppg` builds a pulse-oximeter-like
waveform as a train of two-lobe beats (tall systolic peak, smaller
diastolic bump) with jittered period and amplitude, then corrupts a random
fraction of beats with one of four motion-artifact morphologies; every
beat's onset sample and artifact flag come back as ground truth.
`generate_three_bands` builds the classic three parallel point bands with
one labeled point per band, placed at band ends so that plain
nearest-labeled-point assignment jumps across bands while propagation over
a KNN graph follows them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import WaveformRecord

ARTIFACT_KINDS = ("amplitude_spike", "baseline_jump", "dropout", "noise_burst")

# every corruption deviates from the clean beat by at least this factor
# of the beat amplitude, keeping the 2-sigma statistics separable
ARTIFACT_MAGNITUDE = 3.0


@dataclass(frozen=True)
class SynthSpec:
    duration_s: float
    sampling_rate_hz: float = 128.0
    heart_rate_bpm: float = 75.0
    artifact_fraction: float = 0.18
    artifact_kinds: tuple[str, ...] = ARTIFACT_KINDS
    seed: int = 0

    def __post_init__(self):
        if self.duration_s <= 0 or self.sampling_rate_hz <= 0:
            raise ValueError("duration and sampling rate must be positive")
        if not 30 <= self.heart_rate_bpm <= 300:
            raise ValueError("heart_rate_bpm must lie in [30, 300]")
        if not 0 <= self.artifact_fraction <= 1:
            raise ValueError("artifact_fraction must lie in [0, 1]")
        unknown = set(self.artifact_kinds) - set(ARTIFACT_KINDS)
        if unknown:
            raise ValueError(f"unknown artifact kinds {sorted(unknown)}")
        if self.artifact_fraction > 0 and not self.artifact_kinds:
            raise ValueError("artifact_kinds must be non-empty when artifacts are requested")


@dataclass(frozen=True)
class BeatFlag:
    """Ground truth for one beat: onset sample, artifact flag, corruption kind."""

    onset_index: int
    is_artifact: bool
    kind: str | None = None


def generate_ppg(spec: SynthSpec, record_id: str = "synth") -> tuple[WaveformRecord, list[BeatFlag]]:
    """Deterministic synthetic PPG plus per-beat ground truth."""
    rng = np.random.default_rng(spec.seed)
    fs = spec.sampling_rate_hz
    n_total = int(round(spec.duration_s * fs))
    base_period = 60.0 / spec.heart_rate_bpm

    # lay out jittered beat onsets until the signal is full
    onsets = [0]
    while True:
        period = base_period * (1.0 + rng.uniform(-0.05, 0.05))
        nxt = onsets[-1] + max(2, int(round(period * fs)))
        if nxt >= n_total:
            break
        onsets.append(nxt)

    artifact_beats = _stratified_flags(len(onsets), spec.artifact_fraction, rng)
    kind_of = _stratified_kinds(int(artifact_beats.sum()), spec.artifact_kinds, rng)

    signal = np.zeros(n_total)
    flags: list[BeatFlag] = []
    artifact_counter = 0
    for b, onset in enumerate(onsets):
        end = onsets[b + 1] if b + 1 < len(onsets) else n_total
        span = end - onset
        t = np.arange(span) / span  # beat-relative time in [0, 1)
        amp = 1.0 * (1.0 + rng.uniform(-0.05, 0.05))
        # lobes overlap enough that the dicrotic bump is a shoulder, not a
        # second local minimum, so one beat segments into one pulse
        beat = amp * (
            np.exp(-0.5 * ((t - 0.33) / 0.11) ** 2)
            + 0.45 * np.exp(-0.5 * ((t - 0.58) / 0.16) ** 2)
        )

        is_artifact = bool(artifact_beats[b])
        kind = None
        if is_artifact:
            kind = kind_of[artifact_counter]
            artifact_counter += 1
            beat = _corrupt(beat, t, amp, kind, rng)
        signal[onset:end] = beat
        flags.append(BeatFlag(onset_index=onset, is_artifact=is_artifact, kind=kind))

    # mild baseline wander (removed by the band-pass) plus sensor noise
    time = np.arange(n_total) / fs
    signal = signal + 0.10 * np.sin(2.0 * np.pi * 0.15 * time) + rng.normal(0.0, 0.004, n_total)

    record = WaveformRecord(record_id=record_id, sampling_rate_hz=fs, samples=signal)
    return record, flags


def _corrupt(beat, t, amp, kind, rng):
    """Apply one artifact morphology; deviation is >= ARTIFACT_MAGNITUDE * amp.

    Two geometry rules keep the corruption from leaking outside its beat.
    First, every shape is (near) zero-net-area: a net offset would ring
    through the 0.5 Hz high-pass edge for seconds and smear the
    neighboring clean beats' statistics. Second, all excursion mass stays
    inside beat-relative time [0.25, 0.7]: deviations near a beat boundary
    displace the segmentation minima (or veto the next onset via the
    refractory gap), which silently merges the artifact into a clean
    neighbor. Spike and dropout push the kurtosis band, jump and burst the
    dispersion band, so each statistic sees only ~half the contamination
    and its 2-sigma threshold keeps separating.
    """
    out = beat.copy()
    if kind == "amplitude_spike":
        # spike riding the systolic upstroke -> extreme skew and kurtosis
        center = rng.uniform(0.28, 0.33)
        width = 0.05
        height = 4.2 * amp * rng.uniform(1.0, 1.05)
        out = out + height * np.exp(-0.5 * ((t - center) / width) ** 2)
    elif kind == "baseline_jump":
        # baseline excursion: smooth-edged positive box over the early
        # half of the beat -> bimodal value distribution, extreme dispersion
        start = rng.uniform(0.24, 0.27)
        stop = start + rng.uniform(0.22, 0.26)
        height = 3.1 * amp * rng.uniform(1.0, 1.07)
        out = out + height * (_smoothstep((t - start) / 0.06) - _smoothstep((t - stop) / 0.06))
    elif kind == "dropout":
        # partial sensor detachment: pulsatility collapses toward the
        # beat's own running mean (area preserved, so the high-pass edge
        # does not ring into the neighbors) plus a sharp reconnect blip on
        # the refractory-protected upstroke -> near-flat pulse with a rare
        # extreme excursion, extreme kurtosis
        win = max(3, int(0.35 * t.size))
        kernel = np.ones(win) / win
        padded = np.concatenate([out[win - 1 :: -1], out, out[: -win - 1 : -1]])
        smoothed = np.convolve(padded, kernel, mode="same")[win : win + t.size]
        center = rng.uniform(0.18, 0.23)
        depth = 3.3 * amp * rng.uniform(1.0, 1.06)
        out = 0.30 * out + 0.70 * smoothed + depth * np.exp(-0.5 * ((t - center) / 0.045) ** 2)
    elif kind == "noise_burst":
        # in-band oscillation burst over the protected early-beat zone
        # (broadband noise would simply be removed by the 0.5-5 Hz filter);
        # cycles are per beat, landing near 3-4.5 Hz at typical heart
        # rates -> extreme dispersion, and any segmentation split leaves
        # oscillation mass in both fragments
        cycles = rng.uniform(2.5, 3.8)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        mask = (t >= 0.20) & (t <= 0.48)
        burst = 3.6 * amp * rng.uniform(1.0, 1.1) * np.sin(2.0 * np.pi * cycles * t + phase)
        out = out + mask * burst
    else:  # pragma: no cover - guarded by SynthSpec validation
        raise ValueError(f"unknown artifact kind {kind!r}")
    return out


def _smoothstep(x):
    """Cubic 0->1 ramp; gentle enough that the band-pass barely rings."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _stratified_flags(n_beats: int, fraction: float, rng) -> np.ndarray:
    """Artifact flags hitting `fraction` of beats, spread in blocks.

    Purely independent draws would make the per-window artifact share
    swing far above the nominal fraction in some windows, which defeats
    threshold estimation there; block-stratified placement keeps every
    window near the nominal share while positions stay random.
    """
    block = 20
    flags = np.zeros(n_beats, dtype=bool)
    placed = 0
    for start in range(0, n_beats, block):
        stop = min(start + block, n_beats)
        quota = int(round(fraction * stop)) - placed
        quota = max(0, min(quota, stop - start))
        chosen = rng.choice(stop - start, size=quota, replace=False)
        flags[start + chosen] = True
        placed += quota
    return flags


def _stratified_kinds(n_artifacts: int, kinds: tuple[str, ...], rng) -> list[str]:
    """Kind per artifact, cycling through shuffled rounds of all kinds."""
    order: list[str] = []
    while len(order) < n_artifacts:
        round_kinds = list(kinds)
        rng.shuffle(round_kinds)
        order.extend(round_kinds)
    return order[:n_artifacts]


def save_truth_csv(flags: list[BeatFlag], path) -> None:
    """Ground-truth CSV: beat_onset_index,flag (flag 1 = artifact)."""
    with open(path, "w", newline="") as fh:
        fh.write("beat_onset_index,flag\n")
        for flag in flags:
            fh.write(f"{flag.onset_index},{int(flag.is_artifact)}\n")


def load_truth_csv(path) -> list[BeatFlag]:
    flags: list[BeatFlag] = []
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if header != "beat_onset_index,flag":
            raise ValueError(f"{path}: expected header 'beat_onset_index,flag'")
        for line in fh:
            if not line.strip():
                continue
            onset_text, flag_text = line.strip().split(",")
            flags.append(BeatFlag(onset_index=int(onset_text), is_artifact=bool(int(flag_text))))
    return flags


def generate_three_bands(n_per_band: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Three parallel elongated bands with one labeled point per band.

    Returns (features (3n, 2), band labels in {0,1,2}, labeled indices).
    The labeled points alternate band ends (left, right, left) so the
    nearest labeled point of roughly half of each band sits in a different
    band, while the in-band point spacing stays well below the band gap.
    """
    if n_per_band < 2:
        raise ValueError("n_per_band must be >= 2")
    rng = np.random.default_rng(seed)
    spacing = 1.0
    # a band-end point reaches ~7 positions sideways for its 7th neighbor,
    # so the gap must clear that (and stays >= 3x the neighbor spacing)
    gap = 10.0

    features = np.empty((3 * n_per_band, 2))
    labels = np.empty(3 * n_per_band, dtype=np.int64)
    labeled_idx = np.empty(3, dtype=np.int64)
    for band in range(3):
        rows = slice(band * n_per_band, (band + 1) * n_per_band)
        x = np.arange(n_per_band) * spacing + rng.uniform(-0.2, 0.2, n_per_band)
        y = band * gap + rng.uniform(-0.2, 0.2, n_per_band)
        features[rows, 0] = x
        features[rows, 1] = y
        labels[rows] = band
        extremity = np.argmin(x) if band % 2 == 0 else np.argmax(x)
        labeled_idx[band] = band * n_per_band + extremity
    return features, labels, labeled_idx
