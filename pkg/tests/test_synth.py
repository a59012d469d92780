import numpy as np
import pytest

from pulseprop.synth import (
    ARTIFACT_KINDS,
    BeatFlag,
    SynthSpec,
    _corrupt,
    generate_ppg,
    generate_three_bands,
    load_truth_csv,
    save_truth_csv,
)


class TestGeneratePpg:
    def test_zero_fraction_all_clean(self):
        record, flags = generate_ppg(SynthSpec(duration_s=60.0, artifact_fraction=0.0, seed=0))
        assert all(not f.is_artifact for f in flags)
        assert all(f.kind is None for f in flags)

    def test_beat_count_follows_rate(self):
        record, flags = generate_ppg(SynthSpec(duration_s=60.0, heart_rate_bpm=75.0, seed=1))
        assert len(flags) == pytest.approx(75, abs=2)

    def test_500_beats_artifact_count(self):
        spec = SynthSpec(duration_s=400.0, artifact_fraction=0.18, seed=2)
        record, flags = generate_ppg(spec)
        flagged = sum(f.is_artifact for f in flags)
        assert abs(flagged - 0.18 * len(flags)) <= 10

    def test_deterministic(self):
        spec = SynthSpec(duration_s=45.0, seed=3)
        r1, f1 = generate_ppg(spec)
        r2, f2 = generate_ppg(spec)
        assert np.array_equal(r1.samples, r2.samples)
        assert f1 == f2

    def test_onsets_increase_and_cover_signal(self):
        record, flags = generate_ppg(SynthSpec(duration_s=50.0, seed=4))
        onsets = [f.onset_index for f in flags]
        assert onsets[0] == 0
        assert all(a < b for a, b in zip(onsets, onsets[1:]))
        assert onsets[-1] < record.samples.size

    def test_artifact_kinds_restricted_to_spec(self):
        spec = SynthSpec(duration_s=200.0, seed=5, artifact_kinds=("dropout",))
        _, flags = generate_ppg(spec)
        kinds = {f.kind for f in flags if f.is_artifact}
        assert kinds == {"dropout"}

    def test_sample_count(self):
        record, _ = generate_ppg(SynthSpec(duration_s=30.0, seed=6))
        assert record.samples.size == 3840


class TestCorruptionMagnitude:
    @pytest.mark.parametrize("kind", ARTIFACT_KINDS)
    def test_deviation_at_least_three_amplitudes(self, kind):
        rng = np.random.default_rng(7)
        t = np.arange(102) / 102
        amp = 1.0
        beat = amp * (
            np.exp(-0.5 * ((t - 0.33) / 0.11) ** 2) + 0.45 * np.exp(-0.5 * ((t - 0.58) / 0.16) ** 2)
        )
        for _ in range(20):
            corrupted = _corrupt(beat, t, amp, kind, rng)
            assert np.max(np.abs(corrupted - beat)) >= 3.0 * amp


class TestTruthCsv:
    def test_roundtrip(self, tmp_path):
        flags = [BeatFlag(0, False), BeatFlag(104, True), BeatFlag(207, False)]
        path = tmp_path / "truth.csv"
        save_truth_csv(flags, path)
        back = load_truth_csv(path)
        assert [(f.onset_index, f.is_artifact) for f in back] == [(0, False), (104, True), (207, False)]

    def test_header_guard(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("onset,flag\n0,1\n")
        with pytest.raises(ValueError):
            load_truth_csv(path)


class TestSpecValidation:
    def test_rate_band(self):
        with pytest.raises(ValueError):
            SynthSpec(duration_s=10.0, heart_rate_bpm=20.0)
        with pytest.raises(ValueError):
            SynthSpec(duration_s=10.0, heart_rate_bpm=400.0)

    def test_fraction_range(self):
        with pytest.raises(ValueError):
            SynthSpec(duration_s=10.0, artifact_fraction=1.5)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown artifact kinds"):
            SynthSpec(duration_s=10.0, artifact_kinds=("wobble",))

    def test_empty_kinds_with_artifacts(self):
        with pytest.raises(ValueError):
            SynthSpec(duration_s=10.0, artifact_kinds=(), artifact_fraction=0.2)


class TestThreeBands:
    def test_counts_mirror_reference_figure(self):
        features, bands, labeled = generate_three_bands(60, seed=0)
        assert features.shape == (180, 2)
        assert labeled.shape == (3,)
        assert sorted(bands[labeled]) == [0, 1, 2]
        # 3 annotated, 177 not
        assert features.shape[0] - labeled.size == 177

    def test_band_labels_partition(self):
        _, bands, _ = generate_three_bands(25, seed=1)
        assert [int((bands == b).sum()) for b in (0, 1, 2)] == [25, 25, 25]

    def test_gap_exceeds_triple_neighbor_spacing(self):
        features, bands, _ = generate_three_bands(60, seed=2)
        # intra-band nearest-neighbor spacing
        spacings = []
        for b in (0, 1, 2):
            pts = features[bands == b]
            diff = pts[:, None, :] - pts[None, :, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            np.fill_diagonal(d2, np.inf)
            spacings.append(np.sqrt(d2.min(axis=1)).mean())
        # inter-band gap: closest pair between adjacent bands
        gaps = []
        for b in (0, 1):
            a, c = features[bands == b], features[bands == b + 1]
            diff = a[:, None, :] - c[None, :, :]
            gaps.append(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff).min()))
        assert min(gaps) >= 3.0 * max(spacings)

    def test_labeled_points_sit_at_extremities(self):
        features, bands, labeled = generate_three_bands(40, seed=3)
        xs = features[:, 0]
        for band, idx in enumerate(labeled):
            band_xs = xs[bands == band]
            if band % 2 == 0:
                assert xs[idx] == band_xs.min()
            else:
                assert xs[idx] == band_xs.max()

    def test_minimum_size(self):
        with pytest.raises(ValueError):
            generate_three_bands(1)

    def test_determinism(self):
        a = generate_three_bands(30, seed=9)
        b = generate_three_bands(30, seed=9)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]) and np.array_equal(a[2], b[2])
