import numpy as np
import pytest

from pulseprop.ingest import (
    AnnotationFile,
    WaveformRecord,
    load_annotations,
    load_waveform_csv,
    save_annotations,
    save_waveform_csv,
    window_record,
)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadWaveform:
    def test_plain_three_samples(self, tmp_path):
        path = write(tmp_path, "w.csv", "0.0\n1.0\n0.0\n")
        record = load_waveform_csv(path, 128.0)
        assert np.array_equal(record.samples, [0.0, 1.0, 0.0])
        assert record.sampling_rate_hz == 128.0

    def test_header_and_30s_record(self, tmp_path):
        # 3840 samples at 128 Hz is exactly 30 seconds
        body = "\n".join(str(i % 7) for i in range(3840))
        path = write(tmp_path, "w.csv", "value\n" + body + "\n")
        record = load_waveform_csv(path, 128.0)
        assert record.samples.size == 3840
        assert record.samples.size / record.sampling_rate_hz == 30.0

    def test_non_numeric_row_reports_line(self, tmp_path):
        path = write(tmp_path, "w.csv", "1.0\nabc\n2.0\n")
        with pytest.raises(ValueError, match="row 2"):
            load_waveform_csv(path, 128.0)

    def test_too_few_rows(self, tmp_path):
        path = write(tmp_path, "w.csv", "1.0\n")
        with pytest.raises(ValueError, match="at least 2"):
            load_waveform_csv(path, 128.0)

    def test_bad_rate(self, tmp_path):
        path = write(tmp_path, "w.csv", "1.0\n2.0\n")
        with pytest.raises(ValueError):
            load_waveform_csv(path, 0.0)

    def test_roundtrip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        record = WaveformRecord("r", 128.0, rng.normal(size=500))
        path = tmp_path / "w.csv"
        save_waveform_csv(record, path)
        back = load_waveform_csv(path, 128.0)
        assert np.array_equal(back.samples, record.samples)


class TestWindowRecord:
    def test_exact_fit(self):
        record = WaveformRecord("r", 128.0, np.zeros(3840))
        windows = window_record(record, 30.0)
        assert len(windows) == 1
        assert windows[0].samples.size == 3840
        assert windows[0].window_index == 0

    def test_trailing_remainder_dropped(self):
        record = WaveformRecord("r", 128.0, np.arange(9000, dtype=float))
        windows = window_record(record, 30.0)
        assert [w.window_index for w in windows] == [0, 1]
        assert all(w.samples.size == 3840 for w in windows)

    def test_too_short_gives_empty(self):
        record = WaveformRecord("r", 128.0, np.zeros(100))
        assert window_record(record, 30.0) == []

    def test_windowing_partitions_a_prefix(self):
        rng = np.random.default_rng(1)
        samples = rng.normal(size=10_000)
        record = WaveformRecord("r", 128.0, samples)
        windows = window_record(record, 30.0)
        emitted = np.concatenate([w.samples for w in windows])
        assert emitted.size == (samples.size // 3840) * 3840
        assert np.array_equal(emitted, samples[: emitted.size])


class TestAnnotations:
    def test_parse(self, tmp_path):
        path = write(tmp_path, "a.csv", "pulse_id,label\np0,1\np1,-1\n")
        ann = load_annotations(path)
        assert ann.entries == [("p0", 1), ("p1", -1)]

    def test_roundtrip_1000_random(self, tmp_path):
        rng = np.random.default_rng(2)
        entries = [(f"r:{i}:{rng.integers(100)}x", int(rng.choice([-1, 0, 1]))) for i in range(1000)]
        ann = AnnotationFile(entries=entries)
        path = tmp_path / "a.csv"
        save_annotations(ann, path)
        assert load_annotations(path).entries == entries

    def test_invalid_label(self, tmp_path):
        path = write(tmp_path, "a.csv", "pulse_id,label\np0,2\n")
        with pytest.raises(ValueError, match="invalid label 2"):
            load_annotations(path)

    def test_duplicate_pulse_id(self):
        with pytest.raises(ValueError, match="duplicate"):
            AnnotationFile(entries=[("p0", 1), ("p0", 0)])

    def test_labels_for_fills_missing_with_unlabeled(self):
        ann = AnnotationFile(entries=[("a", 1)])
        assert ann.labels_for(["a", "b"]).tolist() == [1, -1]


class TestRecordValidation:
    def test_rejects_nonpositive_rate(self):
        with pytest.raises(ValueError):
            WaveformRecord("r", -1.0, np.zeros(10))

    def test_rejects_single_sample(self):
        with pytest.raises(ValueError):
            WaveformRecord("r", 128.0, np.zeros(1))
