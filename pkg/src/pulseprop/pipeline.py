"""End-to-end experiment orchestration.

The pipeline runs as five file-complete stages so any stage can be re-run
in isolation from the previous stage's outputs:

  preprocess -> pulses.csv, pulses_meta.csv (+ waveform/truth for synth)
  label      -> statlabels.csv, stats.csv, annotations.csv, split.csv
  propagate  -> predictions_lp.csv
  classify   -> predictions_knn.csv / _gaussian_nb.csv / _logistic.csv
  evaluate   -> reports/<method>.json

`run_pipeline` is exactly the composition of the stages plus a manifest,
so a full run and a stage-by-stage run under the same seed produce
identical files. All randomness flows from the single config seed through
named substreams; nothing reads the wall clock, so report bytes are
reproducible.

Protocol: the statistical labeler provides surrogate-expert labels; a
stratified 70/30 split reserves the test rows; half of the training rows
form the labeled pool, from which a stratified sample sized at
seed_label_fraction of the whole dataset actually keeps its labels. Those
seed rows are rebalanced (separately for propagation and for the
baselines) and everything else, test rows included, enters the graph
unlabeled: propagation is transductive, the baselines are inductive, and
both are scored on the same test rows.
"""

from __future__ import annotations

import csv
import json
import os
import zlib
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__, _kernels
from . import baselines as baselines_mod
from . import ingest, labelprop, metrics, preprocess, rebalance, statlabel, synth

MANIFEST_SCHEMA = 1
BASELINE_KINDS = ("knn", "gaussian_nb", "logistic")
SEED_FRACTION_SWEEP = (0.025, 0.05, 0.075, 0.10)
SAMPLING_SWEEP = ("none", "rus", "ros", "smote", "adasyn", "ros_rus")

FILES = {
    "waveform": "waveform.csv",
    "beat_truth": "truth.csv",
    "pulses": "pulses.csv",
    "meta": "pulses_meta.csv",
    "statlabels": "statlabels.csv",
    "stats": "stats.csv",
    "annotations": "annotations.csv",
    "split": "split.csv",
    "pulse_truth": "pulse_truth.csv",
    "manifest": "manifest.json",
}


class PipelineStageError(RuntimeError):
    """A stage failure, tagged with the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class PipelineConfig:
    output_dir: str
    waveform_csvs: tuple[str, ...] = ()
    sampling_rate_hz: float = 128.0
    beat_truth_csv: str | None = None
    pulse_truth_csv: str | None = None
    synth: synth.SynthSpec | None = None
    window_seconds: float = 30.0
    bandpass: preprocess.BandpassSpec = field(default_factory=preprocess.BandpassSpec)
    normalization: str = "per_feature"
    seed_label_fraction: float = 0.05
    train_fraction: float = 0.7
    labeled_within_train: float = 0.5
    resample_lp: rebalance.ResampleSpec = field(
        default_factory=lambda: rebalance.ResampleSpec(method="smote")
    )
    resample_baselines: rebalance.ResampleSpec = field(
        default_factory=lambda: rebalance.ResampleSpec(method="adasyn")
    )
    propagation: labelprop.PropagationConfig = field(default_factory=labelprop.PropagationConfig)
    knn_k: int = 7
    logistic_l2: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.seed_label_fraction <= 1:
            raise ValueError("seed_label_fraction must lie in (0, 1]")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if not 0 < self.labeled_within_train < 1:
            raise ValueError("labeled_within_train must lie in (0, 1)")


def substream(seed: int, name: str) -> np.random.Generator:
    """Named, platform-stable child stream of the global seed."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))


# ---------------------------------------------------------------- stages


def stage_preprocess(config: PipelineConfig) -> None:
    """Filter, segment and resample every record into the pulse matrix files."""
    try:
        _ensure_dirs(config)
        sources: list[tuple[str, float]] = []
        beat_truth_path = None

        if config.synth is not None:
            record, flags = synth.generate_ppg(config.synth)
            waveform_path = _path(config, "waveform")
            ingest.save_waveform_csv(record, waveform_path)
            beat_truth_path = _path(config, "beat_truth")
            synth.save_truth_csv(flags, beat_truth_path)
            sources.append((waveform_path, config.synth.sampling_rate_hz))
        else:
            sources.extend((p, config.sampling_rate_hz) for p in config.waveform_csvs)
            beat_truth_path = config.beat_truth_csv
        if not sources:
            raise ValueError("either synth parameters or waveform_csvs must be provided")

        all_pulses: list[preprocess.Pulse] = []
        meta_rows: list[dict] = []
        for path, rate in sources:
            record = ingest.load_waveform_csv(path, rate)
            coeffs = preprocess.design_bandpass(config.bandpass, record.sampling_rate_hz)
            windows = ingest.window_record(record, config.window_seconds)
            if not windows:
                raise ValueError(f"{path}: record shorter than one {config.window_seconds}s window")
            window_len = windows[0].samples.size
            for window in windows:
                filtered = ingest.SegmentWindow(
                    record_id=window.record_id,
                    window_index=window.window_index,
                    samples=preprocess.filtfilt(coeffs, window.samples),
                    sampling_rate_hz=window.sampling_rate_hz,
                )
                for pulse in preprocess.segment_pulses(filtered):
                    all_pulses.append(pulse)
                    offset = window.window_index * window_len
                    meta_rows.append(
                        {
                            "pulse_id": pulse.pulse_id,
                            "record_id": window.record_id,
                            "window_index": window.window_index,
                            "abs_start": offset + pulse.start_index,
                            "abs_end": offset + pulse.end_index,
                        }
                    )
        if not all_pulses:
            raise ValueError("no pulses segmented from any input record")

        matrix = preprocess.build_pulse_matrix(all_pulses)
        preprocess.save_pulse_matrix(matrix, _path(config, "pulses"))
        _save_meta(meta_rows, _path(config, "meta"))

        if config.pulse_truth_csv:
            truth = ingest.load_annotations(config.pulse_truth_csv)
            ingest.save_annotations(truth, _path(config, "pulse_truth"))
        elif beat_truth_path and os.path.exists(beat_truth_path):
            flags = synth.load_truth_csv(beat_truth_path)
            labels = _align_pulse_truth(meta_rows, flags)
            truth = ingest.AnnotationFile(
                entries=[(m["pulse_id"], int(lab)) for m, lab in zip(meta_rows, labels)]
            )
            ingest.save_annotations(truth, _path(config, "pulse_truth"))
    except PipelineStageError:
        raise
    except Exception as exc:
        raise PipelineStageError("preprocess", str(exc)) from exc


def stage_label(config: PipelineConfig) -> None:
    """Statistical labels, the train/test split and the seed annotations."""
    try:
        matrix = preprocess.load_pulse_matrix(_path(config, "pulses"))
        stat_labels, stats = statlabel.label_matrix(matrix)

        ingest.save_annotations(
            ingest.AnnotationFile(
                entries=[(pid, int(lab)) for pid, lab in zip(matrix.pulse_ids, stat_labels)]
            ),
            _path(config, "statlabels"),
        )
        statlabel.save_stats_csv(stats, _path(config, "stats"))

        train_mask = _stratified_mask(stat_labels, config.train_fraction, substream(config.seed, "split"))
        pool_mask = np.zeros_like(train_mask)
        train_rows = np.flatnonzero(train_mask)
        pool_local = _stratified_mask(
            stat_labels[train_rows], config.labeled_within_train, substream(config.seed, "labeled_pool")
        )
        pool_mask[train_rows[pool_local]] = True

        seed_rows = _pick_seed_rows(stat_labels, pool_mask, config.seed_label_fraction, config.seed)

        seed_labels = np.full(matrix.n_pulses, -1, dtype=np.int64)
        seed_labels[seed_rows] = stat_labels[seed_rows]
        ingest.save_annotations(
            ingest.AnnotationFile(
                entries=[(pid, int(lab)) for pid, lab in zip(matrix.pulse_ids, seed_labels)]
            ),
            _path(config, "annotations"),
        )

        roles = np.where(train_mask, np.where(pool_mask, "train_labeled", "train_unlabeled"), "test")
        with open(_path(config, "split"), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["pulse_id", "role"])
            for pid, role in zip(matrix.pulse_ids, roles):
                writer.writerow([pid, role])
    except PipelineStageError:
        raise
    except Exception as exc:
        raise PipelineStageError("label", str(exc)) from exc


def stage_propagate(config: PipelineConfig) -> dict:
    """Transductive label propagation; writes per-pulse predictions and scores."""
    try:
        matrix, seed_labels, _roles = _load_stage_inputs(config)
        normalized = preprocess.normalize_features(matrix, config.normalization)

        seed_rows = np.flatnonzero(seed_labels >= 0)
        if seed_rows.size == 0:
            raise ValueError("no seed labels found in annotations.csv")
        seed_matrix = preprocess.PulseMatrix(
            [matrix.pulse_ids[i] for i in seed_rows], normalized.features[seed_rows]
        )
        spec = replace(config.resample_lp, seed=_stream_seed(config.seed, "resample_lp"))
        balanced, balanced_labels = rebalance.resample(seed_matrix, seed_labels[seed_rows], spec)

        kept = {pid: int(lab) for pid, lab in zip(balanced.pulse_ids, balanced_labels) if not pid.startswith("syn:")}
        node_labels = np.full(matrix.n_pulses, -1, dtype=np.int64)
        for row, pid in enumerate(matrix.pulse_ids):
            if pid in kept:
                node_labels[row] = kept[pid]
        syn_rows = np.array([pid.startswith("syn:") for pid in balanced.pulse_ids], dtype=bool)
        syn_features = balanced.features[syn_rows]
        syn_labels = balanced_labels[syn_rows]

        node_features = np.vstack([normalized.features, syn_features])
        all_labels = np.concatenate([node_labels, syn_labels])

        graph = labelprop.build_graph(node_features, all_labels, config.propagation)
        initial = labelprop.initial_distribution(graph)
        dist, info = labelprop.propagate(graph, initial, config.propagation)
        hardened, scores = labelprop.harden_labels(dist)

        _save_predictions(
            _pred_path(config, "lp"), matrix.pulse_ids, hardened[: matrix.n_pulses], scores[: matrix.n_pulses]
        )
        with open(os.path.join(config.output_dir, "propagate_info.json"), "w") as fh:
            json.dump(info, fh, sort_keys=True, indent=2)
            fh.write("\n")
        return info
    except PipelineStageError:
        raise
    except Exception as exc:
        raise PipelineStageError("propagate", str(exc)) from exc


def stage_classify(config: PipelineConfig) -> None:
    """Fit the supervised baselines on the rebalanced seed rows and score every pulse."""
    try:
        matrix, seed_labels, _roles = _load_stage_inputs(config)
        normalized = preprocess.normalize_features(matrix, config.normalization)

        seed_rows = np.flatnonzero(seed_labels >= 0)
        if seed_rows.size == 0:
            raise ValueError("no seed labels found in annotations.csv")
        seed_matrix = preprocess.PulseMatrix(
            [matrix.pulse_ids[i] for i in seed_rows], normalized.features[seed_rows]
        )
        spec = replace(config.resample_baselines, seed=_stream_seed(config.seed, "resample_baselines"))
        balanced, balanced_labels = rebalance.resample(seed_matrix, seed_labels[seed_rows], spec)

        hyper = {
            "knn": {"k": config.knn_k},
            "gaussian_nb": {},
            "logistic": {"l2": config.logistic_l2},
        }
        for kind in BASELINE_KINDS:
            model = baselines_mod.fit(kind, balanced, balanced_labels, **hyper[kind])
            scores = baselines_mod.predict_proba(model, normalized)
            hardened = (scores >= 0.5).astype(np.int64)
            _save_predictions(_pred_path(config, kind), matrix.pulse_ids, hardened, scores)
    except PipelineStageError:
        raise
    except Exception as exc:
        raise PipelineStageError("classify", str(exc)) from exc


def stage_evaluate(config: PipelineConfig) -> dict[str, metrics.EvaluationReport]:
    """Score every prediction file on the test rows against the reference labels."""
    try:
        matrix_ids = _load_pulse_ids(config)
        roles = _load_roles(config)
        reference_name, reference = _load_reference(config)

        test_ids = [pid for pid in matrix_ids if roles[pid] == "test"]
        reports: dict[str, metrics.EvaluationReport] = {}
        reports_dir = os.path.join(config.output_dir, "reports")
        os.makedirs(reports_dir, exist_ok=True)
        for method in ("lp",) + BASELINE_KINDS:
            path = _pred_path(config, method)
            if not os.path.exists(path):
                continue
            predicted, scored = _load_predictions(path)
            eval_ids = [pid for pid in test_ids if reference.get(pid, -1) >= 0]
            if not eval_ids:
                raise ValueError("no test rows with reference labels to evaluate")
            y_true = np.array([reference[pid] for pid in eval_ids], dtype=np.int64)
            y_pred = np.array([predicted[pid] for pid in eval_ids], dtype=np.int64)
            y_score = np.array([scored[pid] for pid in eval_ids], dtype=np.float64)
            report = metrics.evaluate(y_true, y_pred, y_score)
            doc = metrics.report_to_dict(report)
            doc["method"] = method
            doc["reference"] = reference_name
            with open(os.path.join(reports_dir, f"{method}.json"), "w") as fh:
                json.dump(doc, fh, sort_keys=True, indent=2)
                fh.write("\n")
            reports[method] = report
        if not reports:
            raise ValueError("no prediction files found; run propagate/classify first")
        return reports
    except PipelineStageError:
        raise
    except Exception as exc:
        raise PipelineStageError("evaluate", str(exc)) from exc


def run_pipeline(config: PipelineConfig) -> dict[str, metrics.EvaluationReport]:
    """Compose all stages and write the run manifest; returns the reports."""
    stage_preprocess(config)
    stage_label(config)
    lp_info = stage_propagate(config)
    stage_classify(config)
    reports = stage_evaluate(config)

    manifest = {
        "schema": MANIFEST_SCHEMA,
        "config": config_to_dict(config),
        "seed": config.seed,
        "versions": {
            "pulseprop": __version__,
            "numpy": np.__version__,
            "kernel_backend": _kernels.BACKEND,
        },
        "propagation_info": lp_info,
        "reports": {m: f"reports/{m}.json" for m in sorted(reports)},
    }
    with open(_path(config, "manifest"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return reports


def sweep(config: PipelineConfig, param: str) -> dict[str, dict]:
    """Re-run the pipeline over a parameter grid; one LP report per cell.

    param='seed_fraction' varies the seeded proportion over
    {2.5, 5, 7.5, 10}%; param='sampling' varies the propagation-side
    resampling method over all six methods.
    """
    if param == "seed_fraction":
        cells = [(f"{v:g}", replace(config, seed_label_fraction=v)) for v in SEED_FRACTION_SWEEP]
    elif param == "sampling":
        cells = [
            (m, replace(config, resample_lp=replace(config.resample_lp, method=m)))
            for m in SAMPLING_SWEEP
        ]
    else:
        raise ValueError(f"unknown sweep parameter {param!r}")

    summary: dict[str, dict] = {}
    for name, cell_config in cells:
        cell_dir = os.path.join(config.output_dir, f"sweep_{param}", name)
        cell_config = replace(cell_config, output_dir=cell_dir)
        reports = run_pipeline(cell_config)
        lp = reports["lp"]
        summary[name] = {
            "precision": lp.scalars.precision,
            "recall": lp.scalars.recall,
            "f1": lp.scalars.f1,
            "auroc": lp.auroc,
            "report": os.path.join(f"sweep_{param}", name, "reports", "lp.json"),
        }
    os.makedirs(config.output_dir, exist_ok=True)
    with open(os.path.join(config.output_dir, f"sweep_{param}.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return summary


# ---------------------------------------------------------------- config I/O


def config_to_dict(config: PipelineConfig) -> dict:
    doc = asdict(config)
    doc["waveform_csvs"] = list(config.waveform_csvs)
    if config.synth is not None:
        doc["synth"]["artifact_kinds"] = list(config.synth.artifact_kinds)
    return doc


def config_from_dict(doc: dict) -> PipelineConfig:
    doc = dict(doc)
    if doc.get("synth") is not None:
        synth_doc = dict(doc["synth"])
        if "artifact_kinds" in synth_doc:
            synth_doc["artifact_kinds"] = tuple(synth_doc["artifact_kinds"])
        doc["synth"] = synth.SynthSpec(**synth_doc)
    if "bandpass" in doc and isinstance(doc["bandpass"], dict):
        doc["bandpass"] = preprocess.BandpassSpec(**doc["bandpass"])
    for key in ("resample_lp", "resample_baselines"):
        if key in doc and isinstance(doc[key], dict):
            doc[key] = rebalance.ResampleSpec(**doc[key])
    if "propagation" in doc and isinstance(doc["propagation"], dict):
        doc["propagation"] = labelprop.PropagationConfig(**doc["propagation"])
    if "waveform_csvs" in doc:
        doc["waveform_csvs"] = tuple(doc["waveform_csvs"])
    return PipelineConfig(**doc)


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def save_config(config: PipelineConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(config), fh, sort_keys=True, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------- helpers


def _ensure_dirs(config: PipelineConfig) -> None:
    os.makedirs(config.output_dir, exist_ok=True)


def _path(config: PipelineConfig, key: str) -> str:
    return os.path.join(config.output_dir, FILES[key])


def _pred_path(config: PipelineConfig, method: str) -> str:
    return os.path.join(config.output_dir, f"predictions_{method}.csv")


def _save_meta(meta_rows: list[dict], path) -> None:
    fields = ["pulse_id", "record_id", "window_index", "abs_start", "abs_end"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(meta_rows)


def _load_meta(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {
                "pulse_id": row["pulse_id"],
                "record_id": row["record_id"],
                "window_index": int(row["window_index"]),
                "abs_start": int(row["abs_start"]),
                "abs_end": int(row["abs_end"]),
            }
            for row in csv.DictReader(fh)
        ]


def _align_pulse_truth(meta_rows: list[dict], flags: list[synth.BeatFlag]) -> np.ndarray:
    """Per-pulse 0/1 truth: the flag of the beat overlapping the pulse most.

    Beat b spans [onset_b, onset_{b+1}); overlap ties go to the earlier
    beat. Pulses are window-local, so a pulse can at most straddle a few
    beats; pulses with no overlapping beat (cannot happen when beats tile
    the record) would get -1.
    """
    onsets = np.array([f.onset_index for f in flags], dtype=np.int64)
    is_artifact = np.array([f.is_artifact for f in flags], dtype=bool)
    labels = np.full(len(meta_rows), -1, dtype=np.int64)
    for row, meta in enumerate(meta_rows):
        p_start, p_end = meta["abs_start"], meta["abs_end"] + 1
        first = int(np.searchsorted(onsets, p_start, side="right")) - 1
        best_overlap, best_flag = 0, -1
        b = max(first, 0)
        while b < len(onsets):
            b_start = int(onsets[b])
            b_end = int(onsets[b + 1]) if b + 1 < len(onsets) else max(p_end, b_start + 1)
            if b_start >= p_end:
                break
            overlap = min(p_end, b_end) - max(p_start, b_start)
            if overlap > best_overlap:
                best_overlap, best_flag = overlap, int(is_artifact[b])
            b += 1
        labels[row] = best_flag
    return labels


def _stratified_mask(strata: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask selecting ~fraction of the rows within every stratum."""
    mask = np.zeros(strata.size, dtype=bool)
    for value in np.unique(strata):
        rows = np.flatnonzero(strata == value)
        take = int(round(fraction * rows.size))
        chosen = rng.choice(rows.size, size=take, replace=False)
        mask[rows[chosen]] = True
    return mask


def _pick_seed_rows(stat_labels, pool_mask, seed_fraction, seed) -> np.ndarray:
    """Stratified seed sample from the labeled pool, sized against the whole set."""
    n_total = stat_labels.size
    n_seeds = max(2, int(round(seed_fraction * n_total)))
    eligible = {
        c: np.flatnonzero(pool_mask & (stat_labels == c)) for c in (0, 1)
    }
    available = {c: rows.size for c, rows in eligible.items()}
    if available[0] == 0 or available[1] == 0:
        raise ValueError("labeled pool lacks a class; cannot seed both classes")

    total_available = available[0] + available[1]
    n_seeds = min(n_seeds, total_available)
    # proportional allocation, at least one seed per class
    quota1 = n_seeds * available[1] / total_available
    n1 = int(np.clip(round(quota1), 1, min(available[1], n_seeds - 1)))
    n0 = min(n_seeds - n1, available[0])

    rng = substream(seed, "seeds")
    rows = []
    for c, take in ((0, n0), (1, n1)):
        chosen = rng.choice(available[c], size=take, replace=False)
        rows.extend(eligible[c][chosen].tolist())
    return np.array(sorted(rows), dtype=np.int64)


def _stream_seed(seed: int, name: str) -> int:
    return int(substream(seed, name).integers(0, 2**32))


def _save_predictions(path, pulse_ids, labels, scores) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pulse_id", "label", "score"])
        for pid, lab, score in zip(pulse_ids, labels, scores):
            writer.writerow([pid, int(lab), repr(float(score))])


def _load_predictions(path) -> tuple[dict[str, int], dict[str, float]]:
    labels: dict[str, int] = {}
    scores: dict[str, float] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            labels[row["pulse_id"]] = int(row["label"])
            scores[row["pulse_id"]] = float(row["score"])
    return labels, scores


def _load_stage_inputs(config) -> tuple[preprocess.PulseMatrix, np.ndarray, dict[str, str]]:
    for key in ("pulses", "annotations", "split"):
        if not os.path.exists(_path(config, key)):
            raise ValueError(f"missing upstream file {_path(config, key)}; run earlier stages first")
    matrix = preprocess.load_pulse_matrix(_path(config, "pulses"))
    annotations = ingest.load_annotations(_path(config, "annotations"))
    seed_labels = annotations.labels_for(matrix.pulse_ids)
    return matrix, seed_labels, _load_roles(config)


def _load_pulse_ids(config) -> list[str]:
    return preprocess.load_pulse_matrix(_path(config, "pulses")).pulse_ids


def _load_roles(config) -> dict[str, str]:
    path = _path(config, "split")
    if not os.path.exists(path):
        raise ValueError(f"missing upstream file {path}; run the label stage first")
    roles: dict[str, str] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            roles[row["pulse_id"]] = row["role"]
    return roles


def _load_reference(config) -> tuple[str, dict[str, int]]:
    truth_path = _path(config, "pulse_truth")
    if os.path.exists(truth_path):
        return "truth", dict(ingest.load_annotations(truth_path).entries)
    stat_path = _path(config, "statlabels")
    if os.path.exists(stat_path):
        return "statlabel", dict(ingest.load_annotations(stat_path).entries)
    raise ValueError("no reference labels found (pulse_truth.csv or statlabels.csv)")
