"""Command-line interface.

Subcommands mirror the pipeline stages plus a few conveniences:

  run         full experiment: preprocess -> label -> propagate ->
              classify -> evaluate, with a manifest
  preprocess  waveform CSV(s) -> pulses.csv / pulses_meta.csv
  label       pulses.csv -> statlabels.csv, annotations.csv, split.csv
  propagate   graph propagation -> predictions_lp.csv
  classify    supervised baselines -> predictions_<kind>.csv
  evaluate    predictions + reference -> reports/<method>.json
  synth       emit a synthetic waveform.csv + truth.csv
  sweep       re-run the pipeline over a seed-fraction or sampling grid

Flags mirror the PipelineConfig fields; --config points at a JSON file
with the same keys, and explicit flags override it.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import ingest, pipeline, rebalance, synth


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except pipeline.PipelineStageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: [{args.command}] {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pulseprop", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, handler, helptext in (
        ("run", _cmd_run, "run the full pipeline"),
        ("preprocess", _cmd_preprocess, "filter, segment and resample the input records"),
        ("label", _cmd_label, "statistical labels, split and seed annotations"),
        ("propagate", _cmd_propagate, "label propagation over the pulse graph"),
        ("classify", _cmd_classify, "fit and apply the supervised baselines"),
        ("evaluate", _cmd_evaluate, "score predictions on the test rows"),
        ("sweep", _cmd_sweep, "pipeline sweep over seed fractions or sampling methods"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_config_args(p)
        if name == "sweep":
            p.add_argument(
                "--param",
                choices=("seed_fraction", "sampling"),
                required=True,
                help="which grid to sweep",
            )
        p.set_defaults(handler=handler)

    p = sub.add_parser("synth", help="generate a synthetic waveform + ground truth")
    p.add_argument("--output-dir", required=True)
    _add_synth_args(p)
    p.set_defaults(handler=_cmd_synth)
    return parser


def _add_synth_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--synth-duration", type=float, help="seconds of synthetic signal")
    p.add_argument("--synth-rate", type=float, help="synthetic sampling rate in Hz")
    p.add_argument("--synth-bpm", type=float, help="synthetic heart rate")
    p.add_argument("--synth-artifact-fraction", type=float, help="fraction of corrupted beats")
    p.add_argument("--synth-kinds", help="comma-separated artifact kinds")
    p.add_argument("--synth-seed", type=int, help="generator seed")


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with PipelineConfig keys")
    p.add_argument("--output-dir", help="directory for all stage artifacts")
    p.add_argument("--seed", type=int, help="global seed feeding every stage substream")
    p.add_argument("--waveform", action="append", default=None, metavar="CSV",
                   help="input waveform CSV (repeatable)")
    p.add_argument("--sampling-rate", type=float, help="sampling rate of the input CSVs")
    p.add_argument("--beat-truth", help="beat-level ground truth CSV (onset,flag)")
    p.add_argument("--pulse-truth", help="pulse-level reference annotation CSV")
    p.add_argument("--window-seconds", type=float, help="analysis window length")
    _add_synth_args(p)
    p.add_argument("--low-cut", type=float, help="band-pass low cut-off in Hz")
    p.add_argument("--high-cut", type=float, help="band-pass high cut-off in Hz")
    p.add_argument("--filter-order", type=int, help="band-pass filter order (even)")
    p.add_argument("--normalization", choices=("per_feature", "per_pulse"))
    p.add_argument("--seed-label-fraction", type=float,
                   help="fraction of the whole dataset that receives seed labels")
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--labeled-within-train", type=float)
    p.add_argument("--lp-resample-method", choices=rebalance.METHODS)
    p.add_argument("--baseline-resample-method", choices=rebalance.METHODS)
    p.add_argument("--resample-k", type=int, help="neighbor count for smote/adasyn")
    p.add_argument("--resample-ratio", type=float, help="target minority:majority ratio")
    p.add_argument("--kernel", choices=("knn", "rbf"))
    p.add_argument("--n-neighbors", type=int)
    p.add_argument("--rbf-gamma", type=float)
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--solver", choices=("auto", "iterative", "closed_form"))
    p.add_argument("--knn-k", type=int, help="k of the KNN baseline classifier")
    p.add_argument("--logistic-l2", type=float)


def _config_from_args(args) -> pipeline.PipelineConfig:
    if args.config:
        config = pipeline.load_config(args.config)
    else:
        synth_spec = _synth_from_args(args)
        config = pipeline.PipelineConfig(
            output_dir=args.output_dir or "out",
            synth=synth_spec,
            waveform_csvs=tuple(args.waveform or ()),
        )

    updates = {}
    direct = {
        "output_dir": args.output_dir,
        "sampling_rate_hz": args.sampling_rate,
        "beat_truth_csv": args.beat_truth,
        "pulse_truth_csv": args.pulse_truth,
        "window_seconds": args.window_seconds,
        "normalization": args.normalization,
        "seed_label_fraction": args.seed_label_fraction,
        "train_fraction": args.train_fraction,
        "labeled_within_train": args.labeled_within_train,
        "knn_k": args.knn_k,
        "logistic_l2": args.logistic_l2,
        "seed": args.seed,
    }
    updates.update({k: v for k, v in direct.items() if v is not None})
    if args.waveform:
        updates["waveform_csvs"] = tuple(args.waveform)

    bandpass = {
        "low_cut_hz": args.low_cut,
        "high_cut_hz": args.high_cut,
        "order": args.filter_order,
    }
    if any(v is not None for v in bandpass.values()):
        updates["bandpass"] = dataclasses.replace(
            config.bandpass, **{k: v for k, v in bandpass.items() if v is not None}
        )

    prop = {
        "kernel": args.kernel,
        "n_neighbors": args.n_neighbors,
        "rbf_gamma": args.rbf_gamma,
        "max_iterations": args.max_iterations,
        "tolerance": args.tolerance,
        "solver": args.solver,
    }
    if any(v is not None for v in prop.values()):
        updates["propagation"] = dataclasses.replace(
            config.propagation, **{k: v for k, v in prop.items() if v is not None}
        )

    for field_name, method_arg in (
        ("resample_lp", args.lp_resample_method),
        ("resample_baselines", args.baseline_resample_method),
    ):
        spec_updates = {}
        if method_arg is not None:
            spec_updates["method"] = method_arg
        if args.resample_k is not None:
            spec_updates["k_neighbors"] = args.resample_k
        if args.resample_ratio is not None:
            spec_updates["target_ratio"] = args.resample_ratio
        if spec_updates:
            updates[field_name] = dataclasses.replace(getattr(config, field_name), **spec_updates)

    if args.config and _any_synth_arg(args):
        updates["synth"] = _synth_from_args(args, base=config.synth)
    elif args.config is None and _any_synth_arg(args):
        updates["synth"] = _synth_from_args(args)

    return dataclasses.replace(config, **updates) if updates else config


def _any_synth_arg(args) -> bool:
    return any(
        getattr(args, name) is not None
        for name in (
            "synth_duration",
            "synth_rate",
            "synth_bpm",
            "synth_artifact_fraction",
            "synth_kinds",
            "synth_seed",
        )
    )


def _synth_from_args(args, base: synth.SynthSpec | None = None) -> synth.SynthSpec | None:
    if not _any_synth_arg(args) and base is None:
        return None
    fields = {
        "duration_s": args.synth_duration,
        "sampling_rate_hz": args.synth_rate,
        "heart_rate_bpm": args.synth_bpm,
        "artifact_fraction": args.synth_artifact_fraction,
        "seed": args.synth_seed,
    }
    fields = {k: v for k, v in fields.items() if v is not None}
    if args.synth_kinds is not None:
        fields["artifact_kinds"] = tuple(k.strip() for k in args.synth_kinds.split(",") if k.strip())
    if base is not None:
        return dataclasses.replace(base, **fields)
    if "duration_s" not in fields:
        raise ValueError("--synth-duration is required for synthetic input")
    return synth.SynthSpec(**fields)


def _cmd_run(args) -> int:
    config = _config_from_args(args)
    reports = pipeline.run_pipeline(config)
    for method in sorted(reports):
        s = reports[method].scalars
        print(
            f"{method}: precision={s.precision:.3f} recall={s.recall:.3f} "
            f"f1={s.f1:.3f} auroc={reports[method].auroc:.3f}"
        )
    print(f"reports written to {os.path.join(config.output_dir, 'reports')}")
    return 0


def _cmd_preprocess(args) -> int:
    config = _config_from_args(args)
    pipeline.stage_preprocess(config)
    print(f"pulse matrix written to {os.path.join(config.output_dir, 'pulses.csv')}")
    return 0


def _cmd_label(args) -> int:
    config = _config_from_args(args)
    pipeline.stage_label(config)
    print(f"annotations written to {os.path.join(config.output_dir, 'annotations.csv')}")
    return 0


def _cmd_propagate(args) -> int:
    config = _config_from_args(args)
    info = pipeline.stage_propagate(config)
    print(f"propagation done ({info}); predictions_lp.csv written")
    return 0


def _cmd_classify(args) -> int:
    config = _config_from_args(args)
    pipeline.stage_classify(config)
    print("baseline predictions written")
    return 0


def _cmd_evaluate(args) -> int:
    config = _config_from_args(args)
    reports = pipeline.stage_evaluate(config)
    for method in sorted(reports):
        s = reports[method].scalars
        print(f"{method}: precision={s.precision:.3f} recall={s.recall:.3f} f1={s.f1:.3f}")
    return 0


def _cmd_sweep(args) -> int:
    config = _config_from_args(args)
    summary = pipeline.sweep(config, args.param)
    for name in summary:
        cell = summary[name]
        print(f"{args.param}={name}: f1={cell['f1']:.3f} auroc={cell['auroc']:.3f}")
    return 0


def _cmd_synth(args) -> int:
    spec = _synth_from_args(args)
    if spec is None:
        raise ValueError("--synth-duration is required")
    os.makedirs(args.output_dir, exist_ok=True)
    record, flags = synth.generate_ppg(spec)
    waveform_path = os.path.join(args.output_dir, "waveform.csv")
    truth_path = os.path.join(args.output_dir, "truth.csv")
    ingest.save_waveform_csv(record, waveform_path)
    synth.save_truth_csv(flags, truth_path)
    n_art = sum(f.is_artifact for f in flags)
    print(f"{len(flags)} beats ({n_art} artifacts) -> {waveform_path}, {truth_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
