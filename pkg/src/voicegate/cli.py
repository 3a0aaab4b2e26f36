"""Command-line interface.

Subcommands:
  inspect   print a bundle's layer table (hyperparameters, activations, weights)
  mfcc      extract a spectrogram from a WAV file, optionally to CSV
  ks        classify one WAV through the keyword network
  asv       export / import / show persisted enrollment state
  run       stream a WAV (or the microphone) through the pipeline as JSON lines
  eval      run the enrollment protocol over a manifest and report metrics
  serve     start the local demo service
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

from . import architectures
from .asv import load_enrollment
from .dsp import SampleStream, extract_mfcc, read_wav, window_from_samples, write_spectrogram_csv
from .evaluation import (
    DEFAULT_N_VALUES,
    METHODS,
    format_report_table,
    load_dataset,
    report_to_csv,
    run_protocol,
)
from .ks import ks_classify
from .nn import format_layer_table, layer_table, load_bundle
from .pipeline import Pipeline, PipelineConfig, load_config


def _cmd_inspect(args) -> int:
    if args.reference:
        cfg = PipelineConfig().stream
        shape = architectures.input_shape(cfg)
        specs = (
            architectures.ks_layer_specs()
            if args.reference == "keyword"
            else architectures.dvector_layer_specs()
        )
        print(format_layer_table(args.reference, layer_table(shape, specs)))
        return 0
    bundle = load_bundle(args.bundle)
    print(format_layer_table(bundle.name, bundle.table()))
    return 0


def _cmd_mfcc(args) -> int:
    cfg = load_config(args.config).stream if args.config else PipelineConfig().stream
    samples = read_wav(args.wav, cfg.sample_rate_hz)
    window = window_from_samples(samples, cfg)
    spec = extract_mfcc(window, cfg)
    print(f"spectrogram: {spec.num_bins} bins x {spec.num_frames} frames")
    if args.csv:
        write_spectrogram_csv(spec, args.csv)
        print(f"wrote {args.csv}")
    return 0


def _cmd_ks(args) -> int:
    cfg = load_config(args.config).stream if args.config else PipelineConfig().stream
    bundle = load_bundle(args.bundle)
    samples = read_wav(args.wav, cfg.sample_rate_hz)
    decision = ks_classify(bundle, extract_mfcc(window_from_samples(samples, cfg), cfg))
    print(f"class: {decision.label.name.lower()}")
    print("scores: " + " ".join(f"{s:.4f}" for s in decision.scores))
    print(f"y: {decision.y}")
    return 0


def _cmd_asv(args) -> int:
    if args.asv_command == "show":
        enrollment = load_enrollment(args.file)
        print(
            f"vectors: {len(enrollment)}/{enrollment.capacity}  "
            f"dim: {enrollment.dim or '-'}  threshold: {enrollment.threshold:.4f}"
        )
        return 0
    config = load_config(args.config)
    state_path = Path(config.enrollment_path)
    if args.asv_command == "export":
        load_enrollment(state_path)  # validate before handing out
        shutil.copyfile(state_path, args.file)
        print(f"exported {state_path} -> {args.file}")
    else:
        load_enrollment(args.file)  # validate before installing
        state_path.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(args.file, state_path)
        print(f"imported {args.file} -> {state_path}")
    return 0


def _iter_chunks_from_wav(path, rate_hz, chunk_samples=4000):
    samples = read_wav(path, rate_hz)
    for start in range(0, len(samples), chunk_samples):
        yield samples[start : start + chunk_samples]


def _iter_chunks_from_mic(rate_hz, chunk_samples=4000):
    try:
        import sounddevice
    except ImportError:
        raise SystemExit(
            "microphone input needs the 'sounddevice' package; install it or use --input <wav>"
        )
    with sounddevice.InputStream(
        samplerate=rate_hz, channels=1, dtype="int16", blocksize=chunk_samples
    ) as stream:
        while True:
            chunk, _ = stream.read(chunk_samples)
            yield chunk[:, 0]


def _cmd_run(args) -> int:
    config = load_config(args.config)
    pipeline = Pipeline.from_bundles(
        config.stream,
        load_bundle(config.ks_bundle_path),
        load_bundle(config.dvector_bundle_path),
        enrollment_capacity=config.enrollment_capacity,
        threshold=config.threshold,
        memory_limit=config.memory_limit_bytes,
        refractory_hops=config.refractory_hops,
    )
    stream = SampleStream(config.stream)
    chunks = (
        _iter_chunks_from_mic(config.stream.sample_rate_hz)
        if args.input == "mic"
        else _iter_chunks_from_wav(args.input, config.stream.sample_rate_hz)
    )
    for chunk in chunks:
        for window in stream.push(chunk):
            print(pipeline.process_window(window).to_json())
    return 0


def _cmd_eval(args) -> int:
    cfg = load_config(args.config).stream if args.config else PipelineConfig().stream
    result = load_dataset(args.root, args.manifest, cfg)
    for reject in result.rejected:
        print(f"rejected {reject.path}: {reject.reason}", file=sys.stderr)
    for warning in result.split_warnings:
        print(f"warning: {warning}", file=sys.stderr)
    bundle = load_bundle(args.bundle)
    methods = tuple(m.strip() for m in args.methods.split(","))
    n_values = tuple(int(v) for v in args.n.split(","))
    report = run_protocol(
        result.utterances, bundle, cfg, methods=methods, n_values=n_values, seed=args.seed
    )
    print(format_report_table(report))
    for key, reason in sorted(report.skipped.items()):
        print(f"skipped {key}: {reason}", file=sys.stderr)
    if args.out:
        report_to_csv(report, args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    serve(load_config(args.config), static_dir=args.static)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voicegate")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", help="print a bundle's layer table")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--bundle", help="path to a .twb file")
    group.add_argument(
        "--reference",
        choices=("keyword", "dvector"),
        help="print the built-in reference architecture instead",
    )
    p.set_defaults(fn=_cmd_inspect)

    p = sub.add_parser("mfcc", help="extract a spectrogram from a WAV file")
    p.add_argument("wav")
    p.add_argument("--csv", help="write coefficients as CSV (row = mel bin)")
    p.add_argument("--config")
    p.set_defaults(fn=_cmd_mfcc)

    p = sub.add_parser("ks", help="classify one WAV through the keyword network")
    ks_sub = p.add_subparsers(dest="ks_command", required=True)
    c = ks_sub.add_parser("classify")
    c.add_argument("wav")
    c.add_argument("--bundle", required=True)
    c.add_argument("--config")
    c.set_defaults(fn=_cmd_ks)

    p = sub.add_parser("asv", help="manage persisted enrollment state")
    asv_sub = p.add_subparsers(dest="asv_command", required=True)
    e = asv_sub.add_parser("export")
    e.add_argument("file", help="destination file")
    e.add_argument("--config", required=True)
    e.set_defaults(fn=_cmd_asv)
    i = asv_sub.add_parser("import")
    i.add_argument("file", help="source file")
    i.add_argument("--config", required=True)
    i.set_defaults(fn=_cmd_asv)
    s = asv_sub.add_parser("show")
    s.add_argument("file")
    s.set_defaults(fn=_cmd_asv)

    p = sub.add_parser("run", help="stream audio through the pipeline")
    p.add_argument("--input", required=True, help="path to a WAV file, or 'mic'")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("eval", help="run the enrollment protocol over a manifest")
    eval_sub = p.add_subparsers(dest="eval_command", required=True)
    r = eval_sub.add_parser("run")
    r.add_argument("--manifest", required=True)
    r.add_argument("--root", default=".")
    r.add_argument("--bundle", required=True, help="embedding extractor .twb")
    r.add_argument("--methods", default=",".join(METHODS))
    r.add_argument("--n", default=",".join(str(n) for n in DEFAULT_N_VALUES))
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", help="also write the report as CSV")
    r.add_argument("--config")
    r.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("serve", help="start the local demo service")
    p.add_argument("--config", required=True)
    p.add_argument("--static", help="directory of built UI assets to serve at /")
    p.set_defaults(fn=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
