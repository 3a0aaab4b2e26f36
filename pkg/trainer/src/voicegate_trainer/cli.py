"""Trainer CLI: `voicegate-train ks|dvector|synth`."""

from __future__ import annotations

import argparse

from voicegate.nn import save_bundle
from voicegate.dsp import StreamConfig

from .data import make_speakers, synthesize_corpus
from .train import TrainConfig, train_dvector, train_keyword


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        root=args.root,
        manifest=args.manifest,
        epochs=args.epochs,
        seed=args.seed,
        learning_rate=args.lr,
    )


def _cmd_ks(args) -> int:
    bundle, _ = train_keyword(_train_config(args))
    save_bundle(bundle, args.out)
    print(f"wrote {args.out} (val_accuracy={bundle.metadata.get('val_accuracy')})")
    return 0


def _cmd_dvector(args) -> int:
    bundle, _ = train_dvector(_train_config(args))
    save_bundle(bundle, args.out)
    print(f"wrote {args.out} (val_accuracy={bundle.metadata.get('val_accuracy')})")
    return 0


def _cmd_synth(args) -> int:
    speakers = make_speakers(args.speakers, seed=args.seed)
    manifest = synthesize_corpus(
        args.root,
        StreamConfig(),
        speakers,
        clips_per_speaker={"train": args.train, "val": args.val, "test": args.test},
        silence_clips={"train": args.train, "val": args.val},
        unknown_clips={"train": args.train, "val": args.val},
        seed=args.seed,
    )
    print(f"wrote {manifest}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="voicegate-train")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn in (("ks", _cmd_ks), ("dvector", _cmd_dvector)):
        p = sub.add_parser(name, help=f"train the {name} network and export a bundle")
        p.add_argument("--root", required=True)
        p.add_argument("--manifest", required=True)
        p.add_argument("--out", required=True, help="output .twb path")
        p.add_argument("--epochs", type=int, default=30)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--lr", type=float, default=1e-3)
        p.set_defaults(fn=fn)

    p = sub.add_parser("synth", help="generate a synthetic training corpus")
    p.add_argument("--root", required=True)
    p.add_argument("--speakers", type=int, default=20)
    p.add_argument("--train", type=int, default=12)
    p.add_argument("--val", type=int, default=4)
    p.add_argument("--test", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_synth)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
