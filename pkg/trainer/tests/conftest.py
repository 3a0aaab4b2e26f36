"""Session fixtures: one synthetic corpus and one training run shared by all
trainer tests (training twice would double the suite's runtime for nothing).

The training corpus holds 12 overlapping-pitch voices plus silence/unknown
material. Two contrasting demo voices are synthesized separately and held
out of embedding training; their keyword clips do join the gate's training
manifest, which is the realistic split (the gate is speaker-independent, the
embedding must generalize to new voices).
"""

from __future__ import annotations

import csv
from pathlib import Path

import pytest

from voicegate.dsp import StreamConfig
from voicegate_trainer.data import SpeakerVoice, make_speakers, synthesize_corpus
from voicegate_trainer.train import TrainConfig, train_dvector, train_keyword

DEMO_ENROLLED = SpeakerVoice(
    name="demo_enrolled", f0=100.0,
    timbre=(1.0, 0.55, 0.3, 0.18, 0.1, 0.06, 0.03, 0.02),
)
DEMO_IMPOSTOR = SpeakerVoice(
    name="demo_impostor", f0=150.0,
    timbre=(0.15, 0.3, 0.9, 0.5, 0.8, 0.25, 0.4, 0.1),
)


@pytest.fixture(scope="session")
def stream_config() -> StreamConfig:
    return StreamConfig()


@pytest.fixture(scope="session")
def corpus(tmp_path_factory, stream_config):
    root = tmp_path_factory.mktemp("corpus")
    train_manifest = synthesize_corpus(
        root / "train",
        stream_config,
        make_speakers(16, seed=5),
        clips_per_speaker={"train": 10, "val": 3, "test": 2},
        silence_clips={"train": 30, "val": 10},
        unknown_clips={"train": 30, "val": 10},
        offcenter_clips={"train": 40, "val": 12},
        seed=5,
    )
    demo_manifest = synthesize_corpus(
        root / "demo",
        stream_config,
        [DEMO_ENROLLED, DEMO_IMPOSTOR],
        clips_per_speaker={"train": 20, "val": 10, "test": 6},
        seed=77,
    )
    # Off-center keyword material from the demo voices, gate training only:
    # the gate must not fire until the keyword is centered in the window.
    demo_off_manifest = synthesize_corpus(
        root / "demo_off",
        stream_config,
        [DEMO_ENROLLED, DEMO_IMPOSTOR],
        clips_per_speaker={},
        offcenter_clips={"train": 24},
        seed=78,
    )
    # Hard held-out voices (overlapping pitch, fresh timbres) for the
    # generalization tests, where the easy demo pair would saturate.
    heldout_manifest = synthesize_corpus(
        root / "heldout",
        stream_config,
        make_speakers(6, seed=99, prefix="held"),
        clips_per_speaker={"train": 20, "val": 10, "test": 10},
        seed=99,
    )

    # Gate manifest: the full training material plus the demo voices' keyword
    # clips (train split only), with paths rebased onto the corpus root.
    ks_manifest = root / "ks_manifest.csv"
    with ks_manifest.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "speaker", "keyword", "split"])
        sources = (
            (train_manifest, "train"), (demo_manifest, "demo"), (demo_off_manifest, "demo_off"),
        )
        for manifest, base in sources:
            with manifest.open(newline="") as src:
                for row in csv.DictReader(src):
                    if base.startswith("demo") and row["split"] != "train":
                        continue
                    writer.writerow(
                        [f"{base}/{row['path']}", row["speaker"], row["keyword"], row["split"]]
                    )

    return {
        "root": root,
        "train_manifest": train_manifest,
        "demo_manifest": demo_manifest,
        "heldout_manifest": heldout_manifest,
        "ks_manifest": ks_manifest,
    }


@pytest.fixture(scope="session")
def keyword_artifacts(corpus):
    cfg = TrainConfig(
        root=str(corpus["root"]), manifest=str(corpus["ks_manifest"]), epochs=12, seed=0
    )
    bundle, model = train_keyword(cfg)
    return bundle, model


@pytest.fixture(scope="session")
def dvector_artifacts(corpus):
    cfg = TrainConfig(
        root=str(corpus["root"] / "train"),
        manifest=str(corpus["train_manifest"]),
        epochs=45,
        seed=0,
    )
    bundle, model = train_dvector(cfg)
    return bundle, model
