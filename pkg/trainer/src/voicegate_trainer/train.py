"""Training loops for the keyword gate and the d-vector extractor.

Both trainers are deliberately small: featurize through the runtime
front-end (so the exported fingerprint is honest by construction), Adam on
cross-entropy, fixed seed, held-out accuracy recorded into the bundle
metadata. The d-vector net trains as a speaker classifier; export drops the
head.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from voicegate.dsp import StreamConfig
from voicegate.nn import WeightBundle

from .data import ManifestRow, featurize, ks_class_of, read_manifest
from .export import export_dvector_bundle, export_keyword_bundle
from .models import DvectorNet, KeywordNet


@dataclass
class TrainConfig:
    root: str
    manifest: str
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    stream: StreamConfig = field(default_factory=StreamConfig)


def _batches(count, batch_size, generator):
    order = torch.randperm(count, generator=generator)
    for start in range(0, count, batch_size):
        yield order[start : start + batch_size]


def _train_classifier(model, features, labels, cfg: TrainConfig):
    generator = torch.Generator().manual_seed(cfg.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    loss_fn = nn.CrossEntropyLoss()
    model.train()
    for _ in range(cfg.epochs):
        for batch in _batches(len(features), cfg.batch_size, generator):
            optimizer.zero_grad()
            loss = loss_fn(model(features[batch]), labels[batch])
            loss.backward()
            optimizer.step()
    model.eval()


def _accuracy(model, features, labels) -> float:
    if len(features) == 0:
        return float("nan")
    with torch.no_grad():
        predicted = model(features).argmax(dim=1)
    return float((predicted == labels).float().mean())


def _split(rows: list[ManifestRow], name: str) -> list[ManifestRow]:
    return [r for r in rows if r.split == name]


def train_keyword(cfg: TrainConfig) -> tuple[WeightBundle, KeywordNet]:
    """Train the 3-class gate (silence / unknown / keyword) and export it."""
    torch.manual_seed(cfg.seed)
    rows = read_manifest(cfg.root, cfg.manifest)
    train_rows, val_rows = _split(rows, "train"), _split(rows, "val")
    if not train_rows:
        raise ValueError("manifest has no training rows")

    x_train = featurize(train_rows, cfg.stream)
    y_train = torch.tensor([ks_class_of(r) for r in train_rows])
    x_val = featurize(val_rows, cfg.stream) if val_rows else x_train[:0]
    y_val = torch.tensor([ks_class_of(r) for r in val_rows]) if val_rows else y_train[:0]

    model = KeywordNet()
    _train_classifier(model, x_train, y_train, cfg)
    val_accuracy = _accuracy(model, x_val, y_val)

    bundle = export_keyword_bundle(
        model,
        cfg.stream,
        metadata={
            "task": "keyword-gate",
            "classes": ["silence", "unknown", "keyword"],
            "val_accuracy": None if np.isnan(val_accuracy) else round(val_accuracy, 4),
            "epochs": cfg.epochs,
            "seed": cfg.seed,
            "optimizer": f"adam(lr={cfg.learning_rate})",
        },
    )
    return bundle, model


def train_dvector(cfg: TrainConfig) -> tuple[WeightBundle, DvectorNet]:
    """Train speaker classification over the manifest's keyword clips, then
    export the embedding trunk without the head."""
    torch.manual_seed(cfg.seed)
    rows = [r for r in read_manifest(cfg.root, cfg.manifest) if r.keyword]
    speakers = sorted({r.speaker for r in rows})
    if len(speakers) < 2:
        raise ValueError("d-vector training needs at least 2 speakers")
    index = {name: k for k, name in enumerate(speakers)}

    train_rows, val_rows = _split(rows, "train"), _split(rows, "val")
    x_train = featurize(train_rows, cfg.stream)
    y_train = torch.tensor([index[r.speaker] for r in train_rows])
    x_val = featurize(val_rows, cfg.stream) if val_rows else x_train[:0]
    y_val = torch.tensor([index[r.speaker] for r in val_rows]) if val_rows else y_train[:0]

    model = DvectorNet(num_speakers=len(speakers))
    _train_classifier(model, x_train, y_train, cfg)
    val_accuracy = _accuracy(model, x_val, y_val)

    bundle = export_dvector_bundle(
        model,
        cfg.stream,
        metadata={
            "task": "voice-embedding",
            "training_speakers": len(speakers),
            "val_accuracy": None if np.isnan(val_accuracy) else round(val_accuracy, 4),
            "epochs": cfg.epochs,
            "seed": cfg.seed,
            "optimizer": f"adam(lr={cfg.learning_rate})",
        },
    )
    return bundle, model
