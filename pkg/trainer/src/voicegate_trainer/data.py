"""Corpus handling for the desk-scale trainers.

Reads the same ``path,speaker,keyword,split`` manifest the evaluation harness
uses. For keyword training the three classes come from the same columns:
rows whose speaker is ``_silence_`` are the silence class, otherwise the
keyword flag separates keyword from unknown.

Also ships a synthetic corpus generator so the trainers can be exercised
end to end without any external recordings. Speaker identity lives in a
fixed harmonic timbre profile; the fundamental is drawn per utterance from a
range shared by all speakers, so pitch alone cannot identify anyone and the
embedding net has to learn timbre. The shared keyword is a rising pitch
glide with a common amplitude envelope; unknown clips are random tone
patterns; silence is low-level noise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from voicegate.dsp import StreamConfig, extract_mfcc, read_wav, window_from_samples, write_wav

SILENCE_SPEAKER = "_silence_"
KS_CLASSES = ("silence", "unknown", "keyword")


@dataclass(frozen=True)
class ManifestRow:
    path: str
    speaker: str
    keyword: bool
    split: str


def read_manifest(root, manifest_path) -> list[ManifestRow]:
    root = Path(root)
    rows = []
    with Path(manifest_path).open(newline="") as fh:
        for record in csv.DictReader(fh):
            rows.append(
                ManifestRow(
                    path=str(root / record["path"].strip()),
                    speaker=record["speaker"].strip(),
                    keyword=record["keyword"].strip().lower() in ("1", "true", "yes"),
                    split=record["split"].strip().lower(),
                )
            )
    return rows


def ks_class_of(row: ManifestRow) -> int:
    if row.speaker == SILENCE_SPEAKER:
        return 0
    return 2 if row.keyword else 1


def featurize(rows: list[ManifestRow], cfg: StreamConfig) -> torch.Tensor:
    """Stack MFCC spectrograms as a (N, 1, bins, frames) float tensor."""
    feats = []
    for row in rows:
        window = window_from_samples(read_wav(row.path, cfg.sample_rate_hz), cfg)
        feats.append(extract_mfcc(window, cfg).coefficients)
    return torch.from_numpy(np.stack(feats)).unsqueeze(1)


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

def _envelope(length, attack=0.08, release=0.2):
    t = np.linspace(0.0, 1.0, length)
    env = np.minimum(t / attack, 1.0) * np.minimum((1.0 - t) / release, 1.0)
    return np.clip(env, 0.0, 1.0)


F0_JITTER_OCTAVES = 0.15  # per-utterance pitch spread, shared by all speakers
TIMBRE_JITTER = 0.15  # per-utterance multiplicative noise on harmonic weights


def _voice(base_f0, timbre, pitch_curve, rate, length, rng):
    """Harmonic stack following a pitch curve, with per-utterance variability."""
    f0 = base_f0 * 2.0 ** rng.uniform(-F0_JITTER_OCTAVES, F0_JITTER_OCTAVES)
    weights = np.asarray(timbre) * np.exp(rng.normal(0.0, TIMBRE_JITTER, len(timbre)))
    phase = 2 * np.pi * np.cumsum(pitch_curve * f0) / rate
    signal = np.zeros(length)
    for h, weight in enumerate(weights, start=1):
        signal += weight * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    signal *= _envelope(length)
    signal += rng.normal(0.0, 0.01, length)
    peak = np.max(np.abs(signal)) or 1.0
    return (signal / peak * 0.5 * 32767).astype(np.int16)


def _keyword_pitch_curve(length):
    # The shared keyword: flat, then a glide up a fifth, then flat again.
    curve = np.ones(length)
    third = length // 3
    curve[third : 2 * third] = np.linspace(1.0, 1.5, third)
    curve[2 * third :] = 1.5
    return curve


def _unknown_pitch_curve(length, rng):
    steps = rng.integers(2, 5)
    curve = np.repeat(rng.uniform(0.6, 2.2, steps), length // steps + 1)[:length]
    return curve


@dataclass(frozen=True)
class SpeakerVoice:
    name: str
    f0: float
    timbre: tuple[float, ...]


def make_speakers(
    count, seed=0, f0_low=105.0, f0_high=125.0, prefix="spk"
) -> list[SpeakerVoice]:
    """Voices whose base pitches all overlap; only timbre tells them apart."""
    rng = np.random.default_rng(seed)
    speakers = []
    for k in range(count):
        timbre = rng.uniform(0.05, 1.0, size=8)
        timbre /= timbre.sum()
        speakers.append(
            SpeakerVoice(
                name=f"{prefix}{k:02d}", f0=float(rng.uniform(f0_low, f0_high)),
                timbre=tuple(timbre),
            )
        )
    return speakers


def synthesize_keyword_clip(speaker: SpeakerVoice, cfg: StreamConfig, rng) -> np.ndarray:
    length = cfg.window_samples
    return _voice(speaker.f0, speaker.timbre, _keyword_pitch_curve(length),
                  cfg.sample_rate_hz, length, rng)


def synthesize_unknown_clip(speaker: SpeakerVoice, cfg: StreamConfig, rng) -> np.ndarray:
    length = cfg.window_samples
    return _voice(speaker.f0, speaker.timbre, _unknown_pitch_curve(length, rng),
                  cfg.sample_rate_hz, length, rng)


def synthesize_silence_clip(cfg: StreamConfig, rng) -> np.ndarray:
    return (rng.normal(0.0, 0.003, cfg.window_samples) * 32767).astype(np.int16)


def synthesize_offcenter_clip(speaker: SpeakerVoice, cfg: StreamConfig, rng) -> np.ndarray:
    """A keyword shifted off the window center, for training the gate to fire
    only on centered keywords (the gate is what centers the windows the
    verifier sees, so off-center keywords must count as unknown)."""
    clip = synthesize_keyword_clip(speaker, cfg, rng).astype(np.float64)
    shift = int(rng.uniform(0.2, 0.6) * cfg.window_samples) * (1 if rng.integers(2) else -1)
    shifted = np.zeros_like(clip)
    if shift > 0:
        shifted[shift:] = clip[: len(clip) - shift]
    else:
        shifted[: len(clip) + shift] = clip[-shift:]
    shifted += rng.normal(0.0, 0.003, len(clip)) * 32767
    return np.clip(shifted, -32768, 32767).astype(np.int16)


def synthesize_corpus(
    root,
    cfg: StreamConfig,
    speakers: list[SpeakerVoice],
    clips_per_speaker: dict[str, int],
    silence_clips: dict[str, int] | None = None,
    unknown_clips: dict[str, int] | None = None,
    offcenter_clips: dict[str, int] | None = None,
    seed: int = 0,
) -> Path:
    """Write WAVs plus a manifest under ``root``; returns the manifest path.

    ``clips_per_speaker`` maps split name to keyword-clip count per speaker;
    the optional dicts add shared silence/unknown/off-center material for
    gate training (all labeled as non-keyword).
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows = []

    for speaker in speakers:
        for split, count in clips_per_speaker.items():
            for k in range(count):
                name = f"{speaker.name}_{split}_{k}.wav"
                write_wav(root / name, synthesize_keyword_clip(speaker, cfg, rng),
                          cfg.sample_rate_hz)
                rows.append((name, speaker.name, 1, split))

    for split, count in (unknown_clips or {}).items():
        for k in range(count):
            speaker = speakers[int(rng.integers(len(speakers)))]
            name = f"unknown_{split}_{k}.wav"
            write_wav(root / name, synthesize_unknown_clip(speaker, cfg, rng),
                      cfg.sample_rate_hz)
            rows.append((name, speaker.name, 0, split))

    for split, count in (offcenter_clips or {}).items():
        for k in range(count):
            speaker = speakers[int(rng.integers(len(speakers)))]
            name = f"offcenter_{split}_{k}.wav"
            write_wav(root / name, synthesize_offcenter_clip(speaker, cfg, rng),
                      cfg.sample_rate_hz)
            rows.append((name, speaker.name, 0, split))

    for split, count in (silence_clips or {}).items():
        for k in range(count):
            name = f"silence_{split}_{k}.wav"
            write_wav(root / name, synthesize_silence_clip(cfg, rng), cfg.sample_rate_hz)
            rows.append((name, SILENCE_SPEAKER, 0, split))

    manifest = root / "manifest.csv"
    with manifest.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "speaker", "keyword", "split"])
        writer.writerows(rows)
    return manifest
