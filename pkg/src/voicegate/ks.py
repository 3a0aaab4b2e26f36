"""Keyword gate: 3-class classifier (silence / unknown / keyword) over one
spectrogram, reduced to the binary keyword-present decision."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .dsp import Spectrogram
from .nn import WeightBundle, run_network


class FingerprintMismatchError(ValueError):
    """Model weights and the active front-end disagree on processing choices."""


class KsClass(IntEnum):
    """Output classes in the trained bundle's index order."""

    SILENCE = 0
    UNKNOWN = 1
    KEYWORD = 2


@dataclass(frozen=True)
class KsDecision:
    y: int  # 1 iff the keyword class won
    label: KsClass
    scores: np.ndarray  # 3 class probabilities


def check_fingerprint(bundle: WeightBundle, spectrogram: Spectrogram):
    if bundle.fingerprint != spectrogram.fingerprint:
        theirs = bundle.fingerprint
        ours = spectrogram.fingerprint
        diffs = sorted(
            k for k in set(theirs) | set(ours) if theirs.get(k) != ours.get(k)
        )
        raise FingerprintMismatchError(
            f"bundle '{bundle.name}' was built for a different front-end "
            f"(differing fields: {diffs})"
        )


def _spectrogram_tensor(spectrogram: Spectrogram) -> np.ndarray:
    return spectrogram.coefficients.astype(np.float32)[:, :, np.newaxis]


def decision_from_scores(scores: np.ndarray) -> KsDecision:
    """Reduce a 3-class score vector to the binary keyword decision.

    Ties break toward the lowest class index, so the decision is deterministic
    for any score vector.
    """
    scores = np.asarray(scores, dtype=np.float32)
    if scores.shape != (len(KsClass),):
        raise ValueError(f"expected {len(KsClass)} scores, got shape {scores.shape}")
    label = KsClass(int(np.argmax(scores)))  # argmax returns the first maximum
    return KsDecision(y=int(label == KsClass.KEYWORD), label=label, scores=scores)


def ks_classify(bundle: WeightBundle, spectrogram: Spectrogram) -> KsDecision:
    """Classify one spectrogram; y = 1 only for the keyword class."""
    check_fingerprint(bundle, spectrogram)
    if bundle.output_shape != (len(KsClass),):
        raise ValueError(
            f"bundle '{bundle.name}' outputs {bundle.output_shape}, "
            f"expected ({len(KsClass)},)"
        )
    return decision_from_scores(run_network(bundle, _spectrogram_tensor(spectrogram)))
