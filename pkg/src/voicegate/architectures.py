"""Reference network architectures for the keyword gate and d-vector extractor.

Both networks consume the 40x49 single-channel MFCC spectrogram the default
front-end produces. The keyword net is two conv/max-pool blocks plus a
3-way softmax dense head (silence / unknown / keyword); the d-vector net is
a batchnorm followed by a conv stack flattening to a 256-dimensional voice
embedding. Weight bundles exported for this runtime must match these layer
tables exactly.
"""

from __future__ import annotations

from .dsp import StreamConfig
from .nn import (
    LayerSpec,
    batchnorm_spec,
    conv2d_spec,
    dense_spec,
    flatten_spec,
    maxpool2d_spec,
)

DVECTOR_DIM = 256
KS_NUM_CLASSES = 3


def input_shape(cfg: StreamConfig | None = None) -> tuple[int, int, int]:
    cfg = cfg or StreamConfig()
    return (cfg.num_mel_bins, cfg.frame_count, 1)


def ks_layer_specs() -> list[LayerSpec]:
    """Keyword classifier: conv(8x20,16,s2) / pool2 / conv(4x10,32) / pool2 /
    flatten / dense(3, softmax)."""
    return [
        conv2d_spec(8, 20, 16, stride=2, padding="same", activation="relu"),
        maxpool2d_spec(2),
        conv2d_spec(4, 10, 32, stride=1, padding="same", activation="relu"),
        maxpool2d_spec(2),
        flatten_spec(),
        dense_spec(KS_NUM_CLASSES, activation="softmax"),
    ]


def dvector_layer_specs() -> list[LayerSpec]:
    """Voice embedding extractor: batchnorm, four convs with interleaved pools,
    flattening to a 256-vector.

    The third conv runs at stride 2: with stride 1 its output would be
    6x8x32 = 1536 activations, while the reference activation budget for that
    layer is 384 = 3x4x32, which only stride 2 with same padding produces
    (the following stride-2 conv then lands on 2x2x64 = 256, the embedding
    size).
    """
    return [
        batchnorm_spec(),
        conv2d_spec(3, 3, 8, stride=1, padding="same", activation="relu"),
        maxpool2d_spec(3),
        conv2d_spec(3, 3, 16, stride=1, padding="same", activation="relu"),
        maxpool2d_spec(2),
        conv2d_spec(3, 3, 32, stride=2, padding="same", activation="relu"),
        conv2d_spec(3, 3, 64, stride=2, padding="same", activation="relu"),
        flatten_spec(),
    ]
