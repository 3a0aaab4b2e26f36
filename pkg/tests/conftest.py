"""Shared fixtures: randomly weighted reference bundles and WAV helpers.

The bundle builders here are the stand-in for trained models: correct
architecture and serialization, random weights. Anything that only needs
shapes, counts, formats, or the cascade mechanics runs against these.
"""

from __future__ import annotations

import numpy as np
import pytest

from voicegate import architectures
from voicegate.dsp import StreamConfig, write_wav
from voicegate.nn import BundleLayer, LayerSpec, WeightBundle, output_shape

ACCEPTANCE_RESULTS: dict[str, list] = {}


def build_random_bundle(
    name: str,
    specs: list[LayerSpec],
    input_shape: tuple,
    fingerprint: dict,
    seed: int = 0,
    scale: float = 0.1,
) -> WeightBundle:
    """Fixture writer: a structurally faithful bundle with random weights."""
    rng = np.random.default_rng(seed)
    layers = []
    shape = tuple(input_shape)
    for spec in specs:
        tensors = {}
        if spec.kind == "conv2d":
            w_shape = (spec.filter_rows, spec.filter_cols, shape[2], spec.num_filters)
            tensors["weights"] = (rng.standard_normal(w_shape) * scale).astype(np.float32)
            tensors["bias"] = (rng.standard_normal(spec.num_filters) * scale).astype(np.float32)
        elif spec.kind == "dense":
            w_shape = (shape[0], spec.units)
            tensors["weights"] = (rng.standard_normal(w_shape) * scale).astype(np.float32)
            tensors["bias"] = (rng.standard_normal(spec.units) * scale).astype(np.float32)
        elif spec.kind == "batchnorm":
            tensors["gamma"] = np.array([1.0], dtype=np.float32)
            tensors["beta"] = np.array([0.0], dtype=np.float32)
            tensors["mean"] = np.array([0.0], dtype=np.float32)
            tensors["variance"] = np.array([1.0], dtype=np.float32)
        layers.append(BundleLayer(spec=spec, tensors=tensors))
        shape = output_shape(spec, shape)
    return WeightBundle(
        name=name,
        input_shape=input_shape,
        fingerprint=fingerprint,
        layers=layers,
        metadata={"weights": "random", "seed": seed},
    )


@pytest.fixture(scope="session")
def stream_config() -> StreamConfig:
    return StreamConfig()


@pytest.fixture(scope="session")
def ks_bundle(stream_config) -> WeightBundle:
    return build_random_bundle(
        "keyword",
        architectures.ks_layer_specs(),
        architectures.input_shape(stream_config),
        stream_config.fingerprint(),
        seed=11,
    )


@pytest.fixture(scope="session")
def dvector_bundle(stream_config) -> WeightBundle:
    return build_random_bundle(
        "dvector",
        architectures.dvector_layer_specs(),
        architectures.input_shape(stream_config),
        stream_config.fingerprint(),
        seed=12,
    )


@pytest.fixture()
def sine_wav(tmp_path, stream_config):
    """One window of a 440 Hz tone at half amplitude."""
    t = np.arange(stream_config.window_samples) / stream_config.sample_rate_hz
    samples = (0.5 * 32767 * np.sin(2 * np.pi * 440.0 * t)).astype(np.int16)
    path = tmp_path / "tone.wav"
    write_wav(path, samples, stream_config.sample_rate_hz)
    return path


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(label): acceptance criterion summarized at the end of the run"
    )


def pytest_runtest_makereport(item, call):
    if call.when != "call":
        return
    marker = item.get_closest_marker("criterion")
    if marker:
        label = marker.args[0]
        ACCEPTANCE_RESULTS.setdefault(label, []).append(call.excinfo is None)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for label, outcomes in ACCEPTANCE_RESULTS.items():
        status = "PASS" if all(outcomes) else "FAIL"
        terminalreporter.write_line(f"[{status}] {label}")
