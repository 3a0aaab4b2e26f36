"""Torch-to-bundle export with architecture drift refusal.

A bundle leaves this module only if its layer table equals the runtime's
reference table cell for cell; anything else aborts, so a mistrained or
edited model can never masquerade as the deployed architecture.
"""

from __future__ import annotations

import numpy as np
import torch

from voicegate import architectures
from voicegate.dsp import StreamConfig
from voicegate.nn import BundleIntegrityError, BundleLayer, WeightBundle, layer_table

from .models import DvectorNet, KeywordNet

KS_EXPECTED_TOTALS = (17_643, 25_971)  # (activations, weights), input row included
DVECTOR_EXPECTED_TOTALS = (26_256, 24_388)


class ArchitectureDriftError(RuntimeError):
    """The model being exported does not match the reference architecture."""


def _conv_tensors(conv: torch.nn.Conv2d) -> dict[str, np.ndarray]:
    weights = conv.weight.detach().permute(2, 3, 1, 0).contiguous().numpy()
    bias = conv.bias.detach().numpy()
    return {"weights": weights.astype(np.float32), "bias": bias.astype(np.float32)}


def _dense_tensors(linear: torch.nn.Linear) -> dict[str, np.ndarray]:
    return {
        "weights": linear.weight.detach().t().contiguous().numpy().astype(np.float32),
        "bias": linear.bias.detach().numpy().astype(np.float32),
    }


def _batchnorm_tensors(norm: torch.nn.BatchNorm2d) -> dict[str, np.ndarray]:
    return {
        "gamma": norm.weight.detach().numpy().astype(np.float32),
        "beta": norm.bias.detach().numpy().astype(np.float32),
        "mean": norm.running_mean.detach().numpy().astype(np.float32),
        "variance": norm.running_var.detach().numpy().astype(np.float32),
    }


def _check_table(name, input_shape, specs, expected_totals):
    rows = layer_table(input_shape, specs)
    totals = (sum(r.alpha for r in rows), sum(r.omega for r in rows))
    if totals != expected_totals:
        raise ArchitectureDriftError(
            f"{name}: table totals {totals} != expected {expected_totals}"
        )


def _build_bundle(name, input_shape, cfg, layers, metadata) -> WeightBundle:
    try:
        return WeightBundle(
            name=name,
            input_shape=input_shape,
            fingerprint=cfg.fingerprint(),
            layers=layers,
            metadata=metadata or {},
        )
    except BundleIntegrityError as err:
        raise ArchitectureDriftError(f"{name}: model diverges from the reference "
                                     f"architecture: {err}") from err


def export_keyword_bundle(
    model: KeywordNet, cfg: StreamConfig, metadata: dict | None = None
) -> WeightBundle:
    model.eval()
    specs = architectures.ks_layer_specs()
    input_shape = architectures.input_shape(cfg)
    _check_table("keyword", input_shape, specs, KS_EXPECTED_TOTALS)
    layers = [
        BundleLayer(specs[0], _conv_tensors(model.conv1.conv)),
        BundleLayer(specs[1], {}),
        BundleLayer(specs[2], _conv_tensors(model.conv2.conv)),
        BundleLayer(specs[3], {}),
        BundleLayer(specs[4], {}),
        BundleLayer(specs[5], _dense_tensors(model.head)),
    ]
    return _build_bundle("keyword", input_shape, cfg, layers, metadata)


def export_dvector_bundle(
    model: DvectorNet, cfg: StreamConfig, metadata: dict | None = None
) -> WeightBundle:
    """Export the embedding trunk; any classification head is dropped here."""
    model.eval()
    specs = architectures.dvector_layer_specs()
    input_shape = architectures.input_shape(cfg)
    _check_table("dvector", input_shape, specs, DVECTOR_EXPECTED_TOTALS)
    layers = [
        BundleLayer(specs[0], _batchnorm_tensors(model.norm)),
        BundleLayer(specs[1], _conv_tensors(model.conv1.conv)),
        BundleLayer(specs[2], {}),
        BundleLayer(specs[3], _conv_tensors(model.conv2.conv)),
        BundleLayer(specs[4], {}),
        BundleLayer(specs[5], _conv_tensors(model.conv3.conv)),
        BundleLayer(specs[6], _conv_tensors(model.conv4.conv)),
        BundleLayer(specs[7], {}),
    ]
    bundle = _build_bundle("dvector", input_shape, cfg, layers, metadata)
    if bundle.output_shape != (architectures.DVECTOR_DIM,):
        raise ArchitectureDriftError(
            f"dvector: output {bundle.output_shape} != ({architectures.DVECTOR_DIM},)"
        )
    return bundle
