"""Two-stage cascade: the keyword gate decides whether the embedding network
runs at all; gated windows either fill the enrollment set or get verified.

Every processed window yields one event labeled x: 0 = no keyword (or still
enrolling), 1 = keyword from a non-enrolled voice, 2 = keyword from the
enrolled voice. The embedding network only ever runs on gate-open windows,
which is the cascade's entire efficiency argument, so the pipeline tracks
invocation counters that tests and the status endpoint can read.

A refractory rule suppresses gate-open handling for a configurable number of
hops after each accepted keyword so one utterance spanning several
overlapping windows produces one event (and one enrollment vector), not
several.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np

from .asv import DEFAULT_THRESHOLD, EnrollmentSet, enroll, extract_dvector, sv_decide
from .dsp import AudioWindow, Spectrogram, StreamConfig, extract_mfcc
from .ks import KsDecision, ks_classify
from .nn import WeightBundle, count_params

SAMPLE_BYTES = 2  # raw PCM precision
VALUE_BYTES = 4  # float32 for features, weights, activations, embeddings
DEFAULT_MEMORY_LIMIT = 1_048_576  # 1 MiB of SRAM on the reference target
DEFAULT_REFRACTORY_HOPS = 2


class BudgetExceededError(RuntimeError):
    """The memory estimate exceeds the configured limit; nothing was loaded."""


class Mode(str, Enum):
    ENROLLING = "enrolling"
    INFERRING = "inferring"


@dataclass(frozen=True)
class MemoryBudget:
    """Closed-form byte estimates per pipeline component."""

    components: dict[str, int]
    limit: int

    @property
    def total(self) -> int:
        return sum(self.components.values())

    def check(self):
        if self.total > self.limit:
            offenders = sorted(self.components.items(), key=lambda kv: -kv[1])
            listing = ", ".join(f"{name}={size} B" for name, size in offenders)
            raise BudgetExceededError(
                f"estimated {self.total} B exceeds limit {self.limit} B ({listing})"
            )

    def as_dict(self) -> dict:
        return {"components": dict(self.components), "total": self.total, "limit": self.limit}


def estimate_memory(
    cfg: StreamConfig,
    ks_bundle: WeightBundle,
    dvector_bundle: WeightBundle,
    enrollment_capacity: int,
    limit: int = DEFAULT_MEMORY_LIMIT,
) -> MemoryBudget:
    """Byte budget: raw window at 2 B/sample, everything else at 4 B/value.

    The enrollment store is embedding_dim * capacity values; network weights
    and activations use the per-network totals (input activations included).
    """
    ks_counts = count_params(ks_bundle)
    dv_counts = count_params(dvector_bundle)
    dvector_dim = int(np.prod(dvector_bundle.output_shape))
    components = {
        "input_window": cfg.window_samples * SAMPLE_BYTES,
        "spectrogram": cfg.num_mel_bins * cfg.frame_count * VALUE_BYTES,
        "dvector": dvector_dim * VALUE_BYTES,
        "ks_weights": ks_counts.omega_total * VALUE_BYTES,
        "ks_activations": ks_counts.alpha_total * VALUE_BYTES,
        "extractor_weights": dv_counts.omega_total * VALUE_BYTES,
        "extractor_activations": dv_counts.alpha_total * VALUE_BYTES,
        "enrollment_store": dvector_dim * enrollment_capacity * VALUE_BYTES,
    }
    return MemoryBudget(components=components, limit=limit)


@dataclass(frozen=True)
class PipelineEvent:
    x: int  # 0 no keyword / enrolling, 1 keyword from other voice, 2 enrolled voice
    timestamp: float  # window start, seconds from stream origin
    detail: dict

    def to_json(self) -> str:
        return json.dumps({"t": self.timestamp, "x": self.x, "detail": self.detail})


class Pipeline:
    """Owns the mutable cascade state; single consumer context.

    ``ks_model`` and ``dvector_model`` are callables over spectrograms so tests
    can substitute stubs; ``from_bundles`` wires in real networks after the
    memory budget clears.
    """

    def __init__(
        self,
        cfg: StreamConfig,
        ks_model: Callable[[Spectrogram], KsDecision],
        dvector_model: Callable[[Spectrogram], np.ndarray],
        enrollment: EnrollmentSet,
        refractory_hops: int = DEFAULT_REFRACTORY_HOPS,
        budget: MemoryBudget | None = None,
    ):
        self.cfg = cfg
        self._ks = ks_model
        self._dvector = dvector_model
        self.enrollment = enrollment
        self.refractory_hops = refractory_hops
        self.budget = budget
        self.refractory_remaining = 0
        self.windows_processed = 0
        self.gate_opens = 0
        self.dvector_invocations = 0

    @classmethod
    def from_bundles(
        cls,
        cfg: StreamConfig,
        ks_bundle: WeightBundle,
        dvector_bundle: WeightBundle,
        enrollment_capacity: int = 16,
        threshold: float = DEFAULT_THRESHOLD,
        memory_limit: int = DEFAULT_MEMORY_LIMIT,
        refractory_hops: int = DEFAULT_REFRACTORY_HOPS,
        enrollment: EnrollmentSet | None = None,
    ) -> "Pipeline":
        budget = estimate_memory(
            cfg, ks_bundle, dvector_bundle, enrollment_capacity, memory_limit
        )
        budget.check()
        if enrollment is None:
            enrollment = EnrollmentSet(capacity=enrollment_capacity, threshold=threshold)
        return cls(
            cfg=cfg,
            ks_model=lambda spec: ks_classify(ks_bundle, spec),
            dvector_model=lambda spec: extract_dvector(dvector_bundle, spec),
            enrollment=enrollment,
            refractory_hops=refractory_hops,
            budget=budget,
        )

    @property
    def mode(self) -> Mode:
        return Mode.ENROLLING if not self.enrollment.is_full else Mode.INFERRING

    def process_window(self, window: AudioWindow) -> PipelineEvent:
        self.windows_processed += 1
        spectrogram = extract_mfcc(window, self.cfg)
        decision = self._ks(spectrogram)
        detail: dict = {
            "ks_class": decision.label.name.lower(),
            "ks_scores": [round(float(s), 6) for s in decision.scores],
            "y": decision.y,
        }

        if decision.y == 0:
            if self.refractory_remaining > 0:
                self.refractory_remaining -= 1
            return PipelineEvent(x=0, timestamp=window.start_time, detail=detail)

        if self.refractory_remaining > 0:
            self.refractory_remaining -= 1
            detail["refractory"] = True
            return PipelineEvent(x=0, timestamp=window.start_time, detail=detail)

        # Gate open: this is the only path that runs the embedding network.
        self.gate_opens += 1
        self.refractory_remaining = self.refractory_hops
        self.dvector_invocations += 1
        dvector = self._dvector(spectrogram)

        if self.mode is Mode.ENROLLING:
            filled, capacity = enroll(self.enrollment, dvector)
            detail["enrollment"] = {"filled": filled, "capacity": capacity}
            if filled == capacity:
                detail["enrollment"]["complete"] = True
            return PipelineEvent(x=0, timestamp=window.start_time, detail=detail)

        verdict = sv_decide(dvector, self.enrollment)
        detail["sigma"] = round(verdict.sigma, 6)
        detail["z"] = verdict.z
        detail["best_index"] = verdict.best_index
        detail["threshold"] = self.enrollment.threshold
        return PipelineEvent(
            x=2 if verdict.z == 1 else 1, timestamp=window.start_time, detail=detail
        )

    def reset_enrollment(self):
        """Empty the enrollment set and return to enrolling mode; the threshold
        survives the reset."""
        self.enrollment.clear()
        self.refractory_remaining = 0

    def set_threshold(self, value: float):
        self.enrollment.set_threshold(value)

    def status(self) -> dict:
        return {
            "mode": self.mode.value,
            "filled": len(self.enrollment),
            "capacity": self.enrollment.capacity,
            "threshold": self.enrollment.threshold,
            "windows_processed": self.windows_processed,
            "gate_opens": self.gate_opens,
            "dvector_invocations": self.dvector_invocations,
            "memory": self.budget.as_dict() if self.budget else None,
        }


# ---------------------------------------------------------------------------
# Pipeline configuration file (JSON)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    """Everything the runtime needs to come up: stream timing, model paths,
    enrollment capacity and threshold, memory ceiling."""

    stream: StreamConfig = field(default_factory=StreamConfig)
    enrollment_capacity: int = 16
    threshold: float = DEFAULT_THRESHOLD
    ks_bundle_path: str = "models/keyword.twb"
    dvector_bundle_path: str = "models/dvector.twb"
    enrollment_path: str = "state/enrollment.bin"
    memory_limit_bytes: int = DEFAULT_MEMORY_LIMIT
    refractory_hops: int = DEFAULT_REFRACTORY_HOPS
    port: int = 8765

    def to_dict(self) -> dict:
        return {
            "sample_rate_hz": self.stream.sample_rate_hz,
            "window_seconds": self.stream.window_seconds,
            "hop_seconds": self.stream.hop_seconds,
            "frame_seconds": self.stream.frame_seconds,
            "frame_stride_seconds": self.stream.frame_stride_seconds,
            "num_mel_bins": self.stream.num_mel_bins,
            "enrollment_capacity": self.enrollment_capacity,
            "threshold": self.threshold,
            "ks_bundle_path": self.ks_bundle_path,
            "dvector_bundle_path": self.dvector_bundle_path,
            "enrollment_path": self.enrollment_path,
            "memory_limit_bytes": self.memory_limit_bytes,
            "refractory_hops": self.refractory_hops,
            "port": self.port,
        }


_STREAM_KEYS = (
    "sample_rate_hz",
    "window_seconds",
    "hop_seconds",
    "frame_seconds",
    "frame_stride_seconds",
    "num_mel_bins",
)


def config_from_dict(obj: dict) -> PipelineConfig:
    stream_kwargs = {k: obj[k] for k in _STREAM_KEYS if k in obj}
    other = {k: v for k, v in obj.items() if k not in _STREAM_KEYS}
    unknown = set(other) - {
        "enrollment_capacity", "threshold", "ks_bundle_path", "dvector_bundle_path",
        "enrollment_path", "memory_limit_bytes", "refractory_hops", "port",
    }
    if unknown:
        raise ValueError(f"unknown config fields {sorted(unknown)}")
    return PipelineConfig(stream=StreamConfig(**stream_kwargs), **other)


def load_config(path) -> PipelineConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


def save_config(config: PipelineConfig, path):
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n")
