"""Adaptive speaker verification: d-vector extraction, few-shot one-class
enrollment, and best-match cosine scoring against a threshold.

The on-device learned state is one ``EnrollmentSet``: up to ``capacity``
voice-embedding vectors collected from the enrolled speaker plus the accept
threshold. Verification scores a probe by its best cosine similarity to any
enrolled vector; the mean-cosine variant (probe vs. the element-wise mean of
the set) is kept for evaluation baselines.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import Spectrogram
from .ks import check_fingerprint
from .nn import WeightBundle, run_network

DEFAULT_THRESHOLD = 0.8

ENROLLMENT_MAGIC = b"VGES"
ENROLLMENT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIf")  # magic, version, dim, capacity, count, threshold


class EnrollmentFullError(RuntimeError):
    """The enrollment set already holds its configured number of vectors."""


class UndefinedSimilarityError(ValueError):
    """Cosine similarity is undefined for a zero-norm vector."""


class EnrollmentFormatError(ValueError):
    """A persisted enrollment file cannot be parsed."""


def extract_dvector(bundle: WeightBundle, spectrogram: Spectrogram) -> np.ndarray:
    """Run the embedding network on one spectrogram; returns a flat float32 vector."""
    check_fingerprint(bundle, spectrogram)
    return run_network(bundle, spectrogram.coefficients.astype(np.float32)[:, :, np.newaxis])


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise UndefinedSimilarityError("cosine similarity of a zero-norm vector is undefined")
    return float(np.dot(a, b) / (na * nb))


@dataclass
class EnrollmentSet:
    """Ordered enrollment vectors plus the accept threshold."""

    capacity: int
    threshold: float = DEFAULT_THRESHOLD
    vectors: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be at least 1")
        self._check_threshold(self.threshold)
        if len(self.vectors) > self.capacity:
            raise ValueError("more vectors than capacity")
        dims = {len(v) for v in self.vectors}
        if len(dims) > 1:
            raise ValueError(f"enrollment vectors have mixed dimensions {sorted(dims)}")

    @staticmethod
    def _check_threshold(value: float):
        if not -1.0 <= value <= 1.0:
            raise ValueError(f"threshold must lie in [-1, 1], got {value}")

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def is_full(self) -> bool:
        return len(self.vectors) >= self.capacity

    @property
    def dim(self) -> int | None:
        return len(self.vectors[0]) if self.vectors else None

    def set_threshold(self, value: float):
        self._check_threshold(value)
        self.threshold = float(value)

    def clear(self):
        self.vectors.clear()

    def copy(self) -> "EnrollmentSet":
        return EnrollmentSet(
            capacity=self.capacity,
            threshold=self.threshold,
            vectors=[v.copy() for v in self.vectors],
        )


def enroll(enrollment: EnrollmentSet, dvector: np.ndarray) -> tuple[int, int]:
    """Append one vector unchanged; returns (filled, capacity).

    Raises once the set is full — the caller is expected to switch to
    verification at that point.
    """
    if enrollment.is_full:
        raise EnrollmentFullError(
            f"enrollment already holds {enrollment.capacity} vectors; reset to re-enroll"
        )
    dv = np.asarray(dvector, dtype=np.float32).copy()
    if enrollment.vectors and len(dv) != enrollment.dim:
        raise ValueError(
            f"vector dimension {len(dv)} does not match enrolled dimension {enrollment.dim}"
        )
    enrollment.vectors.append(dv)
    return len(enrollment.vectors), enrollment.capacity


def best_match_similarity(dvector: np.ndarray, enrollment: EnrollmentSet) -> tuple[float, int]:
    """Maximum cosine similarity over the enrolled vectors and its arg-max index
    (lowest index on exact ties)."""
    if not enrollment.vectors:
        raise ValueError("enrollment set is empty")
    best_sigma = -2.0
    best_index = 0
    for index, enrolled in enumerate(enrollment.vectors):
        sigma = cosine_similarity(dvector, enrolled)
        if sigma > best_sigma:
            best_sigma = sigma
            best_index = index
    return best_sigma, best_index


@dataclass(frozen=True)
class SvDecision:
    z: int  # 1 iff sigma strictly exceeds the threshold
    sigma: float
    best_index: int


def sv_decide(dvector: np.ndarray, enrollment: EnrollmentSet) -> SvDecision:
    """Accept the probe only when its best-match similarity strictly exceeds the
    threshold; sigma == threshold rejects."""
    sigma, best_index = best_match_similarity(dvector, enrollment)
    return SvDecision(z=int(sigma > enrollment.threshold), sigma=sigma, best_index=best_index)


def mcs_similarity(dvector: np.ndarray, enrollment: EnrollmentSet) -> float:
    """Cosine of the probe against the element-wise mean of the enrolled vectors.

    Evaluation baseline only; with a single enrolled vector it equals the
    best-match similarity exactly.
    """
    if not enrollment.vectors:
        raise ValueError("enrollment set is empty")
    mean = np.mean(np.stack(enrollment.vectors), axis=0)
    return cosine_similarity(dvector, mean)


# ---------------------------------------------------------------------------
# Persistence: header (dim, capacity, count, threshold) + raw LE float32 body
# ---------------------------------------------------------------------------

def save_enrollment(enrollment: EnrollmentSet, path):
    dim = enrollment.dim or 0
    header = _HEADER.pack(
        ENROLLMENT_MAGIC,
        ENROLLMENT_VERSION,
        dim,
        enrollment.capacity,
        len(enrollment.vectors),
        enrollment.threshold,
    )
    with Path(path).open("wb") as fh:
        fh.write(header)
        for vec in enrollment.vectors:
            fh.write(np.ascontiguousarray(vec, dtype="<f4").tobytes())


def load_enrollment(path) -> EnrollmentSet:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise EnrollmentFormatError(f"{path}: truncated header")
    magic, version, dim, capacity, count, threshold = _HEADER.unpack_from(data)
    if magic != ENROLLMENT_MAGIC:
        raise EnrollmentFormatError(f"{path}: not an enrollment file (bad magic)")
    if version != ENROLLMENT_VERSION:
        raise EnrollmentFormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * dim * count
    if len(data) != expected:
        raise EnrollmentFormatError(
            f"{path}: body holds {len(data) - _HEADER.size} bytes, expected {4 * dim * count}"
        )
    vectors = [
        np.frombuffer(data, dtype="<f4", count=dim, offset=_HEADER.size + 4 * dim * k).copy()
        for k in range(count)
    ]
    return EnrollmentSet(capacity=capacity, threshold=threshold, vectors=vectors)
