"""Streaming audio front-end: overlapping PCM windows and MFCC spectrograms.

The front-end has two halves. ``SampleStream`` turns a continuous stream of
16-bit PCM samples into fixed-length, partly overlapping windows (a ring
buffer advanced by a configurable hop). ``extract_mfcc`` turns one window
into a mel-cepstral spectrogram: per-frame Hamming window, zero-padded FFT,
triangular mel filterbank, floored natural log, orthonormal DCT-II keeping
every coefficient.

All fixed processing choices (window function, FFT size, mel range, log
floor, DCT normalization, PCM scaling) are captured in
``StreamConfig.fingerprint()`` so that model weights and the runtime can be
checked against each other.
"""

from __future__ import annotations

import csv
import wave
from dataclasses import dataclass
from functools import lru_cache
from math import floor
from pathlib import Path

import numpy as np
import scipy.fft

PCM_SCALE = 32768.0  # 16-bit full scale; samples are divided by this before analysis
LOG_FLOOR = 1e-6  # mel energies are clamped here before the log
MEL_LOW_HZ = 20.0
MEL_HIGH_HZ = 8000.0
WINDOW_FN = "hamming"


class ConfigError(ValueError):
    """A stream configuration violates its invariants."""


class BufferOverrunError(RuntimeError):
    """A pushed chunk did not fit into the ring buffer."""

    def __init__(self, dropped: int):
        super().__init__(
            f"chunk exceeds ring buffer free space; {dropped} samples would be dropped"
        )
        self.dropped = dropped


class WavFormatError(ValueError):
    """A WAV file does not match the required PCM format."""


def _seconds_to_samples(rate: int, seconds: float, name: str) -> int:
    exact = rate * seconds
    n = round(exact)
    if n <= 0 or abs(exact - n) > 1e-6:
        raise ConfigError(
            f"{name}={seconds} does not map to a positive whole number of samples "
            f"at {rate} Hz (got {exact})"
        )
    return n


@dataclass(frozen=True)
class StreamConfig:
    """Timing parameters of the streaming front-end.

    All duration fields must correspond to whole sample counts at
    ``sample_rate_hz``.
    """

    sample_rate_hz: int = 16000
    window_seconds: float = 1.0
    hop_seconds: float = 0.25
    frame_seconds: float = 0.030
    frame_stride_seconds: float = 0.020
    num_mel_bins: int = 40

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ConfigError("sample_rate_hz must be positive")
        if not 0 < self.frame_seconds <= self.window_seconds:
            raise ConfigError("frame_seconds must lie in (0, window_seconds]")
        if not 0 < self.frame_stride_seconds <= self.frame_seconds:
            raise ConfigError("frame_stride_seconds must lie in (0, frame_seconds]")
        if not 0 < self.hop_seconds <= self.window_seconds:
            raise ConfigError("hop_seconds must lie in (0, window_seconds]")
        if self.num_mel_bins <= 0:
            raise ConfigError("num_mel_bins must be positive")
        # Forces the integer-sample invariant for every duration field.
        self.window_samples, self.hop_samples, self.frame_samples, self.stride_samples

    @property
    def window_samples(self) -> int:
        return _seconds_to_samples(self.sample_rate_hz, self.window_seconds, "window_seconds")

    @property
    def hop_samples(self) -> int:
        return _seconds_to_samples(self.sample_rate_hz, self.hop_seconds, "hop_seconds")

    @property
    def frame_samples(self) -> int:
        return _seconds_to_samples(self.sample_rate_hz, self.frame_seconds, "frame_seconds")

    @property
    def stride_samples(self) -> int:
        return _seconds_to_samples(
            self.sample_rate_hz, self.frame_stride_seconds, "frame_stride_seconds"
        )

    @property
    def fft_size(self) -> int:
        n = 1
        while n < self.frame_samples:
            n *= 2
        return n

    @property
    def frame_count(self) -> int:
        """Number of analysis frames per window (exact, in sample units)."""
        return 1 + (self.window_samples - self.frame_samples) // self.stride_samples

    def fingerprint(self) -> dict:
        """Everything that determines the spectrogram content, for model/runtime
        compatibility checks. The hop is excluded: it spaces windows out but does
        not change what a window looks like."""
        return {
            "sample_rate_hz": self.sample_rate_hz,
            "window_seconds": self.window_seconds,
            "frame_seconds": self.frame_seconds,
            "frame_stride_seconds": self.frame_stride_seconds,
            "num_mel_bins": self.num_mel_bins,
            "window_fn": WINDOW_FN,
            "fft_size": self.fft_size,
            "mel_low_hz": MEL_LOW_HZ,
            "mel_high_hz": MEL_HIGH_HZ,
            "mel_scale": "2595*log10(1+f/700)",
            "mel_filter_norm": "none",
            "log": f"natural, floor {LOG_FLOOR:g}",
            "dct": "ortho-II, all coefficients",
            "pcm_scale": PCM_SCALE,
        }


def frame_count(window_seconds: float, frame_seconds: float, stride_seconds: float) -> int:
    """Frames obtainable from one window: 1 + floor((W - frame) / stride).

    The epsilon guards against decimal durations that are not exact binary
    floats; valid configurations are whole sample counts, so true ratios are
    rationals with gaps far above 1e-9.
    """
    if frame_seconds > window_seconds:
        raise ConfigError("frame_seconds exceeds window_seconds")
    if stride_seconds <= 0 or frame_seconds <= 0:
        raise ConfigError("durations must be positive")
    return 1 + floor((window_seconds - frame_seconds) / stride_seconds + 1e-9)


@dataclass(frozen=True)
class AudioWindow:
    """One window of 16-bit PCM samples with its position in the stream."""

    samples: np.ndarray  # int16, length window_samples
    start_time: float  # seconds from stream origin

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.int16)
        object.__setattr__(self, "samples", arr)


def window_from_samples(samples, cfg: StreamConfig, start_time: float = 0.0) -> AudioWindow:
    """Wrap a whole clip as a single window, validating its length."""
    arr = np.asarray(samples, dtype=np.int16)
    if arr.ndim != 1 or len(arr) != cfg.window_samples:
        raise ConfigError(
            f"clip has {arr.shape} samples, expected exactly {cfg.window_samples}"
        )
    return AudioWindow(samples=arr, start_time=start_time)


class SampleStream:
    """Single-producer/single-consumer ring buffer emitting overlapping windows.

    ``push`` appends PCM samples and returns every window that completed. A
    window is emitted as soon as its last sample arrives; consecutive windows
    start exactly ``hop_samples`` apart. A chunk larger than the free space
    would force samples to be dropped, which is reported as an overrun instead
    of silently losing audio.
    """

    def __init__(self, cfg: StreamConfig, capacity_samples: int | None = None):
        self.cfg = cfg
        if capacity_samples is None:
            capacity_samples = 2 * cfg.window_samples
        if capacity_samples < cfg.window_samples:
            raise ConfigError("ring capacity must hold at least one window")
        self._capacity = capacity_samples
        self._buf = np.zeros(capacity_samples, dtype=np.int16)
        self._total = 0  # absolute count of samples ever written
        self._next_start = 0  # absolute index of the next window's first sample

    @property
    def capacity(self) -> int:
        return self._capacity

    @property
    def pending(self) -> int:
        """Samples buffered but not yet part of an emitted window's advance."""
        return self._total - self._next_start

    def push(self, samples) -> list[AudioWindow]:
        arr = np.asarray(samples, dtype=np.int16).ravel()
        if len(arr) == 0:
            return []
        free = self._capacity - self.pending
        if len(arr) > free:
            raise BufferOverrunError(dropped=len(arr) - free)

        pos = self._total % self._capacity
        first = min(len(arr), self._capacity - pos)
        self._buf[pos : pos + first] = arr[:first]
        if first < len(arr):
            self._buf[: len(arr) - first] = arr[first:]
        self._total += len(arr)

        win = self.cfg.window_samples
        hop = self.cfg.hop_samples
        out: list[AudioWindow] = []
        while self._total - self._next_start >= win:
            start = self._next_start % self._capacity
            end = start + win
            if end <= self._capacity:
                chunk = self._buf[start:end].copy()
            else:
                chunk = np.concatenate((self._buf[start:], self._buf[: end - self._capacity]))
            out.append(
                AudioWindow(
                    samples=chunk,
                    start_time=self._next_start / self.cfg.sample_rate_hz,
                )
            )
            self._next_start += hop
        return out

    def reset(self):
        self._total = 0
        self._next_start = 0
        self._buf[:] = 0


@dataclass(frozen=True)
class Spectrogram:
    """Mel-cepstral coefficient matrix: one row per coefficient, one column per frame."""

    coefficients: np.ndarray  # float32, (num_mel_bins, frame_count)
    fingerprint: dict

    def __post_init__(self):
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("spectrogram contains non-finite coefficients")

    @property
    def num_bins(self) -> int:
        return self.coefficients.shape[0]

    @property
    def num_frames(self) -> int:
        return self.coefficients.shape[1]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_filterbank(cfg: StreamConfig) -> np.ndarray:
    """Triangular mel filters evaluated at FFT bin frequencies.

    Returns (num_mel_bins, fft_size // 2 + 1), float32, peak height 1.
    """
    n_bins = cfg.fft_size // 2 + 1
    freqs = np.arange(n_bins) * cfg.sample_rate_hz / cfg.fft_size
    mel_pts = np.linspace(hz_to_mel(MEL_LOW_HZ), hz_to_mel(MEL_HIGH_HZ), cfg.num_mel_bins + 2)
    hz_pts = mel_to_hz(mel_pts)

    fb = np.zeros((cfg.num_mel_bins, n_bins), dtype=np.float64)
    for m in range(cfg.num_mel_bins):
        lo, center, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        rising = (freqs - lo) / (center - lo)
        falling = (hi - freqs) / (hi - center)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb.astype(np.float32)


@lru_cache(maxsize=8)
def _analysis_window(frame_samples: int) -> np.ndarray:
    return np.hamming(frame_samples).astype(np.float32)


def _frames(window: AudioWindow, cfg: StreamConfig) -> np.ndarray:
    """(frame_count, frame_samples) float32 view of the normalized window."""
    if len(window.samples) != cfg.window_samples:
        raise ConfigError(
            f"window has {len(window.samples)} samples, expected {cfg.window_samples}"
        )
    x = window.samples.astype(np.float32) / np.float32(PCM_SCALE)
    j = cfg.frame_count
    stride = cfg.stride_samples
    idx = np.arange(cfg.frame_samples)[None, :] + stride * np.arange(j)[:, None]
    return x[idx]


def mel_energies(window: AudioWindow, cfg: StreamConfig) -> np.ndarray:
    """Linear mel filterbank energies before the log/DCT, (num_mel_bins, frame_count)."""
    frames = _frames(window, cfg) * _analysis_window(cfg.frame_samples)
    spectrum = scipy.fft.rfft(frames, n=cfg.fft_size, axis=1)
    power = (spectrum.real**2 + spectrum.imag**2).astype(np.float32)
    return (power @ mel_filterbank(cfg).T).T


def extract_mfcc(window: AudioWindow, cfg: StreamConfig) -> Spectrogram:
    """MFCC spectrogram of one window; column t depends only on frame t's samples."""
    energies = mel_energies(window, cfg)
    log_e = np.log(np.maximum(energies, np.float32(LOG_FLOOR)))
    coeffs = scipy.fft.dct(log_e, type=2, norm="ortho", axis=0).astype(np.float32)
    return Spectrogram(coefficients=coeffs, fingerprint=cfg.fingerprint())


def read_wav(path, expected_rate_hz: int) -> np.ndarray:
    """Read a mono 16-bit PCM WAV file; any format mismatch is a hard error."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise WavFormatError(f"{path}: expected mono, got {wf.getnchannels()} channels")
        if wf.getsampwidth() != 2:
            raise WavFormatError(f"{path}: expected 16-bit samples, got {8 * wf.getsampwidth()}-bit")
        if wf.getframerate() != expected_rate_hz:
            raise WavFormatError(
                f"{path}: sample rate {wf.getframerate()} Hz does not match required "
                f"{expected_rate_hz} Hz (resampling is not supported)"
            )
        data = wf.readframes(wf.getnframes())
    return np.frombuffer(data, dtype="<i2").astype(np.int16)


def write_wav(path, samples, rate_hz: int):
    arr = np.asarray(samples, dtype=np.int16)
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(rate_hz)
        wf.writeframes(arr.astype("<i2").tobytes())


def write_spectrogram_csv(spec: Spectrogram, path):
    """Dump coefficients for debugging: one row per mel bin, one column per frame."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        for row in spec.coefficients:
            writer.writerow([f"{float(v):.8g}" for v in row])
