"""Audio frontend: WAV ingestion, log-STFT band features, stacking,
global mean/variance normalization, and time/frequency masking.

All functions here are pure numpy (no autodiff); features only become
`Tensor`s at the model boundary.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

LOG_FLOOR = 1e-10
NORM_EPS = 1e-8
FFT_SIZE = 512


@dataclass
class FeatureConfig:
    sample_rate_hz: int = 16000
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_bands: int = 64
    stack: int = 3
    skip: int = 3

    def __post_init__(self):
        if not self.window_ms > self.hop_ms > 0:
            raise ConfigError(
                f"window ({self.window_ms} ms) must exceed hop ({self.hop_ms} ms)"
            )
        if self.n_bands < 1 or self.n_bands > FFT_SIZE // 2 + 1:
            raise ConfigError(f"n_bands {self.n_bands} out of range")

    @property
    def window_samples(self) -> int:
        return int(round(self.sample_rate_hz * self.window_ms / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(self.sample_rate_hz * self.hop_ms / 1000.0))

    @property
    def input_dim(self) -> int:
        return self.n_bands * self.stack


@dataclass
class FeatureSequence:
    """Stacked, model-ready frames [T, stack * n_bands] plus the raw count."""

    frames: np.ndarray
    raw_frame_count: int


@dataclass
class SpecAugConfig:
    max_time_mask_ratio: float = 0.04
    adaptive_multiplicity: float = 0.04
    max_freq_mask_ratio: float = 0.34
    n_freq_masks: int = 2

    def __post_init__(self):
        for name in ("max_time_mask_ratio", "adaptive_multiplicity", "max_freq_mask_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.n_freq_masks < 0:
            raise ConfigError("n_freq_masks must be >= 0")


# ---------------------------------------------------------------------------
# WAV I/O (16 kHz mono 16-bit PCM only; resampling is out of scope)


def read_wav(path, expected_rate: int = 16000) -> np.ndarray:
    with wave.open(str(path), "rb") as f:
        if f.getnchannels() != 1:
            raise DataError(f"{path}: expected mono audio, got {f.getnchannels()} channels")
        if f.getsampwidth() != 2:
            raise DataError(f"{path}: expected 16-bit samples, got {8 * f.getsampwidth()}-bit")
        if f.getframerate() != expected_rate:
            raise DataError(
                f"{path}: sample rate {f.getframerate()} != expected {expected_rate}"
            )
        payload = f.readframes(f.getnframes())
    return np.frombuffer(payload, dtype="<i2").astype(np.int64)


def write_wav(path, samples: np.ndarray, rate: int = 16000) -> None:
    clipped = np.clip(np.asarray(samples), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(rate)
        f.writeframes(clipped.tobytes())


# ---------------------------------------------------------------------------
# framing and band energies


def _band_edges(n_bands: int) -> np.ndarray:
    n_bins = FFT_SIZE // 2 + 1
    edges = np.floor(np.linspace(0, n_bins, n_bands + 1)).astype(int)
    if np.any(np.diff(edges) < 1):
        raise ConfigError(f"{n_bands} bands cannot partition {n_bins} spectrum bins")
    return edges


def extract_features(pcm: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """Per-frame Hamming-windowed magnitude spectra pooled into log band energies.

    Frame t covers samples [t*hop, t*hop + window), so the output is causal at
    frame granularity.  Returns [T_raw, n_bands].
    """
    pcm = np.asarray(pcm, dtype=np.float64)
    win, hop = cfg.window_samples, cfg.hop_samples
    if pcm.size < win:
        raise DataError(f"audio too short: {pcm.size} samples < one window of {win}")
    n_frames = (pcm.size - win) // hop + 1
    window = np.hamming(win)
    starts = np.arange(n_frames) * hop
    frames = pcm[starts[:, None] + np.arange(win)[None, :]] * window
    mags = np.abs(np.fft.rfft(frames, n=FFT_SIZE, axis=1))
    edges = _band_edges(cfg.n_bands)
    bands = np.stack(
        [mags[:, a:b].mean(axis=1) for a, b in zip(edges[:-1], edges[1:])], axis=1
    )
    return np.log(bands + LOG_FLOOR)


def stack_frames(raw: np.ndarray, stack: int, skip: int) -> np.ndarray:
    """Concatenate `stack` consecutive raw frames every `skip` frames.

    Output frame j holds raw frames skip*j .. skip*j+stack-1; indices past the
    end repeat the final raw frame so every raw frame stays represented.
    """
    raw = np.asarray(raw)
    t_raw = raw.shape[0]
    if t_raw < 1:
        raise DataError("cannot stack an empty feature sequence")
    t_out = (t_raw - 1) // skip + 1
    idx = np.minimum(skip * np.arange(t_out)[:, None] + np.arange(stack)[None, :], t_raw - 1)
    return raw[idx].reshape(t_out, stack * raw.shape[1])


def featurize(pcm: np.ndarray, cfg: FeatureConfig) -> FeatureSequence:
    raw = extract_features(pcm, cfg)
    return FeatureSequence(stack_frames(raw, cfg.stack, cfg.skip), raw.shape[0])


# ---------------------------------------------------------------------------
# global mean/variance normalization


class NormStats:
    """Streaming per-dimension mean/variance over the training split."""

    def __init__(self, dim: int):
        self.dim = dim
        self._sum = np.zeros(dim)
        self._sumsq = np.zeros(dim)
        self.count = 0

    def add(self, frames: np.ndarray) -> None:
        if frames.shape[1] != self.dim:
            raise ConfigError(f"stats dim {self.dim} != frames dim {frames.shape[1]}")
        self._sum += frames.sum(axis=0)
        self._sumsq += (frames * frames).sum(axis=0)
        self.count += frames.shape[0]

    @property
    def mean(self) -> np.ndarray:
        if self.count == 0:
            raise ConfigError("normalization stats are empty")
        return self._sum / self.count

    @property
    def variance(self) -> np.ndarray:
        mu = self.mean
        return np.maximum(self._sumsq / self.count - mu * mu, 0.0)

    def save(self, path) -> None:
        mu, var = self.mean, self.variance
        with open(path, "wb") as f:
            f.write(struct.pack("<I", self.dim))
            f.write(mu.astype("<f8").tobytes())
            f.write(var.astype("<f8").tobytes())
            f.write(struct.pack("<Q", self.count))

    @classmethod
    def load(cls, path) -> "NormStats":
        with open(path, "rb") as f:
            (dim,) = struct.unpack("<I", f.read(4))
            mean = np.frombuffer(f.read(8 * dim), dtype="<f8").copy()
            var = np.frombuffer(f.read(8 * dim), dtype="<f8").copy()
            (count,) = struct.unpack("<Q", f.read(8))
        stats = cls(dim)
        stats._sum = mean * count
        stats._sumsq = (var + mean * mean) * count
        stats.count = count
        return stats


def accumulate_stats(corpus, dim: int) -> NormStats:
    """Fold an iterable of [T, dim] frame arrays into NormStats, in order."""
    stats = NormStats(dim)
    for frames in corpus:
        stats.add(frames)
    return stats


def normalize(seq: FeatureSequence, stats: NormStats) -> FeatureSequence:
    z = (seq.frames - stats.mean) / np.sqrt(stats.variance + NORM_EPS)
    return FeatureSequence(z, seq.raw_frame_count)


# ---------------------------------------------------------------------------
# SpecAugment-style masking (training only)


def spec_augment(
    seq: FeatureSequence, cfg: SpecAugConfig, rng: np.random.Generator
) -> FeatureSequence:
    """Zero out random time spans and feature bands.

    The number of time masks adapts to the utterance length
    (floor(adaptive_multiplicity * T)); each mask width is uniform on
    [0, floor(max_time_mask_ratio * T)].  Frequency masks work the same way
    over the feature dimension.  Shape is always preserved.
    """
    frames = seq.frames.copy()
    t_len, dim = frames.shape

    n_time = int(cfg.adaptive_multiplicity * t_len)
    max_t = int(cfg.max_time_mask_ratio * t_len)
    for _ in range(n_time):
        w = int(rng.integers(0, max_t + 1))
        if w == 0:
            continue
        t0 = int(rng.integers(0, t_len - w + 1))
        frames[t0:t0 + w, :] = 0.0

    max_f = int(cfg.max_freq_mask_ratio * dim)
    for _ in range(cfg.n_freq_masks):
        w = int(rng.integers(0, max_f + 1))
        if w == 0:
            continue
        f0 = int(rng.integers(0, dim - w + 1))
        frames[:, f0:f0 + w] = 0.0

    return FeatureSequence(frames, seq.raw_frame_count)


# ---------------------------------------------------------------------------
# feature cache records: [u32 T][u32 D][f64 x T*D], little-endian


def write_feature_record(path, frames: np.ndarray) -> None:
    t_len, dim = frames.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<II", t_len, dim))
        f.write(np.ascontiguousarray(frames, dtype="<f8").tobytes())


def read_feature_record(path) -> np.ndarray:
    with open(path, "rb") as f:
        t_len, dim = struct.unpack("<II", f.read(8))
        data = np.frombuffer(f.read(8 * t_len * dim), dtype="<f8")
    if data.size != t_len * dim:
        raise DataError(f"{path}: truncated feature record")
    return data.reshape(t_len, dim).copy()
