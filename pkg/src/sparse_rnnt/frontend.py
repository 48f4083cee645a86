"""Acoustic frontend: WAV I/O, log-mel features, global normalization."""

from __future__ import annotations

import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AudioFormatError, DataError, EmptyInputError, ShapeError

__all__ = [
    "Waveform",
    "FeatureMatrix",
    "FrontendConfig",
    "NormalizationStats",
    "read_wav",
    "write_wav",
    "log_mel_spectrogram",
    "mel_filterbank",
    "hz_to_mel",
    "mel_to_hz",
    "compute_stats",
    "normalize_global",
    "read_feature_file",
    "write_feature_file",
]


@dataclass
class Waveform:
    samples: np.ndarray  # float64 in [-1, 1]
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise AudioFormatError(f"invalid sample rate {self.sample_rate}")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class FeatureMatrix:
    frames: np.ndarray  # (T, F)
    frame_shift: float  # seconds
    frame_length: float  # seconds

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise ShapeError(f"feature frames must be 2-D, got {self.frames.shape}")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass
class FrontendConfig:
    """Log-mel extraction parameters (25 ms window / 10 ms shift defaults)."""

    window: float = 0.025
    hop: float = 0.010
    num_mels: int = 80
    fft_size: int = 512
    preemphasis: float = 0.0  # 0 disables
    fmin: float = 0.0
    fmax: float | None = None  # None -> Nyquist
    log_floor: float = 1e-10


@dataclass
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape:
            raise ShapeError("mean/std length mismatch")
        if np.any(self.std <= 0):
            raise ShapeError("std entries must be positive")


def read_wav(path) -> Waveform:
    """Read a mono PCM16 RIFF/WAVE file, scaling samples by 1/32768."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getsampwidth() != 2:
                raise AudioFormatError(
                    f"{path}: only PCM16 supported, got sample width "
                    f"{wf.getsampwidth()}"
                )
            if wf.getcomptype() != "NONE":
                raise AudioFormatError(f"{path}: compressed WAV not supported")
            n = wf.getnframes()
            if n == 0:
                raise AudioFormatError(f"{path}: zero-length payload")
            raw = wf.readframes(n)
            rate = wf.getframerate()
            channels = wf.getnchannels()
    except FileNotFoundError as exc:
        raise AudioFormatError(f"{path}: no such file") from exc
    except wave.Error as exc:
        raise AudioFormatError(f"{path}: malformed WAV ({exc})") from exc
    except EOFError as exc:
        raise AudioFormatError(f"{path}: truncated WAV") from exc
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    if channels > 1:
        data = data.reshape(-1, channels)[:, 0]
    return Waveform(data / 32768.0, rate)


def write_wav(path, w: Waveform) -> None:
    """Write mono PCM16 (test harness / synthetic-input helper)."""
    samples = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(w.sample_rate)
        wf.writeframes(samples.tobytes())


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    fft_size: int, sample_rate: int, num_mels: int, fmin: float = 0.0,
    fmax: float | None = None,
) -> np.ndarray:
    """Triangular mel filterbank (HTK scale), shape (num_mels, fft_size//2 + 1)."""
    if fmax is None:
        fmax = sample_rate / 2.0
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), num_mels + 2))
    bin_freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    fb = np.zeros((num_mels, bin_freqs.size))
    for m in range(num_mels):
        lo, center, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        up = (bin_freqs - lo) / (center - lo)
        down = (hi - bin_freqs) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def frame_count(num_samples: int, window_samples: int, hop_samples: int) -> int:
    if num_samples < window_samples:
        return 0
    return 1 + (num_samples - window_samples) // hop_samples


def log_mel_spectrogram(w: Waveform, cfg: FrontendConfig | None = None) -> FeatureMatrix:
    """Log mel-filterbank energies: Hann window, power spectrum, natural log."""
    cfg = cfg or FrontendConfig()
    win = int(round(cfg.window * w.sample_rate))
    hop = int(round(cfg.hop * w.sample_rate))
    if hop <= 0 or win < hop:
        raise EmptyInputError(f"invalid window/hop ({cfg.window}/{cfg.hop})")
    if cfg.num_mels < 1:
        raise EmptyInputError(f"num_mels must be >= 1, got {cfg.num_mels}")
    samples = w.samples
    if cfg.preemphasis > 0 and len(samples) > 1:
        samples = np.concatenate(
            [samples[:1], samples[1:] - cfg.preemphasis * samples[:-1]]
        )
    T = frame_count(len(samples), win, hop)
    if T == 0:
        raise EmptyInputError(
            f"utterance of {len(samples)} samples shorter than one "
            f"{win}-sample window"
        )
    fft_size = cfg.fft_size
    if fft_size < win:
        raise EmptyInputError(f"fft_size {fft_size} < window of {win} samples")
    window_fn = np.hanning(win)
    fb = mel_filterbank(fft_size, w.sample_rate, cfg.num_mels, cfg.fmin, cfg.fmax)
    frames = np.empty((T, cfg.num_mels))
    for t in range(T):
        seg = samples[t * hop : t * hop + win] * window_fn
        spectrum = np.abs(np.fft.rfft(seg, n=fft_size)) ** 2
        frames[t] = np.log(np.maximum(fb @ spectrum, cfg.log_floor))
    return FeatureMatrix(frames, cfg.hop, cfg.window)


def compute_stats(f: FeatureMatrix, std_floor: float = 1e-10) -> NormalizationStats:
    """Per-dimension mean/std over all frames; std floored to stay positive."""
    mean = f.frames.mean(axis=0)
    std = f.frames.std(axis=0)
    return NormalizationStats(mean, np.maximum(std, std_floor))


def normalize_global(f: FeatureMatrix, stats: NormalizationStats) -> FeatureMatrix:
    if stats.mean.shape[0] != f.dim:
        raise ShapeError(
            f"stats dim {stats.mean.shape[0]} != feature dim {f.dim}"
        )
    return FeatureMatrix((f.frames - stats.mean) / stats.std, f.frame_shift,
                         f.frame_length)


def write_feature_file(path, f: FeatureMatrix) -> None:
    """Text format: header `T F frame_shift frame_length`, then T rows of F reals."""
    lines = [f"{f.num_frames} {f.dim} {f.frame_shift!r} {f.frame_length!r}"]
    for row in f.frames:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_feature_file(path) -> FeatureMatrix:
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not text:
        raise EmptyInputError(f"{path}: empty feature file")
    head = text[0].split()
    if len(head) != 4:
        raise DataError(f"{path}: bad feature header {text[0]!r}")
    T, F = int(head[0]), int(head[1])
    shift, length = float(head[2]), float(head[3])
    if len(text) - 1 != T:
        raise DataError(f"{path}: expected {T} rows, found {len(text) - 1}")
    frames = np.array([[float(v) for v in line.split()] for line in text[1:]])
    if frames.shape != (T, F):
        raise DataError(f"{path}: row width mismatch, expected {F} columns")
    return FeatureMatrix(frames, shift, length)
