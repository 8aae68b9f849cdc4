"""Spectral front end: WAV ingestion, magnitude spectrograms, length
fixing, and SNR-controlled noise mixing.

All operations are pure given their arguments and seeds; nothing here
keeps mutable state, so concurrent use on distinct inputs is safe.
The pipeline works on compressed magnitude spectra only; phase is never
retained.
"""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass

import numpy as np

from .errors import (
    AudioFormatError,
    ChannelCountError,
    DataError,
    SampleRateMismatchError,
    ShortSignalError,
    SilentSignalError,
)

DEFAULT_SAMPLE_RATE = 16000

TRAIN_RANDOM_CROP = "train-random-crop"
EVAL_CENTER_CROP = "eval-center-crop"

_WINDOW_FUNCTIONS = {
    "hamming": np.hamming,
    "hann": np.hanning,
    "rectangular": np.ones,
}


@dataclass(frozen=True)
class Waveform:
    """Mono PCM sample sequence with its sample rate.

    Samples are dimensionless amplitudes, nominally in [-1, 1].
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("waveform samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class FrameSpec:
    """Framing and compression parameters for the spectral front end.

    Defaults: 25 ms windows with a 10 ms hop at 16 kHz, a 512-point FFT
    (257 bins), magnitude compressed by exponent 0.3, and 298 output
    frames. No mean/variance normalization is applied anywhere.
    """

    sample_rate: int = DEFAULT_SAMPLE_RATE
    window_ms: float = 25.0
    hop_ms: float = 10.0
    fft_size: int = 512
    compression_exponent: float = 0.3
    target_frames: int = 298
    window: str = "hamming"

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")
        if not 0 < self.hop_ms <= self.window_ms:
            raise ValueError("hop must satisfy 0 < hop_ms <= window_ms")
        if not 0 < self.compression_exponent <= 1:
            raise ValueError("compression exponent must be in (0, 1]")
        if self.target_frames < 1:
            raise ValueError("target_frames must be >= 1")
        if self.window not in _WINDOW_FUNCTIONS:
            raise ValueError(f"unknown window function {self.window!r}")
        if self.window_length > self.fft_size:
            raise ValueError("window longer than the FFT size")

    @property
    def window_length(self) -> int:
        return int(round(self.sample_rate * self.window_ms / 1000.0))

    @property
    def hop_length(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000.0))

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1


@dataclass(frozen=True)
class Spectrogram:
    """Nonnegative real matrix of shape (n_bins, n_frames)."""

    values: np.ndarray
    spec: FrameSpec

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ValueError("spectrogram must be a 2-D matrix")
        if values.shape[0] != self.spec.n_bins:
            raise ValueError(
                f"bin count {values.shape[0]} does not match spec "
                f"({self.spec.n_bins})"
            )
        if values.size and values.min() < 0:
            raise DataError("spectrogram contains negative entries")
        object.__setattr__(self, "values", values)

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


def load_wav(path, expected_rate: int = DEFAULT_SAMPLE_RATE) -> Waveform:
    """Read a mono 16-bit PCM WAV file into a [-1, 1]-scaled waveform.

    Raises FileNotFoundError for a missing file, AudioFormatError for
    non-WAV or compressed payloads, ChannelCountError for multi-channel
    audio, and SampleRateMismatchError when the header rate differs from
    ``expected_rate``.
    """
    try:
        reader = wave.open(str(path), "rb")
    except FileNotFoundError:
        raise
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: not an uncompressed PCM WAV file ({exc})")
    with reader:
        if reader.getnchannels() != 1:
            raise ChannelCountError(
                f"{path}: expected mono, got {reader.getnchannels()} channels"
            )
        if reader.getsampwidth() != 2:
            raise AudioFormatError(
                f"{path}: expected 16-bit PCM, got {8 * reader.getsampwidth()}-bit"
            )
        if reader.getframerate() != expected_rate:
            raise SampleRateMismatchError(
                f"{path}: sample-rate mismatch "
                f"({reader.getframerate()} Hz, pipeline expects {expected_rate} Hz)"
            )
        n = reader.getnframes()
        if n == 0:
            raise AudioFormatError(f"{path}: empty audio payload")
        raw = reader.readframes(n)
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples, expected_rate)


def save_wav(path, waveform: Waveform) -> None:
    """Write a waveform as mono 16-bit PCM WAV, clipping to [-1, 1]."""
    clipped = np.clip(waveform.samples, -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as writer:
        writer.setnchannels(1)
        writer.setsampwidth(2)
        writer.setframerate(waveform.sample_rate)
        writer.writeframes(pcm.tobytes())


def frame_count(n_samples: int, spec: FrameSpec) -> int:
    """Number of full analysis windows: floor((len - win) / hop) + 1."""
    win = spec.window_length
    if n_samples < win:
        return 0
    return (n_samples - win) // spec.hop_length + 1


def stft_magnitude(waveform: Waveform, spec: FrameSpec) -> Spectrogram:
    """Magnitude (not power) spectrogram of a waveform.

    Frames are windowed, zero-padded at the tail to ``fft_size``, and
    transformed with a real FFT. Output shape: (n_bins, n_frames).
    """
    if waveform.sample_rate != spec.sample_rate:
        raise SampleRateMismatchError(
            f"waveform rate {waveform.sample_rate} Hz differs from "
            f"spec rate {spec.sample_rate} Hz"
        )
    samples = waveform.samples
    win = spec.window_length
    hop = spec.hop_length
    if samples.size < win:
        raise ShortSignalError(
            f"waveform of {samples.size} samples is shorter than one "
            f"{win}-sample analysis window"
        )
    n_frames = frame_count(samples.size, spec)
    frames = np.lib.stride_tricks.sliding_window_view(samples, win)[::hop][:n_frames]
    window = _WINDOW_FUNCTIONS[spec.window](win)
    magnitudes = np.abs(np.fft.rfft(frames * window, n=spec.fft_size, axis=1))
    return Spectrogram(magnitudes.T, spec)


def compress(spectrogram: Spectrogram, exponent: float | None = None) -> Spectrogram:
    """Raise every entry to ``exponent`` (default: the spec's exponent)."""
    if exponent is None:
        exponent = spectrogram.spec.compression_exponent
    values = spectrogram.values
    if values.size and values.min() < 0:
        raise DataError("cannot compress a spectrogram with negative entries")
    return Spectrogram(np.power(values, exponent), spectrogram.spec)


def fix_length(
    spectrogram: Spectrogram,
    target_frames: int | None = None,
    mode: str = EVAL_CENTER_CROP,
    seed: int = 0,
) -> Spectrogram:
    """Force a spectrogram to exactly ``target_frames`` frames.

    Shorter inputs are tiled in order and cut at the target length.
    Longer inputs are cropped: at a seeded random offset in
    ``train-random-crop`` mode, or centered in ``eval-center-crop`` mode.
    Inputs already at the target length are returned unchanged.
    """
    if target_frames is None:
        target_frames = spectrogram.spec.target_frames
    if mode not in (TRAIN_RANDOM_CROP, EVAL_CENTER_CROP):
        raise ValueError(f"unknown fix_length mode {mode!r}")
    n = spectrogram.n_frames
    if n == 0:
        raise DataError("cannot fix the length of an empty spectrogram")
    if n == target_frames:
        return spectrogram
    values = spectrogram.values
    if n < target_frames:
        reps = -(-target_frames // n)
        values = np.tile(values, (1, reps))[:, :target_frames]
    else:
        if mode == TRAIN_RANDOM_CROP:
            start = int(np.random.default_rng(seed).integers(0, n - target_frames + 1))
        else:
            start = (n - target_frames) // 2
        values = values[:, start : start + target_frames]
    return Spectrogram(values, spectrogram.spec)


def mix_at_snr(
    clean: Waveform,
    noise: Waveform,
    snr_db: float,
    offset_seed: int = 0,
) -> Waveform:
    """Add a scaled noise segment to ``clean`` at the requested SNR.

    The segment starts at a seeded random offset into ``noise`` and wraps
    around when the noise is shorter than the clean signal. The noise is
    scaled so that 10*log10(P_clean / P_scaled_noise) equals ``snr_db``
    exactly, with P the mean squared amplitude. ``snr_db = +inf`` is the
    no-noise sentinel and returns the clean waveform unchanged.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return Waveform(clean.samples.copy(), clean.sample_rate)
    if clean.sample_rate != noise.sample_rate:
        raise SampleRateMismatchError(
            f"clean ({clean.sample_rate} Hz) and noise ({noise.sample_rate} Hz) "
            "sample rates differ"
        )
    p_clean = float(np.mean(clean.samples**2))
    if p_clean == 0.0:
        raise SilentSignalError("clean waveform is silent; SNR undefined")
    n = clean.samples.size
    noise_len = noise.samples.size
    start = int(np.random.default_rng(offset_seed).integers(0, noise_len))
    idx = np.arange(start, start + n) % noise_len
    segment = noise.samples[idx]
    p_segment = float(np.mean(segment**2))
    if p_segment == 0.0:
        raise SilentSignalError("noise segment is silent; SNR undefined")
    alpha = math.sqrt(p_clean / (p_segment * 10.0 ** (snr_db / 10.0)))
    return Waveform(clean.samples + alpha * segment, clean.sample_rate)
