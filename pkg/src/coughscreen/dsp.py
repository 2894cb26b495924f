"""Waveform ingestion and short-time spectral analysis.

Turns a cough recording into overlapping Hamming-windowed frames and
one-sided FFT magnitude spectra. The fixed operating point is 16 kHz
audio, 32 ms windows with a 16 ms hop, and a 2048-point FFT; a 0.5 s
recording analyzed with centered framing yields 32 frames.

All functions here are pure: they never mutate their inputs and are safe
to call concurrently across recordings.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import resample_poly

TARGET_SAMPLE_RATE_HZ = 16000
WINDOW_MS = 32.0
HOP_MS = 16.0
N_FFT = 2048
MIN_DURATION_S = 0.5


@dataclass(frozen=True)
class Waveform:
    """Mono audio signal with amplitudes nominally in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("waveform must be a nonempty 1-D signal")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass
class FrameMatrix:
    """L x W frame stack; ``windowed`` records whether the taper was applied."""

    frames: np.ndarray
    hop_samples: int
    windowed: bool
    sample_rate_hz: int

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def window_samples(self) -> int:
        return self.frames.shape[1]


@dataclass
class MagnitudeSpectra:
    """One-sided FFT magnitudes, one row per frame."""

    X: np.ndarray
    bin_freqs: np.ndarray
    n_fft: int

    @property
    def n_frames(self) -> int:
        return self.X.shape[0]

    @property
    def sample_rate_hz(self) -> int:
        return int(round(2 * self.bin_freqs[-1]))


def read_wav(path) -> Waveform:
    """Read a mono 16-bit PCM RIFF WAV file.

    Samples are mapped to [-1, 1) by division by 32768. Multi-channel or
    non-16-bit input is rejected.
    """
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono audio, got {fh.getnchannels()} channels")
        if fh.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM, got {8 * fh.getsampwidth()}-bit")
        rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples, rate)


def write_wav(path, w: Waveform) -> None:
    """Write a waveform as mono 16-bit PCM, clipping to the representable range."""
    pcm = np.clip(np.rint(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate_hz)
        fh.writeframes(pcm.tobytes())


def resample(w: Waveform, target_hz: int) -> Waveform:
    """Band-limited polyphase resampling (anti-aliasing before decimation).

    Pass-through is bit-exact when ``target_hz`` equals the source rate.
    Upsampling is rejected: the pipeline only ever moves down to 16 kHz.
    """
    if target_hz <= 0:
        raise ValueError("target rate must be positive")
    if target_hz > w.sample_rate_hz:
        raise ValueError(f"upsampling {w.sample_rate_hz} -> {target_hz} Hz is not supported")
    if target_hz == w.sample_rate_hz:
        return w
    g = np.gcd(target_hz, w.sample_rate_hz)
    out = resample_poly(w.samples, target_hz // g, w.sample_rate_hz // g)
    return Waveform(out, target_hz)


def pad_to_duration(w: Waveform, seconds: float = MIN_DURATION_S) -> Waveform:
    """Zero-pad the tail so the signal lasts at least ``seconds``."""
    need = int(round(seconds * w.sample_rate_hz))
    if w.samples.size >= need:
        return w
    out = np.zeros(need, dtype=np.float64)
    out[: w.samples.size] = w.samples
    return Waveform(out, w.sample_rate_hz)


def frame(w: Waveform, win_ms: float = WINDOW_MS, hop_ms: float = HOP_MS,
          centered: bool = True) -> FrameMatrix:
    """Slice a waveform into overlapping frames.

    With ``centered=True`` the signal is symmetrically zero-padded by half
    a window so frame n is centered on sample n*hop, giving
    L = 1 + floor(len/hop) frames. With ``centered=False`` only full
    windows are taken: L = 1 + floor((len - W)/hop).
    """
    win = int(round(w.sample_rate_hz * win_ms / 1000.0))
    hop = int(round(w.sample_rate_hz * hop_ms / 1000.0))
    if not (win > hop > 0):
        raise ValueError(f"need window > hop > 0, got window={win}, hop={hop} samples")
    x = w.samples
    if centered:
        x = np.pad(x, win // 2)
    elif x.size < win:
        raise ValueError(f"signal of {x.size} samples is shorter than the {win}-sample window")
    frames = sliding_window_view(x, win)[::hop].copy()
    return FrameMatrix(frames, hop, windowed=False, sample_rate_hz=w.sample_rate_hz)


def hamming_taper(n: int) -> np.ndarray:
    """Symmetric Hamming window 0.54 - 0.46 cos(2*pi*i/(n-1))."""
    if n == 1:
        return np.ones(1)
    i = np.arange(n)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * i / (n - 1))


def window_hamming(fm: FrameMatrix) -> FrameMatrix:
    """Apply the Hamming taper to every frame. Double-windowing is an error."""
    if fm.windowed:
        raise ValueError("frames are already windowed")
    taper = hamming_taper(fm.window_samples)
    return FrameMatrix(fm.frames * taper, fm.hop_samples, windowed=True,
                       sample_rate_hz=fm.sample_rate_hz)


def magnitude_spectrum(fm: FrameMatrix, n_fft: int = N_FFT) -> MagnitudeSpectra:
    """One-sided FFT magnitude per frame (frames zero-padded to ``n_fft``)."""
    if fm.window_samples > n_fft:
        raise ValueError(f"window of {fm.window_samples} samples exceeds n_fft={n_fft}")
    X = np.abs(np.fft.rfft(fm.frames, n=n_fft, axis=1))
    bin_freqs = np.arange(n_fft // 2 + 1) * (fm.sample_rate_hz / n_fft)
    return MagnitudeSpectra(X, bin_freqs, n_fft)
