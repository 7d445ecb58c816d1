"""MFCC feature extraction and 16-bit PCM WAV reading.

Each recording becomes a fixed-size coefficients-by-frames image:
frames are Hann-windowed (no pre-emphasis), FFT magnitude spectra are
pooled through a triangular mel filterbank, logged, and reduced with an
orthonormal DCT-II.  Recordings longer than the frame budget are
truncated; shorter ones are padded on the right with zero columns.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import dct

from ..errors import DataError

LOG_FLOOR = 1e-10


@dataclass
class MfccConfig:
    sample_rate: int = 8000
    frame_length: int = 2048
    hop: int = 512
    fft_size: int = 2048
    mel_filters: int = 128
    num_coefficients: int = 20
    target_frames: int = 45
    fmin: float = 0.0
    fmax: float = 4000.0

    def __post_init__(self):
        if self.fft_size < self.frame_length:
            raise DataError(f"fft_size {self.fft_size} must be >= frame_length "
                            f"{self.frame_length}")
        if self.num_coefficients > self.mel_filters:
            raise DataError("num_coefficients cannot exceed mel_filters")
        if min(self.sample_rate, self.frame_length, self.hop,
               self.mel_filters, self.num_coefficients, self.target_frames) < 1:
            raise DataError("MFCC config values must be positive")

    @property
    def output_shape(self):
        return (self.num_coefficients, self.target_frames)


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: MfccConfig) -> np.ndarray:
    """Triangular filters, shape (mel_filters, fft_size // 2 + 1)."""
    n_bins = cfg.fft_size // 2 + 1
    mel_points = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax),
                             cfg.mel_filters + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(n_bins) * cfg.sample_rate / cfg.fft_size
    fbank = np.zeros((cfg.mel_filters, n_bins))
    for m in range(cfg.mel_filters):
        left, center, right = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (bin_freqs - left) / max(center - left, 1e-12)
        falling = (right - bin_freqs) / max(right - center, 1e-12)
        fbank[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fbank


def frame_signal(signal, frame_length, hop):
    """Split into overlapping frames; the last frame is zero-padded."""
    n = signal.shape[0]
    if n <= frame_length:
        num_frames = 1
    else:
        num_frames = 1 + int(np.ceil((n - frame_length) / hop))
    padded = np.zeros((num_frames - 1) * hop + frame_length, dtype=np.float64)
    padded[:n] = signal
    frames = np.empty((num_frames, frame_length), dtype=np.float64)
    for i in range(num_frames):
        frames[i] = padded[i * hop:i * hop + frame_length]
    return frames


def extract_mfcc(signal, cfg: MfccConfig | None = None) -> np.ndarray:
    """Coefficients-by-frames image of shape cfg.output_shape (20x45 default)."""
    cfg = cfg or MfccConfig()
    signal = np.asarray(signal, dtype=np.float64).ravel()
    if signal.size == 0:
        raise DataError("cannot extract MFCC from an empty signal")
    frames = frame_signal(signal, cfg.frame_length, cfg.hop)
    frames = frames[:cfg.target_frames]
    frames = frames * np.hanning(cfg.frame_length)
    spectrum = np.abs(np.fft.rfft(frames, n=cfg.fft_size, axis=1))
    energies = spectrum @ mel_filterbank(cfg).T
    log_energies = np.log(energies + LOG_FLOOR)
    coeffs = dct(log_energies, type=2, norm="ortho", axis=1)[:, :cfg.num_coefficients]
    image = np.zeros(cfg.output_shape, dtype=np.float32)
    image[:, :coeffs.shape[0]] = coeffs.T.astype(np.float32)
    return image


def read_wav(path, expected_rate=None):
    """Read a mono 16-bit PCM WAV; returns (rate, float32 samples in [-1, 1])."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wav:
            if wav.getcomptype() != "NONE":
                raise DataError(f"{path}: non-PCM WAV encoding {wav.getcomptype()!r}")
            if wav.getnchannels() != 1:
                raise DataError(f"{path}: expected mono audio, "
                                f"got {wav.getnchannels()} channels")
            if wav.getsampwidth() != 2:
                raise DataError(f"{path}: expected 16-bit PCM, "
                                f"got {8 * wav.getsampwidth()}-bit")
            rate = wav.getframerate()
            raw = wav.readframes(wav.getnframes())
    except wave.Error as exc:
        raise DataError(f"{path}: unreadable WAV ({exc})") from None
    if expected_rate is not None and rate != expected_rate:
        raise DataError(f"{path}: sample rate {rate} Hz does not match "
                        f"expected {expected_rate} Hz")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    return rate, samples


def write_wav(path, samples, rate):
    """Write float samples in [-1, 1] as mono 16-bit PCM."""
    pcm = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = (pcm * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(int(rate))
        wav.writeframes(pcm.tobytes())
