"""Framing, STFT, mel filterbank and 16-bit PCM WAV I/O."""

from __future__ import annotations

import wave
from dataclasses import asdict, dataclass

import numpy as np

N_MELS = 80


@dataclass(frozen=True)
class FrameParams:
    sample_rate: int = 16000
    win_length: int = 1024
    hop_length: int = 256
    n_mels: int = N_MELS
    fmin: float = 0.0
    fmax: float = 8000.0

    def __post_init__(self):
        if self.hop_length <= 0 or self.win_length <= 0:
            raise ValueError("hop_length and win_length must be positive")
        if self.hop_length > self.win_length:
            raise ValueError(f"hop_length {self.hop_length} exceeds win_length {self.win_length}")
        if self.fmax > self.sample_rate / 2:
            raise ValueError(f"fmax {self.fmax} exceeds Nyquist {self.sample_rate / 2}")
        if not 0 <= self.fmin < self.fmax:
            raise ValueError("need 0 <= fmin < fmax")

    @property
    def hop_seconds(self):
        return self.hop_length / self.sample_rate

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def n_frames_for(n_samples, params):
    if n_samples <= params.win_length:
        return 1
    return 1 + (n_samples - params.win_length) // params.hop_length


def n_samples_for(n_frames, params):
    return (n_frames - 1) * params.hop_length + params.win_length


def frame_signal(samples, params):
    """Frames of ``win_length`` samples every ``hop_length``; short signals are zero-padded."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected mono samples")
    if x.size == 0:
        raise ValueError("empty signal")
    if x.size < params.win_length:
        x = np.pad(x, (0, params.win_length - x.size))
    n = n_frames_for(x.size, params)
    idx = np.arange(params.win_length)[None, :] + params.hop_length * np.arange(n)[:, None]
    return x[idx]


def hann(n):
    # periodic Hann, the usual STFT analysis window
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


def stft(samples, params):
    frames = frame_signal(samples, params) * hann(params.win_length)
    return np.fft.rfft(frames, axis=1)


def istft(spec, params):
    """Weighted overlap-add inverse of :func:`stft`."""
    win = hann(params.win_length)
    frames = np.fft.irfft(spec, n=params.win_length, axis=1) * win
    n = n_samples_for(spec.shape[0], params)
    out = np.zeros(n)
    norm = np.zeros(n)
    for t in range(spec.shape[0]):
        s = t * params.hop_length
        out[s:s + params.win_length] += frames[t]
        norm[s:s + params.win_length] += win ** 2
    return out / np.maximum(norm, 1e-8)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(params):
    """Triangular HTK-scale filters, shape (n_mels, win_length // 2 + 1), area-normalized."""
    n_bins = params.win_length // 2 + 1
    freqs = np.linspace(0, params.sample_rate / 2, n_bins)
    edges = mel_to_hz(np.linspace(hz_to_mel(params.fmin), hz_to_mel(params.fmax), params.n_mels + 2))
    fb = np.zeros((params.n_mels, n_bins))
    for m in range(params.n_mels):
        lo, centre, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (freqs - lo) / (centre - lo)
        down = (hi - freqs) / (hi - centre)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
        fb[m] *= 2.0 / (hi - lo)
    return fb


def mel_spectrogram(samples, params):
    """Mel-filterbank magnitudes, shape (n_frames, n_mels)."""
    mag = np.abs(stft(samples, params))
    return mag @ mel_filterbank(params).T


def write_wav(path, samples, sample_rate):
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(x * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate))
        w.writeframes(pcm.tobytes())


def read_wav(path):
    """Returns (samples in [-1, 1], sample_rate) for a 16-bit mono file."""
    with wave.open(str(path), "rb") as w:
        if w.getsampwidth() != 2 or w.getnchannels() != 1:
            raise ValueError(f"{path}: expected 16-bit mono PCM")
        rate = w.getframerate()
        pcm = np.frombuffer(w.readframes(w.getnframes()), dtype="<i2")
    return pcm.astype(np.float64) / 32767.0, rate
