"""Griffin-Lim reconstruction from mel magnitudes."""

from __future__ import annotations

import numpy as np

from .audio import FrameParams, istft, mel_filterbank, stft


def mel_to_linear(mel, params, reg=1e-3):
    """Regularized pseudo-inverse of the mel filterbank; negative bins clipped to 0."""
    fb = mel_filterbank(params)
    gram = fb @ fb.T
    inv = fb.T @ np.linalg.inv(gram + reg * np.trace(gram) / gram.shape[0] * np.eye(gram.shape[0]))
    return np.maximum(np.asarray(mel, dtype=np.float64) @ inv.T, 0.0)


def griffin_lim(mel, params=FrameParams(), n_iters=60, seed=0):
    """Waveform in [-1, 1] of length (n_frames - 1) * hop + win."""
    mel = np.asarray(mel, dtype=np.float64)
    if mel.ndim != 2 or mel.shape[1] != params.n_mels or mel.shape[0] < 1:
        raise ValueError(f"mel must be (n_frames, {params.n_mels}), got {mel.shape}")
    if not np.all(np.isfinite(mel)):
        raise ValueError("mel contains non-finite values")
    mag = mel_to_linear(mel, params)
    rng = np.random.default_rng(seed)
    phase = np.exp(2j * np.pi * rng.random(mag.shape))
    y = istft(mag * phase, params)
    for _ in range(n_iters):
        spec = stft(y, params)
        phase = np.exp(1j * np.angle(spec))
        y = istft(mag * phase, params)
    peak = np.max(np.abs(y)) if y.size else 0.0
    if peak > 1.0:
        y = y / peak
    return y
