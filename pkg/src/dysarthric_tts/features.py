"""Variance-adaptor ground truth: frame F0/energy, phoneme durations, pooling, normalization."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .audio import FrameParams, frame_signal, hann, mel_spectrogram, read_wav
from .corpus_io import load_alignment, read_mel, resolve

F0_MIN = 60.0
F0_MAX = 400.0
VOICING_THRESHOLD = 0.3
STD_FLOOR = 1e-5

__all__ = [
    "FrameParams", "ProsodyTargets", "NormStats", "ProsodyExtractor",
    "extract_f0", "extract_energy", "phoneme_durations", "pool_to_phoneme",
    "compute_normalization",
]


def extract_f0(samples, params=FrameParams(), fmin=F0_MIN, fmax=F0_MAX, threshold=VOICING_THRESHOLD):
    """Autocorrelation F0 per hop-aligned frame; 0 marks an unvoiced frame."""
    frames = frame_signal(samples, params)
    frames = frames - frames.mean(axis=1, keepdims=True)
    n = frames.shape[1]
    spec = np.fft.rfft(frames, n=2 * n, axis=1)
    ac = np.fft.irfft(np.abs(spec) ** 2, axis=1)[:, :n]
    energy = ac[:, 0]
    lag_lo = max(2, int(math.ceil(params.sample_rate / fmax)))
    lag_hi = min(n - 2, int(math.floor(params.sample_rate / fmin)))

    f0 = np.zeros(frames.shape[0])
    for t in range(frames.shape[0]):
        if energy[t] <= 1e-12:
            continue
        r = ac[t] / energy[t]
        seg = r[lag_lo:lag_hi + 1]
        is_peak = (seg >= r[lag_lo - 1:lag_hi]) & (seg >= r[lag_lo + 1:lag_hi + 2])
        if not is_peak.any():
            continue
        cand = np.flatnonzero(is_peak)
        best = cand[np.argmax(seg[cand])] + lag_lo
        if r[best] < threshold:
            continue
        # parabolic refinement of the peak lag
        a, b, c = r[best - 1], r[best], r[best + 1]
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom < 0 else 0.0
        f0[t] = params.sample_rate / (best + shift)
    return f0


def extract_energy(samples, params=FrameParams()):
    """Per-frame energy ``||frame * hann|| / win_length``; degree-1 homogeneous in the signal."""
    frames = frame_signal(samples, params) * hann(params.win_length)
    return np.sqrt(np.sum(frames ** 2, axis=1)) / params.win_length


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def phoneme_durations(alignment, params, n_frames):
    """Frame counts per alignment entry; the last entry absorbs rounding drift."""
    if not alignment:
        raise ValueError("empty alignment")
    hop_s = params.hop_seconds
    durations = [
        _round_half_up(e.end / hop_s) - _round_half_up(e.start / hop_s) for e in alignment
    ]
    end_frame = _round_half_up(alignment[-1].end / hop_s)
    if end_frame > n_frames + 1:
        raise ValueError(f"alignment ends at frame {end_frame}, beyond {n_frames} frames")
    durations[-1] += n_frames - sum(durations)
    if durations[-1] < 0:
        raise ValueError("alignment inconsistent with frame count (negative final duration)")
    return np.asarray(durations, dtype=np.int64)


def pool_to_phoneme(frame_values, durations, voiced_only=False):
    """Mean of ``frame_values`` over each phoneme's span.

    With ``voiced_only`` (pitch), zero frames are excluded from the mean and
    a phoneme with no voiced frame gets 0.
    """
    values = np.asarray(frame_values, dtype=np.float64)
    durations = np.asarray(durations, dtype=np.int64)
    if values.shape[0] != durations.sum():
        raise ValueError(f"{values.shape[0]} frame values for durations summing to {durations.sum()}")
    out = np.zeros(len(durations))
    start = 0
    for i, d in enumerate(durations):
        span = values[start:start + d]
        start += d
        if voiced_only:
            span = span[span > 0]
        if span.size:
            out[i] = span.mean()
    return out


@dataclass
class ProsodyTargets:
    durations: np.ndarray
    pitch: np.ndarray
    energy: np.ndarray
    frame_pitch: np.ndarray | None = None
    frame_energy: np.ndarray | None = None

    def __post_init__(self):
        self.durations = np.asarray(self.durations, dtype=np.int64)
        self.pitch = np.asarray(self.pitch, dtype=np.float64)
        self.energy = np.asarray(self.energy, dtype=np.float64)
        if not len(self.durations) == len(self.pitch) == len(self.energy):
            raise ValueError("durations, pitch and energy must have equal length")
        if (self.durations < 0).any():
            raise ValueError("durations must be non-negative")

    @property
    def n_frames(self):
        return int(self.durations.sum())


@dataclass
class NormStats:
    pitch_mean: float
    pitch_std: float
    energy_mean: float
    energy_std: float
    log_duration_mean: float
    log_duration_std: float

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: float(v) for k, v in d.items()})


def compute_normalization(targets):
    """Corpus statistics; pitch over voiced phonemes only, durations in log(1 + d)."""
    targets = list(targets)
    pitch = np.concatenate([t.pitch for t in targets]) if targets else np.zeros(0)
    voiced = pitch[pitch > 0]
    if voiced.size < 2:
        raise ValueError(f"need at least 2 voiced phonemes, got {voiced.size}")
    energy = np.concatenate([t.energy for t in targets])
    logdur = np.log1p(np.concatenate([t.durations for t in targets]).astype(np.float64))
    # sorting makes the sums independent of utterance order
    voiced, energy, logdur = np.sort(voiced), np.sort(energy), np.sort(logdur)
    return NormStats(
        pitch_mean=float(voiced.mean()),
        pitch_std=max(float(voiced.std()), STD_FLOOR),
        energy_mean=float(energy.mean()),
        energy_std=max(float(energy.std()), STD_FLOOR),
        log_duration_mean=float(logdur.mean()),
        log_duration_std=max(float(logdur.std()), STD_FLOOR),
    )


def utterance_targets(utt, root, params=FrameParams()):
    """Extract ProsodyTargets for a corpus utterance from its audio, alignment and mel files."""
    if utt.alignment_path is None or utt.mel_path is None or utt.audio_path is None:
        raise ValueError(f"utterance {utt.id} lacks alignment/mel/audio paths")
    mel = read_mel(resolve(root, utt.mel_path))
    samples, rate = read_wav(resolve(root, utt.audio_path))
    if rate != params.sample_rate:
        raise ValueError(f"{utt.audio_path}: sample rate {rate} != {params.sample_rate}")
    alignment = load_alignment(resolve(root, utt.alignment_path))
    if len(alignment) != len(utt.phones):
        raise ValueError(f"utterance {utt.id}: alignment has {len(alignment)} entries for {len(utt.phones)} phones")
    durations = phoneme_durations(alignment, params, mel.n_frames)
    f0 = _fit_length(extract_f0(samples, params), mel.n_frames)
    energy = _fit_length(extract_energy(samples, params), mel.n_frames)
    return ProsodyTargets(
        durations=durations,
        pitch=pool_to_phoneme(f0, durations, voiced_only=True),
        energy=pool_to_phoneme(energy, durations),
        frame_pitch=f0,
        frame_energy=energy,
    ), mel


def _fit_length(x, n):
    if len(x) >= n:
        return x[:n]
    return np.pad(x, (0, n - len(x)), mode="edge")


class ProsodyExtractor(TransformerMixin, BaseEstimator):
    """Transformer from waveforms to frame-level (pitch, energy) arrays.

    ``fit`` on a list of ProsodyTargets stores the normalization statistics
    used by the acoustic model.
    """

    def __init__(self, sample_rate=16000, win_length=1024, hop_length=256, fmin=F0_MIN, fmax=F0_MAX,
                 voicing_threshold=VOICING_THRESHOLD):
        self.sample_rate = sample_rate
        self.win_length = win_length
        self.hop_length = hop_length
        self.fmin = fmin
        self.fmax = fmax
        self.voicing_threshold = voicing_threshold

    @property
    def frame_params(self):
        return FrameParams(sample_rate=self.sample_rate, win_length=self.win_length, hop_length=self.hop_length)

    def fit(self, X, y=None):
        self.norm_stats_ = compute_normalization(X)
        return self

    def transform(self, X):
        params = self.frame_params
        return [
            (extract_f0(x, params, self.fmin, self.fmax, self.voicing_threshold), extract_energy(x, params))
            for x in X
        ]

    def mel(self, samples):
        return mel_spectrogram(samples, self.frame_params)
