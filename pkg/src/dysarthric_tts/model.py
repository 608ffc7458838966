"""Multi-speaker FastSpeech2-style acoustic model with a severity-conditioned variance adaptor."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .audio import N_MELS
from .corpus_io import N_SEVERITIES, check_severity
from .features import NormStats
from .nn import tensor as T
from .nn.layers import Conv1d, Dropout, Embedding, LayerNorm, Linear, Module
from .nn.tensor import Tensor, no_grad
from .phonemes import INVENTORY, PAUSE_ID

MASKING_MODES = ("phoneme", "frame")
LOG_MEL_FLOOR = 1e-5


class CoefficientRangeError(ValueError):
    pass


class MissingTargetsError(ValueError):
    pass


class EmptyOutputError(ValueError):
    pass


@dataclass
class ModelConfig:
    n_encoder_blocks: int = 4
    n_decoder_blocks: int = 4
    hidden: int = 256
    n_heads: int = 2
    ff_filter: int = 1024
    ff_conv_kernel: int = 9
    n_mels: int = N_MELS
    n_severities: int = N_SEVERITIES
    predictor_conv_kernel: int = 3
    predictor_dropout: float = 0.5
    dropout: float = 0.1
    speaker_dropout: float = 0.0
    masking_mode: str = "phoneme"
    n_phonemes: int = len(INVENTORY)
    n_speakers: int = 1
    dtype: str = "float32"

    def __post_init__(self):
        if self.hidden % self.n_heads:
            raise ValueError(f"hidden {self.hidden} not divisible by n_heads {self.n_heads}")
        if self.n_severities != N_SEVERITIES:
            raise ValueError("n_severities must be 3")
        if self.n_mels != N_MELS:
            raise ValueError(f"n_mels must be {N_MELS}")
        if self.masking_mode not in MASKING_MODES:
            raise ValueError(f"masking_mode must be one of {MASKING_MODES}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys {sorted(unknown)}")
        return cls(**d)


def check_coefficient(name, value):
    value = float(value)
    if not (0.0 <= value <= 2.0) or math.isnan(value):
        raise CoefficientRangeError(f"{name} coefficient must be in [0, 2], got {value}")
    return value


@dataclass
class SynthesisControls:
    pitch_coef: float = 1.0
    energy_coef: float = 1.0
    duration_coef: float = 1.0
    severity: int = 0
    pause_insertion: bool = False
    seed: int = 0

    def __post_init__(self):
        self.pitch_coef = check_coefficient("pitch", self.pitch_coef)
        self.energy_coef = check_coefficient("energy", self.energy_coef)
        self.duration_coef = check_coefficient("duration", self.duration_coef)
        self.severity = check_severity(self.severity)
        self.pause_insertion = bool(self.pause_insertion)
        self.seed = int(self.seed)
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def sinusoid_table(n_positions, dim):
    pos = np.arange(n_positions)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, 2 * (i // 2) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def additive_key_mask(valid):
    """(B, T) validity -> (B, 1, 1, T) additive attention mask."""
    return np.where(valid, 0.0, -np.inf)[:, None, None, :]


def expansion_matrix(durations, max_frames=None):
    """(B, T, L) one-hot map from frames to the phoneme they repeat."""
    durations = np.asarray(durations, dtype=np.int64)
    if (durations < 0).any():
        raise ValueError("durations must be non-negative")
    totals = durations.sum(axis=1)
    if (totals == 0).any():
        raise ValueError("length regulation of an all-zero duration sequence")
    B, L = durations.shape
    n = int(totals.max()) if max_frames is None else max_frames
    M = np.zeros((B, n, L))
    for b in range(B):
        owner = np.repeat(np.arange(L), durations[b])
        M[b, np.arange(owner.size), owner] = 1.0
    return M, np.arange(n)[None, :] < totals[:, None]


def length_regulate(hidden, durations, max_frames=None):
    """Repeat position i of ``hidden`` (B, L, H) durations[b, i] times; returns (frames, frame_valid)."""
    M, valid = expansion_matrix(durations, max_frames)
    return T.matmul(M, hidden), valid


def masked_fill(x, valid):
    return T.mul(x, valid[..., None].astype(x.dtype))


class MultiHeadAttention(Module):
    def __init__(self, hidden, n_heads, rng, dtype):
        self.n_heads = n_heads
        self.wq = Linear(hidden, hidden, rng, dtype)
        self.wk = Linear(hidden, hidden, rng, dtype)
        self.wv = Linear(hidden, hidden, rng, dtype)
        self.wo = Linear(hidden, hidden, rng, dtype)

    def _split(self, x):
        B, L, H = x.shape
        return T.transpose(T.reshape(x, (B, L, self.n_heads, H // self.n_heads)), (0, 2, 1, 3))

    def __call__(self, x, key_mask):
        B, L, H = x.shape
        out = T.scaled_dot_attention(self._split(self.wq(x)), self._split(self.wk(x)), self._split(self.wv(x)), key_mask)
        return self.wo(T.reshape(T.transpose(out, (0, 2, 1, 3)), (B, L, H)))


class FFTBlock(Module):
    """Self-attention and a two-layer convolutional feed-forward, each with residual + layer norm."""

    def __init__(self, cfg, rng, dtype):
        self.attn = MultiHeadAttention(cfg.hidden, cfg.n_heads, rng, dtype)
        self.norm1 = LayerNorm(cfg.hidden, dtype)
        self.conv1 = Conv1d(cfg.hidden, cfg.ff_filter, cfg.ff_conv_kernel, rng, dtype)
        self.conv2 = Conv1d(cfg.ff_filter, cfg.hidden, 1, rng, dtype)
        self.norm2 = LayerNorm(cfg.hidden, dtype)
        self.drop = Dropout(cfg.dropout)

    def __call__(self, x, valid, rng):
        key_mask = additive_key_mask(valid).astype(x.dtype)
        x = masked_fill(self.norm1(x + self.drop(self.attn(x, key_mask), rng)), valid)
        h = masked_fill(T.relu(self.conv1(x)), valid)
        h = self.drop(self.conv2(self.drop(h, rng)), rng)
        return masked_fill(self.norm2(x + h), valid)


class VariancePredictor(Module):
    """Two conv → ReLU → layer norm → dropout stages and a linear projection."""

    def __init__(self, hidden, kernel, dropout, rng, dtype, n_out=1):
        self.conv1 = Conv1d(hidden, hidden, kernel, rng, dtype)
        self.norm1 = LayerNorm(hidden, dtype)
        self.conv2 = Conv1d(hidden, hidden, kernel, rng, dtype)
        self.norm2 = LayerNorm(hidden, dtype)
        self.drop = Dropout(dropout)
        self.out = Linear(hidden, n_out, rng, dtype)
        self.n_out = n_out

    def __call__(self, x, valid, rng):
        h = masked_fill(x, valid)
        h = masked_fill(self.drop(self.norm1(T.relu(self.conv1(h))), rng), valid)
        h = masked_fill(self.drop(self.norm2(T.relu(self.conv2(h))), rng), valid)
        y = self.out(h)
        if self.n_out == 1:
            B, L, _ = y.shape
            return T.mul(T.reshape(y, (B, L)), valid.astype(y.dtype))
        return y


@dataclass
class AdaptorOutput:
    frames: Tensor
    frame_valid: np.ndarray
    log_duration: Tensor          # (B, L) predicted log(1 + d)
    pitch: Tensor                 # normalized prediction, (B, L) or (B, T)
    energy: Tensor
    severity_logits: Tensor       # (B, 3)
    durations: np.ndarray         # integer durations used for length regulation
    predicted_durations: np.ndarray | None = None   # exp(l) - 1, pre-coefficient
    scaled_durations: np.ndarray | None = None      # duration_coef * predicted, pre-rounding
    predicted_pitch: np.ndarray | None = None       # Hz
    applied_pitch: np.ndarray | None = None
    predicted_energy: np.ndarray | None = None
    applied_energy: np.ndarray | None = None


@dataclass
class Batch:
    phone_ids: np.ndarray
    src_valid: np.ndarray
    speakers: np.ndarray
    severities: np.ndarray
    durations: np.ndarray | None = None
    pitch: np.ndarray | None = None          # normalized per phoneme
    voiced: np.ndarray | None = None
    energy: np.ndarray | None = None
    frame_pitch: np.ndarray | None = None    # normalized per frame
    frame_voiced: np.ndarray | None = None
    frame_energy: np.ndarray | None = None
    mel: np.ndarray | None = None            # normalized log-mel (B, T, 80)
    frame_valid: np.ndarray | None = None

    @property
    def has_targets(self):
        return self.durations is not None

    @property
    def size(self):
        return self.phone_ids.shape[0]


class AcousticModel(Module):
    """Encoder → variance adaptor (duration, pitch, energy, severity) → decoder.

    Alongside the parameters the model carries the normalization needed
    to map predictions to physical units: prosody NormStats and per-bin
    log-mel mean/std.
    """

    def __init__(self, config, seed=0, norm_stats=None, mel_mean=None, mel_std=None, speakers=None):
        self.config = config
        cfg = config
        dtype = np.dtype(cfg.dtype)
        rng = np.random.default_rng(seed)
        H = cfg.hidden
        self.phoneme_embedding = Embedding(cfg.n_phonemes, H, rng, dtype)
        self.speaker_embedding = Embedding(cfg.n_speakers, H, rng, dtype, scale=0.1)
        self.severity_embedding = Embedding(cfg.n_severities, H, rng, dtype, scale=0.1)
        self.encoder = [FFTBlock(cfg, rng, dtype) for _ in range(cfg.n_encoder_blocks)]
        k, p = cfg.predictor_conv_kernel, cfg.predictor_dropout
        self.duration_predictor = VariancePredictor(H, k, p, rng, dtype)
        self.pitch_predictor = VariancePredictor(H, k, p, rng, dtype)
        self.energy_predictor = VariancePredictor(H, k, p, rng, dtype)
        self.severity_predictor = VariancePredictor(H, k, p, rng, dtype, n_out=cfg.n_severities)
        self.pitch_projection = Linear(1, H, rng, dtype)
        self.energy_projection = Linear(1, H, rng, dtype)
        self.decoder = [FFTBlock(cfg, rng, dtype) for _ in range(cfg.n_decoder_blocks)]
        self.mel_linear = Linear(H, cfg.n_mels, rng, dtype)

        self.norm_stats = norm_stats or NormStats(0.0, 1.0, 0.0, 1.0, 0.0, 1.0)
        self.mel_mean = np.zeros(cfg.n_mels) if mel_mean is None else np.asarray(mel_mean, dtype=np.float64)
        self.mel_std = np.ones(cfg.n_mels) if mel_std is None else np.asarray(mel_std, dtype=np.float64)
        self.speakers = list(speakers) if speakers is not None else [f"spk{i}" for i in range(cfg.n_speakers)]
        if len(self.speakers) != cfg.n_speakers:
            raise ValueError("speaker list does not match n_speakers")

    @property
    def dtype(self):
        return np.dtype(self.config.dtype)

    def speaker_index(self, speaker_id):
        try:
            return self.speakers.index(speaker_id)
        except ValueError:
            raise KeyError(f"unknown speaker {speaker_id!r}") from None

    # ---- stages ---------------------------------------------------------

    def encode(self, phone_ids, speakers, src_valid, rng=None):
        """(B, L) ids -> (B, L, H) hidden with the speaker row added at every position."""
        phone_ids = np.asarray(phone_ids)
        if phone_ids.size and (phone_ids.min() < 0 or phone_ids.max() >= self.config.n_phonemes):
            raise KeyError("phoneme id outside the vocabulary")
        speakers = np.asarray(speakers)
        if speakers.min() < 0 or speakers.max() >= self.config.n_speakers:
            raise KeyError("speaker id outside the speaker table")
        B, L = phone_ids.shape
        x = self.phoneme_embedding(phone_ids)
        x = x + sinusoid_table(L, self.config.hidden).astype(self.dtype)
        x = masked_fill(x, src_valid)
        for block in self.encoder:
            x = block(x, src_valid, rng)
        spk = self.speaker_embedding(speakers.reshape(B, 1))
        if self.training and rng is not None and self.config.speaker_dropout > 0:
            # zeroing the speaker row makes severity the only shared explanation of rate
            keep = rng.random(B) >= self.config.speaker_dropout
            spk = T.mul(spk, keep[:, None, None].astype(self.dtype))
        return masked_fill(x + spk, src_valid)

    def severity_head(self, hidden, src_valid, rng=None):
        counts = src_valid.sum(axis=1).astype(self.dtype)
        pooled = T.sum_(masked_fill(hidden, src_valid), axis=1, keepdims=True)
        pooled = T.mul(pooled, (1.0 / counts)[:, None, None])
        one = np.ones((hidden.shape[0], 1), dtype=bool)
        logits = self.severity_predictor(pooled, one, rng)
        return T.reshape(logits, (hidden.shape[0], self.config.n_severities))

    def _to_hz(self, norm, mean, std):
        return np.maximum(norm.astype(np.float64) * std + mean, 0.0)

    def _condition(self, x, valid, values, projection):
        v = T.reshape(values, values.shape + (1,)) if isinstance(values, Tensor) else Tensor(
            np.asarray(values, dtype=self.dtype)[..., None])
        return masked_fill(x + projection(v), valid)

    def variance_adapt(self, hidden, src_valid, severities, controls=None, batch=None, mode=None,
                       rng=None, phone_ids=None, duration_override=None):
        """Severity conditioning, prosody prediction and length regulation.

        Training (``batch`` with targets): target durations drive length
        regulation and target pitch/energy condition the sequence. Inference
        (``controls``): predictions are mapped to Hz / energy units, scaled by
        the coefficients and fed back. ``duration_override`` replaces the
        pre-coefficient predicted durations (B, L) at inference.
        """
        mode = mode or self.config.masking_mode
        if mode not in MASKING_MODES:
            raise ValueError(f"unknown masking mode {mode!r}")
        training = batch is not None
        if training and not batch.has_targets:
            raise MissingTargetsError("training-mode variance adaptation needs targets")
        if not training and controls is None:
            raise MissingTargetsError("inference needs SynthesisControls")
        ns = self.norm_stats

        logits = self.severity_head(hidden, src_valid, rng)
        sev = self.severity_embedding(np.asarray(severities).reshape(-1, 1))
        h = masked_fill(hidden + sev, src_valid)
        log_dur = self.duration_predictor(h, src_valid, rng)

        out = {}
        if training:
            durations = batch.durations
        else:
            predicted = np.expm1(log_dur.data.astype(np.float64))
            if duration_override is not None:
                predicted = np.asarray(duration_override, dtype=np.float64)
            scaled = controls.duration_coef * predicted
            durations = np.floor(scaled + 0.5).astype(np.int64)
            is_pause = np.asarray(phone_ids) == PAUSE_ID
            durations = np.maximum(durations, np.where(is_pause, 0, 1))
            durations = np.where(src_valid, durations, 0)
            out.update(predicted_durations=predicted, scaled_durations=scaled)
            if (durations.sum(axis=1) == 0).any():
                raise EmptyOutputError("every duration rounded to 0")

        def prosody(x, valid, pitch_target, energy_target):
            pitch = self.pitch_predictor(x, valid, rng)
            energy = self.energy_predictor(x, valid, rng)
            if training:
                pitch_cond, energy_cond = pitch_target, energy_target
            else:
                p_hz = self._to_hz(pitch.data, ns.pitch_mean, ns.pitch_std) * valid
                e_val = self._to_hz(energy.data, ns.energy_mean, ns.energy_std) * valid
                p_applied = controls.pitch_coef * p_hz
                e_applied = controls.energy_coef * e_val
                out.update(predicted_pitch=p_hz, applied_pitch=p_applied,
                           predicted_energy=e_val, applied_energy=e_applied)
                pitch_cond = (p_applied - ns.pitch_mean) / ns.pitch_std
                energy_cond = (e_applied - ns.energy_mean) / ns.energy_std
            x = self._condition(x, valid, pitch_cond, self.pitch_projection)
            x = self._condition(x, valid, energy_cond, self.energy_projection)
            return x, pitch, energy

        max_frames = batch.mel.shape[1] if training and batch.mel is not None else None
        if mode == "phoneme":
            h, pitch, energy = prosody(
                h, src_valid,
                batch.pitch if training else None, batch.energy if training else None)
            frames, frame_valid = length_regulate(h, durations, max_frames)
        else:
            frames, frame_valid = length_regulate(h, durations, max_frames)
            frames, pitch, energy = prosody(
                frames, frame_valid,
                batch.frame_pitch if training else None, batch.frame_energy if training else None)
        return AdaptorOutput(frames, frame_valid, log_dur, pitch, energy, logits, durations, **out)

    def decode(self, frames, frame_valid, rng=None):
        """(B, T, H) frames -> (B, T, 80) normalized log-mel."""
        if frames.shape[1] == 0:
            raise ValueError("decode of an empty frame sequence")
        x = frames + sinusoid_table(frames.shape[1], self.config.hidden).astype(self.dtype)
        x = masked_fill(x, frame_valid)
        for block in self.decoder:
            x = block(x, frame_valid, rng)
        return masked_fill(self.mel_linear(x), frame_valid)

    def forward(self, batch, rng=None, mode=None):
        h = self.encode(batch.phone_ids, batch.speakers, batch.src_valid, rng)
        ad = self.variance_adapt(h, batch.src_valid, batch.severities, batch=batch, mode=mode, rng=rng)
        mel = self.decode(ad.frames, ad.frame_valid, rng)
        return mel, ad

    # ---- inference --------------------------------------------------------

    def infer(self, phone_ids, speaker, controls, mode=None, duration_override=None):
        """Single-utterance inference; returns (linear mel (T, 80), AdaptorOutput)."""
        ids = np.asarray(phone_ids, dtype=np.int64)[None, :]
        valid = np.ones(ids.shape, dtype=bool)
        spk = np.array([speaker if isinstance(speaker, (int, np.integer)) else self.speaker_index(speaker)])
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                h = self.encode(ids, spk, valid)
                ad = self.variance_adapt(
                    h, valid, np.array([controls.severity]), controls=controls, mode=mode,
                    phone_ids=ids, duration_override=None if duration_override is None else np.asarray(duration_override)[None, :],
                )
                out = self.decode(ad.frames, ad.frame_valid)
        finally:
            self.train(was_training)
        return self.denormalize_mel(out.data[0]), ad

    def predict_log_durations(self, phone_ids, speaker, severity):
        ids = np.asarray(phone_ids, dtype=np.int64)[None, :]
        valid = np.ones(ids.shape, dtype=bool)
        spk = np.array([speaker if isinstance(speaker, (int, np.integer)) else self.speaker_index(speaker)])
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                h = self.encode(ids, spk, valid)
                sev = self.severity_embedding(np.array([[check_severity(severity)]]))
                return self.duration_predictor(masked_fill(h + sev, valid), valid, None).data[0].astype(np.float64)
        finally:
            self.train(was_training)

    def normalize_mel(self, mel):
        logmel = np.log(np.maximum(np.asarray(mel, dtype=np.float64), LOG_MEL_FLOOR))
        return (logmel - self.mel_mean) / self.mel_std

    def denormalize_mel(self, norm):
        return np.exp(np.asarray(norm, dtype=np.float64) * self.mel_std + self.mel_mean).astype(np.float32)

    # ---- metadata -------------------------------------------------------

    def metadata(self):
        return {
            "config": self.config.to_dict(),
            "norm_stats": self.norm_stats.to_dict(),
            "mel_mean": [float(v) for v in self.mel_mean],
            "mel_std": [float(v) for v in self.mel_std],
            "speakers": list(self.speakers),
        }

    def metadata_json(self):
        return json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_metadata(cls, meta, seed=0):
        return cls(
            ModelConfig.from_dict(meta["config"]), seed=seed,
            norm_stats=NormStats.from_dict(meta["norm_stats"]),
            mel_mean=meta["mel_mean"], mel_std=meta["mel_std"], speakers=meta["speakers"],
        )


@dataclass
class LossWeights:
    mel: float = 1.0
    duration: float = 1.0
    pitch: float = 1.0
    energy: float = 1.0
    severity: float = 1.0


LOSS_KEYS = ("mel", "duration", "pitch", "energy", "severity")


def compute_loss(mel_pred, adaptor, batch, weights=None, mode="phoneme"):
    """Masked loss components (tensors) and their weighted total.

    Targets in ``batch`` are already in model space: log(1 + d) is formed
    here from integer durations, pitch/energy are normalized, mel is
    normalized log-mel.
    """
    weights = weights or LossWeights()
    if not batch.src_valid.any() or not batch.frame_valid.any():
        raise ValueError("empty mask")
    parts = {
        "mel": T.masked_mse(mel_pred, batch.mel, np.broadcast_to(batch.frame_valid[..., None], mel_pred.shape)),
        "duration": T.masked_mse(adaptor.log_duration, np.log1p(batch.durations.astype(np.float64)), batch.src_valid),
    }
    if mode == "phoneme":
        pitch_t, voiced, energy_t, valid = batch.pitch, batch.voiced & batch.src_valid, batch.energy, batch.src_valid
    else:
        pitch_t, voiced, energy_t, valid = batch.frame_pitch, batch.frame_voiced & batch.frame_valid, batch.frame_energy, batch.frame_valid
    zero = Tensor(np.zeros((), dtype=mel_pred.dtype))
    parts["pitch"] = T.masked_mse(adaptor.pitch, pitch_t, voiced) if voiced.any() else zero
    parts["energy"] = T.masked_mse(adaptor.energy, energy_t, valid)
    parts["severity"] = T.cross_entropy(adaptor.severity_logits, batch.severities)
    total = None
    for key in LOSS_KEYS:
        term = T.mul(parts[key], getattr(weights, key))
        total = term if total is None else total + term
    parts["total"] = total
    return parts
