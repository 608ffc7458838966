"""Deterministic training loop, evaluation, and model persistence."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .audio import FrameParams
from .corpus_io import load_manifest
from .features import compute_normalization, utterance_targets
from .model import LOSS_KEYS, AcousticModel, Batch, LossWeights, ModelConfig, compute_loss
from .nn import Adam, load_checkpoint, no_grad, save_checkpoint
from .nn.checkpoint import checkpoint_bytes

log = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 8
    learning_rate: float = 1e-3
    betas: tuple = (0.9, 0.98)
    eps: float = 1e-9
    grad_clip: float | None = 1.0
    seed: int = 0
    validation_fraction: float = 0.1
    loss_weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if isinstance(self.loss_weights, dict):
            self.loss_weights = LossWeights(**self.loss_weights)
        self.betas = tuple(self.betas)
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must be in (0, 1)")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")

    def to_dict(self):
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


@dataclass
class Example:
    """One utterance in model space (ids, indices, normalized targets)."""

    id: str
    phone_ids: np.ndarray
    speaker: int
    severity: int
    durations: np.ndarray
    pitch_hz: np.ndarray
    energy: np.ndarray
    frame_pitch_hz: np.ndarray
    frame_energy: np.ndarray
    mel: np.ndarray  # linear magnitudes (T, 80)


def load_examples(manifest_path, speakers=None, params=FrameParams()):
    """Read a corpus and extract prosody targets; returns (examples, speaker list)."""
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    utterances = load_manifest(manifest_path)
    if speakers is None:
        speakers = sorted({u.speaker_id for u in utterances})
    examples = []
    for u in utterances:
        targets, mel = utterance_targets(u, root, params)
        examples.append(Example(
            id=u.id, phone_ids=np.asarray(u.phones.ids), speaker=speakers.index(u.speaker_id),
            severity=u.severity, durations=targets.durations, pitch_hz=targets.pitch,
            energy=targets.energy, frame_pitch_hz=targets.frame_pitch, frame_energy=targets.frame_energy,
            mel=mel.data,
        ))
    return examples, list(speakers)


def split_examples(examples, fraction, seed):
    """Seeded disjoint (train, validation) split; validation gets round(n * fraction) items."""
    n = len(examples)
    order = np.random.default_rng(seed).permutation(n)
    n_val = min(max(int(math.floor(n * fraction + 0.5)), 0), n - 1)
    val_idx = set(order[:n_val].tolist())
    train = [e for i, e in enumerate(examples) if i not in val_idx]
    val = [e for i, e in enumerate(examples) if i in val_idx]
    return train, val


def fit_statistics(examples):
    from .features import ProsodyTargets

    stats = compute_normalization(
        ProsodyTargets(e.durations, e.pitch_hz, e.energy) for e in examples
    )
    logmel = np.log(np.maximum(np.concatenate([e.mel for e in examples]).astype(np.float64), 1e-5))
    return stats, logmel.mean(axis=0), np.maximum(logmel.std(axis=0), 1e-5)


def make_batch(examples, model):
    ns = model.norm_stats
    B = len(examples)
    L = max(len(e.phone_ids) for e in examples)
    Tn = max(int(e.durations.sum()) for e in examples)
    dt = model.dtype
    b = Batch(
        phone_ids=np.zeros((B, L), dtype=np.int64),
        src_valid=np.zeros((B, L), dtype=bool),
        speakers=np.array([e.speaker for e in examples]),
        severities=np.array([e.severity for e in examples]),
        durations=np.zeros((B, L), dtype=np.int64),
        pitch=np.zeros((B, L), dtype=dt),
        voiced=np.zeros((B, L), dtype=bool),
        energy=np.zeros((B, L), dtype=dt),
        frame_pitch=np.zeros((B, Tn), dtype=dt),
        frame_voiced=np.zeros((B, Tn), dtype=bool),
        frame_energy=np.zeros((B, Tn), dtype=dt),
        mel=np.zeros((B, Tn, model.config.n_mels), dtype=dt),
        frame_valid=np.zeros((B, Tn), dtype=bool),
    )
    for i, e in enumerate(examples):
        n, t = len(e.phone_ids), int(e.durations.sum())
        b.phone_ids[i, :n] = e.phone_ids
        b.src_valid[i, :n] = True
        b.durations[i, :n] = e.durations
        b.voiced[i, :n] = e.pitch_hz > 0
        b.pitch[i, :n] = np.where(e.pitch_hz > 0, (e.pitch_hz - ns.pitch_mean) / ns.pitch_std, 0.0)
        b.energy[i, :n] = (e.energy - ns.energy_mean) / ns.energy_std
        b.frame_voiced[i, :t] = e.frame_pitch_hz > 0
        b.frame_pitch[i, :t] = np.where(e.frame_pitch_hz > 0, (e.frame_pitch_hz - ns.pitch_mean) / ns.pitch_std, 0.0)
        b.frame_energy[i, :t] = (e.frame_energy - ns.energy_mean) / ns.energy_std
        b.mel[i, :t] = model.normalize_mel(e.mel)
        b.frame_valid[i, :t] = True
    return b


def batches(examples, batch_size):
    for i in range(0, len(examples), batch_size):
        yield examples[i:i + batch_size]


def evaluate(model, examples, batch_size=8, weights=None):
    """Teacher-forced mean loss components over ``examples`` (dropout off, no updates)."""
    if not examples:
        raise ValueError("cannot evaluate an empty split")
    was_training = model.training
    model.eval()
    sums = dict.fromkeys(LOSS_KEYS + ("total",), 0.0)
    try:
        with no_grad():
            for chunk in batches(examples, batch_size):
                b = make_batch(chunk, model)
                mel, ad = model.forward(b)
                parts = compute_loss(mel, ad, b, weights, model.config.masking_mode)
                for k in sums:
                    sums[k] += float(parts[k].data) * len(chunk)
    finally:
        model.train(was_training)
    return {k: v / len(examples) for k, v in sums.items()}


def model_paths(path):
    path = Path(path)
    return path, path.with_suffix(".json")


def save_model(model, path):
    ckpt, meta = model_paths(path)
    save_checkpoint(model.state_dict(), ckpt)
    meta.write_text(model.metadata_json(), encoding="utf-8")


def load_model(path, expect_config=None):
    """Load a checkpoint and its JSON hyperparameters; optionally verify them against ``expect_config``."""
    ckpt, meta_path = model_paths(path)
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    model = AcousticModel.from_metadata(meta)
    if expect_config is not None and model.config != expect_config:
        raise ValueError("checkpoint hyperparameters do not match the requested model config")
    model.load_state_dict(load_checkpoint(ckpt))
    return model


@dataclass
class TrainResult:
    model: AcousticModel
    metrics: list
    best_epoch: int
    checkpoint: Path | None


def build_model(model_config, examples, speakers, seed):
    stats, mel_mean, mel_std = fit_statistics(examples)
    cfg = ModelConfig.from_dict({**model_config.to_dict(), "n_speakers": len(speakers)})
    return AcousticModel(cfg, seed=seed, norm_stats=stats, mel_mean=mel_mean, mel_std=mel_std, speakers=speakers)


def train(model_config, train_config, examples, speakers, out_dir=None, model=None, metrics_path=None):
    """Train on ``examples``; keeps the parameters with the best validation total.

    Pure function of (configs, examples, seed). Per-epoch train and
    validation loss components are appended to ``metrics_path`` (JSON
    lines) when given; the best model is written to ``out_dir/model.ckpt``.
    """
    tc = train_config
    train_set, val_set = split_examples(examples, tc.validation_fraction, tc.seed)
    if model is None:
        model = build_model(model_config, train_set, speakers, tc.seed)
    model.train()
    opt = Adam(model.parameters(), lr=tc.learning_rate, betas=tc.betas, eps=tc.eps, grad_clip=tc.grad_clip)
    shuffle_rng = np.random.default_rng([tc.seed, 1])
    dropout_rng = np.random.default_rng([tc.seed, 2])
    mode = model.config.masking_mode

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = metrics_path or out_dir / "metrics.jsonl"
    if metrics_path is not None:
        Path(metrics_path).write_text("", encoding="utf-8")

    metrics, best, best_epoch, best_state = [], math.inf, 0, None
    for epoch in range(1, tc.epochs + 1):
        order = shuffle_rng.permutation(len(train_set))
        sums = dict.fromkeys(LOSS_KEYS + ("total",), 0.0)
        for bi, idx in enumerate(batches(order.tolist(), tc.batch_size)):
            chunk = [train_set[i] for i in idx]
            b = make_batch(chunk, model)
            opt.zero_grad()
            mel, ad = model.forward(b, rng=dropout_rng)
            parts = compute_loss(mel, ad, b, tc.loss_weights, mode)
            total = parts["total"]
            if not np.isfinite(total.data):
                raise NonFiniteLossError(f"non-finite loss at epoch {epoch}, batch {bi}")
            total.backward()
            opt.step()
            for k in sums:
                sums[k] += float(parts[k].data) * len(chunk)
        train_row = {"epoch": epoch, "split": "train", **{k: v / len(train_set) for k, v in sums.items()}}
        rows = [train_row]
        if val_set:
            rows.append({"epoch": epoch, "split": "validation", **evaluate(model, val_set, tc.batch_size, tc.loss_weights)})
        score = rows[-1]["total"]
        if score < best:
            best, best_epoch = score, epoch
            best_state = {k: v.copy() for k, v in model.state_dict().items()}
        for row in rows:
            metrics.append(row)
            log.info("epoch %d %s total %.4f mel %.4f", row["epoch"], row["split"], row["total"], row["mel"])
            if metrics_path is not None:
                with open(metrics_path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(row, sort_keys=False) + "\n")

    if best_state is not None:
        model.load_state_dict(best_state)
    ckpt = None
    if out_dir is not None:
        ckpt = out_dir / "model.ckpt"
        save_model(model, ckpt)
    return TrainResult(model, metrics, best_epoch, ckpt)


def state_fingerprint(model):
    return checkpoint_bytes(model.state_dict())
