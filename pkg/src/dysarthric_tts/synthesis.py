"""End-to-end inference: pause insertion, acoustic model, report."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .corpus_io import MelSpectrogram
from .model import EmptyOutputError, SynthesisControls
from .pause import SeverityPauseStats, insert_pauses, pause_count
from .phonemes import PAUSE, PhonemeSequence


class UnknownSpeakerError(KeyError):
    pass


@dataclass
class SynthesisReport:
    speaker: str
    controls: dict
    masking_mode: str
    phones: list
    word_index: list
    inserted_pause_positions: list
    predicted_durations: list   # exp(l) - 1 per phoneme, before the duration coefficient
    scaled_durations: list      # duration_coef * predicted, before rounding
    durations: list             # frames per phoneme after rounding and clamping
    predicted_pitch: list       # Hz, per phoneme (phoneme mode) or per frame (frame mode)
    applied_pitch: list
    predicted_energy: list
    applied_energy: list
    total_frames: int

    def to_json(self):
        return json.dumps(asdict(self), indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    def frame_values(self, key):
        """Per-frame curve of a pitch/energy field (expanded by durations in phoneme mode)."""
        values = np.asarray(getattr(self, key), dtype=np.float64)
        if values.size == self.total_frames and self.masking_mode == "frame":
            return values
        return np.repeat(values, self.durations)


def synthesize(phones, speaker_id, controls, model, stats=None, mode=None, pause_mode="stochastic"):
    """Synthesize one utterance; returns (MelSpectrogram, SynthesisReport).

    With ``controls.pause_insertion`` a seeded draw inserts PAUSE tokens
    first. Speech phonemes keep the durations predicted on the pause-free
    sequence; only the inserted pauses take durations from the expanded
    sequence, so pause insertion adds pause frames without retiming speech.
    ``pause_mode="deterministic"`` uses the rounded expected count instead
    of a binomial draw (slot choice stays seeded).
    """
    if pause_mode not in ("stochastic", "deterministic"):
        raise ValueError(f"unknown pause_mode {pause_mode!r}")
    if not isinstance(controls, SynthesisControls):
        controls = SynthesisControls(**controls)
    if len(phones) == 0:
        raise ValueError("cannot synthesize an empty phoneme sequence")
    try:
        spk = model.speaker_index(speaker_id)
    except KeyError:
        raise UnknownSpeakerError(f"unknown speaker {speaker_id!r}; known: {model.speakers}") from None

    seq, positions = PhonemeSequence(phones.tokens, phones.word_index), []
    if controls.pause_insertion:
        rng = np.random.default_rng(controls.seed)
        stats = SeverityPauseStats.default() if stats is None else stats
        draw = rng if pause_mode == "stochastic" else None
        k = min(pause_count(phones.n_words, controls.severity, stats, draw), len(phones.free_slots))
        seq, positions = insert_pauses(phones, k, rng)

    predicted = np.expm1(model.predict_log_durations(phones.ids, spk, controls.severity))
    if positions:
        expanded = np.expm1(model.predict_log_durations(seq.ids, spk, controls.severity))
        inserted = set(positions)
        source = iter(predicted)
        predicted = np.array([expanded[i] if i in inserted else next(source) for i in range(len(seq))])

    mel, ad = model.infer(seq.ids, spk, controls, mode=mode, duration_override=predicted)
    report = SynthesisReport(
        speaker=speaker_id,
        controls=controls.to_dict(),
        masking_mode=mode or model.config.masking_mode,
        phones=list(seq.tokens),
        word_index=list(seq.word_index),
        inserted_pause_positions=list(positions),
        predicted_durations=ad.predicted_durations[0].tolist(),
        scaled_durations=ad.scaled_durations[0].tolist(),
        durations=[int(d) for d in ad.durations[0]],
        predicted_pitch=ad.predicted_pitch[0].tolist(),
        applied_pitch=ad.applied_pitch[0].tolist(),
        predicted_energy=ad.predicted_energy[0].tolist(),
        applied_energy=ad.applied_energy[0].tolist(),
        total_frames=int(ad.durations[0].sum()),
    )
    if report.total_frames != mel.shape[0]:
        raise AssertionError("frame count mismatch between durations and mel")
    return MelSpectrogram(mel), report


__all__ = ["EmptyOutputError", "SynthesisReport", "UnknownSpeakerError", "synthesize", "PAUSE"]
