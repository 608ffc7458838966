"""Between-word pause statistics per severity and stochastic PAUSE insertion."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .corpus_io import N_SEVERITIES, check_severity
from .phonemes import PAUSE, PhonemeSequence

# between-word pauses per utterance for Normal, Low and Moderate speakers
TORGO_PAUSES_PER_UTTERANCE = (0.26, 0.84, 2.51)
# mean inter-word slots per utterance of the calibration sentence-length
# distribution (uniform 3..9 words), used when no corpus has been analyzed
CALIBRATION_LENGTH_RANGE = (3, 9)
DEFAULT_SLOTS_PER_UTTERANCE = (CALIBRATION_LENGTH_RANGE[0] + CALIBRATION_LENGTH_RANGE[1]) / 2 - 1
DEFAULT_PAUSE_MIN_MS = 150.0


@dataclass(frozen=True)
class SeverityStats:
    pauses_per_utterance: float
    slots_per_utterance: float

    @property
    def slot_probability(self):
        return float(min(1.0, max(0.0, self.pauses_per_utterance / self.slots_per_utterance)))


class SeverityPauseStats(dict):
    """Mapping severity -> SeverityStats."""

    @classmethod
    def default(cls):
        return cls({
            s: SeverityStats(p, DEFAULT_SLOTS_PER_UTTERANCE)
            for s, p in enumerate(TORGO_PAUSES_PER_UTTERANCE)
        })

    def probability(self, severity):
        return self[check_severity(severity)].slot_probability

    def to_json(self):
        return json.dumps(
            {str(s): {"pauses_per_utterance": st.pauses_per_utterance,
                      "slots_per_utterance": st.slots_per_utterance}
             for s, st in sorted(self.items())},
            indent=2,
        )

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        stats = cls()
        for key, val in raw.items():
            stats[check_severity(int(key))] = SeverityStats(
                float(val["pauses_per_utterance"]), float(val["slots_per_utterance"])
            )
        if sorted(stats) != list(range(N_SEVERITIES)):
            raise ValueError(f"pause stats must cover severities 0..2, got {sorted(stats)}")
        return stats

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def count_pauses(alignment, pause_min_ms=DEFAULT_PAUSE_MIN_MS):
    """Qualifying "sp" segments strictly between two different words."""
    n = 0
    for i, e in enumerate(alignment):
        if not e.is_silence or e.duration * 1000.0 < pause_min_ms - 1e-9:
            continue
        before = [a for a in alignment[:i] if not a.is_silence]
        after = [a for a in alignment[i + 1:] if not a.is_silence]
        if before and after and before[-1].word != after[0].word:
            n += 1
    return n


def count_slots(alignment):
    words = {e.word for e in alignment if not e.is_silence}
    return max(len(words) - 1, 0)


def estimate_stats(items, pause_min_ms=DEFAULT_PAUSE_MIN_MS):
    """``items`` yields (severity, alignment entries); returns per-severity averages."""
    pauses = {s: [] for s in range(N_SEVERITIES)}
    slots = {s: [] for s in range(N_SEVERITIES)}
    for severity, alignment in items:
        severity = check_severity(severity)
        pauses[severity].append(count_pauses(alignment, pause_min_ms))
        slots[severity].append(count_slots(alignment))
    stats = SeverityPauseStats()
    for s in range(N_SEVERITIES):
        if not pauses[s]:
            raise ValueError(f"no utterances for severity {s}")
        mean_slots = float(np.mean(slots[s]))
        if mean_slots <= 0:
            raise ValueError(f"severity {s}: utterances have no inter-word slots")
        stats[s] = SeverityStats(float(np.mean(pauses[s])), mean_slots)
    return stats


def pause_count(n_words, severity, stats=None, rng=None):
    """Number of pauses for a sentence; Binomial(n_words - 1, p) if ``rng`` is given, else the rounded mean."""
    if n_words < 1:
        raise ValueError("n_words must be >= 1")
    stats = SeverityPauseStats.default() if stats is None else stats
    n_slots = n_words - 1
    p = stats.probability(severity)
    if n_slots == 0:
        return 0
    if rng is None:
        k = int(np.floor(n_slots * p + 0.5))
    else:
        k = int(rng.binomial(n_slots, p))
    return min(max(k, 0), n_slots)


def insert_pauses(phones, k, rng):
    """Insert ``k`` PAUSE tokens at distinct free inter-word slots chosen uniformly.

    Returns the new sequence and the positions of the inserted tokens in it.
    """
    slots = phones.free_slots
    if k < 0 or k > len(slots):
        raise ValueError(f"cannot insert {k} pauses into {len(slots)} free inter-word slots")
    if k == 0:
        return PhonemeSequence(phones.tokens, phones.word_index), []
    chosen = set(int(i) for i in rng.choice(slots, size=k, replace=False))
    tokens, words, positions = [], [], []
    for i, (tok, w) in enumerate(zip(phones.tokens, phones.word_index)):
        tokens.append(tok)
        words.append(w)
        if i in chosen:
            positions.append(len(tokens))
            tokens.append(PAUSE)
            words.append(w)
    return PhonemeSequence(tokens, words), positions


class PauseInserter(BaseEstimator):
    """Estimator wrapper: ``fit`` estimates per-severity stats, ``transform`` inserts pauses.

    mode is "stochastic" (binomial count) or "deterministic" (rounded mean).
    Without ``fit`` the built-in per-severity averages are used.
    """

    def __init__(self, pause_min_ms=DEFAULT_PAUSE_MIN_MS, mode="stochastic"):
        self.pause_min_ms = pause_min_ms
        self.mode = mode

    def fit(self, X, y=None):
        """X: alignments, y: severities (or X: (severity, alignment) pairs with y None)."""
        items = X if y is None else zip(y, X)
        self.stats_ = estimate_stats(items, self.pause_min_ms)
        return self

    @property
    def stats(self):
        return getattr(self, "stats_", None) or SeverityPauseStats.default()

    def transform(self, X, severity, rng):
        if self.mode not in ("stochastic", "deterministic"):
            raise ValueError(f"unknown mode {self.mode!r}")
        out = []
        for phones in X:
            k = pause_count(phones.n_words, severity, self.stats, rng if self.mode == "stochastic" else None)
            k = min(k, len(phones.free_slots))
            out.append(insert_pauses(phones, k, rng)[0])
        return out
