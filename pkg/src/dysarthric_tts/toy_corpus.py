"""Deterministic procedural corpus standing in for a recorded dysarthric-speech database.

Speakers read a shared prompt list. Each phoneme gets a base duration
scaled by the speaker's severity multiplier, pauses land at inter-word
slots with a severity-dependent probability, and the waveform is a
harmonic (voiced) or noise (unvoiced) source whose F0 and amplitude are
fixed functions of (phoneme, speaker, severity). Mel frames are the
analysis of that waveform, so they agree with the alignment frame for
frame.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .audio import FrameParams, mel_spectrogram, n_samples_for, write_wav
from .corpus_io import (
    AlignmentEntry, MelSpectrogram, Utterance, save_alignment, save_manifest, write_mel,
)
from .phonemes import (
    INVENTORY, LEXICON, PAUSE, PHONE_TO_ID, SILENCE, VOWELS, PhonemeSequence, is_voiced,
    text_to_phonemes,
)

SPEAKER_PREFIX = ("C", "L", "M")  # control, low, moderate
MIN_PAUSE_FRAMES = 10
N_HARMONICS = 20


@dataclass
class ToyCorpusSpec:
    n_speakers_per_severity: int = 2
    n_utterances_per_speaker: int = 20
    sentence_length_range: tuple = (3, 7)
    severity_duration_multipliers: tuple = (1.0, 1.3, 1.8)
    severity_pause_rates: tuple = (0.06, 0.19, 0.56)
    base_seed: int = 0
    frame_params: FrameParams = field(default_factory=FrameParams)

    def __post_init__(self):
        self.sentence_length_range = tuple(int(v) for v in self.sentence_length_range)
        self.severity_duration_multipliers = tuple(float(v) for v in self.severity_duration_multipliers)
        self.severity_pause_rates = tuple(float(v) for v in self.severity_pause_rates)
        if isinstance(self.frame_params, dict):
            self.frame_params = FrameParams(**self.frame_params)
        if self.n_speakers_per_severity < 1 or self.n_utterances_per_speaker < 1:
            raise ValueError("need at least one speaker per severity and one utterance per speaker")
        lo, hi = self.sentence_length_range
        if not 1 <= lo <= hi:
            raise ValueError(f"bad sentence_length_range {self.sentence_length_range}")
        m = self.severity_duration_multipliers
        if len(m) != 3 or min(m) <= 0 or not m[0] <= m[1] <= m[2]:
            raise ValueError("duration multipliers must be 3 positive non-decreasing values")
        p = self.severity_pause_rates
        if len(p) != 3 or not all(0 <= v <= 1 for v in p) or not p[0] <= p[1] <= p[2]:
            raise ValueError("pause rates must be 3 values in [0, 1], non-decreasing")
        if not 0 <= self.base_seed < 2 ** 64:
            raise ValueError("base_seed must be a 64-bit unsigned integer")

    def to_dict(self):
        d = asdict(self)
        d["sentence_length_range"] = list(self.sentence_length_range)
        d["severity_duration_multipliers"] = list(self.severity_duration_multipliers)
        d["severity_pause_rates"] = list(self.severity_pause_rates)
        return d


@dataclass
class ToyCorpus:
    root: Path
    utterances: list
    alignments: dict
    mels: dict

    @property
    def manifest_path(self):
        return self.root / "manifest.jsonl"


def _stable_unit(*key):
    """Deterministic value in [0, 1) from a key (independent of PYTHONHASHSEED)."""
    h = hashlib.blake2b(repr(key).encode(), digest_size=8).digest()
    return int.from_bytes(h, "little") / 2 ** 64


def base_duration(phone):
    """Frames at the normal speaking rate."""
    u = _stable_unit("dur", phone)
    if phone in VOWELS:
        return 8.0 + 4.0 * u
    return 4.0 + 3.0 * u


def speaker_ids(n_per_severity):
    return [(f"{SPEAKER_PREFIX[s]}{i + 1:02d}", s) for s in range(3) for i in range(n_per_severity)]


def speaker_traits(speaker, severity):
    u = _stable_unit("spk", speaker)
    female = _stable_unit("sex", speaker) < 0.5
    return {
        "f0": (185.0 if female else 110.0) * (0.9 + 0.2 * u),
        "amplitude": 0.25 + 0.1 * _stable_unit("amp", speaker),
        "tilt": 3.0 + 3.0 * _stable_unit("tilt", speaker),
        "pause_frames": 12.0 + 8.0 * _stable_unit("pause", speaker),
    }


def phone_pitch(phone, speaker, severity):
    """Target F0 (Hz) for a voiced phoneme; 0 otherwise."""
    if not is_voiced(phone):
        return 0.0
    f0 = speaker_traits(speaker, severity)["f0"]
    offset = 2.0 * _stable_unit("pitch", phone) - 1.0
    # severity flattens intonation slightly
    return f0 * (1.0 + (0.12 - 0.03 * severity) * offset)


def phone_amplitude(phone, speaker, severity):
    if phone == PAUSE:
        return 0.0
    base = speaker_traits(speaker, severity)["amplitude"]
    if phone in VOWELS:
        scale = 0.8 + 0.2 * _stable_unit("amp", phone)
    elif is_voiced(phone):
        scale = 0.45 + 0.2 * _stable_unit("amp", phone)
    else:
        scale = 0.25 + 0.1 * _stable_unit("amp", phone)
    return base * scale * (1.0 - 0.08 * severity)


def _formants(phone):
    return 300.0 + 600.0 * _stable_unit("f1", phone), 900.0 + 1500.0 * _stable_unit("f2", phone)


def sample_prompts(n, rng, length_range=(3, 7), lexicon=None):
    words = sorted(LEXICON if lexicon is None else lexicon)
    lo, hi = length_range
    return [" ".join(rng.choice(words, size=int(rng.integers(lo, hi + 1)))) for _ in range(n)]


def plan_utterance(phones, speaker, severity, spec, rng):
    """Per-token frame durations with pauses inserted; returns (PhonemeSequence, durations)."""
    mult = spec.severity_duration_multipliers[severity]
    p_pause = spec.severity_pause_rates[severity]
    pause_mean = speaker_traits(speaker, severity)["pause_frames"]
    tokens, words, durs = [], [], []
    for i, (tok, w) in enumerate(zip(phones.tokens, phones.word_index)):
        tokens.append(tok)
        words.append(w)
        durs.append(max(1, int(round(base_duration(tok) * mult * rng.uniform(0.9, 1.1)))))
        if i + 1 < len(phones) and phones.word_index[i + 1] != w and rng.random() < p_pause:
            tokens.append(PAUSE)
            words.append(w)
            durs.append(max(MIN_PAUSE_FRAMES, int(round(pause_mean * rng.uniform(0.8, 1.2)))))
    return PhonemeSequence(tokens, words), np.asarray(durs, dtype=np.int64)


def render_audio(phones, durations, speaker, severity, params, rng):
    """Waveform whose analysis frame t is centred on the phoneme owning frame t."""
    n_frames = int(durations.sum())
    n = n_samples_for(n_frames, params)
    frame_owner = np.repeat(np.arange(len(durations)), durations)
    frame_of_sample = np.clip(
        np.floor((np.arange(n) - params.win_length / 2) / params.hop_length + 0.5).astype(np.int64),
        0, n_frames - 1,
    )
    owner = frame_owner[frame_of_sample]

    f0_tab = np.array([phone_pitch(t, speaker, severity) for t in phones.tokens])
    amp_tab = np.array([phone_amplitude(t, speaker, severity) for t in phones.tokens])
    voiced_tab = np.array([is_voiced(t) for t in phones.tokens])
    f1_tab = np.array([_formants(t)[0] for t in phones.tokens])
    f2_tab = np.array([_formants(t)[1] for t in phones.tokens])
    tilt = speaker_traits(speaker, severity)["tilt"]

    # short moving average keeps amplitude steps click-free
    kernel = np.ones(64) / 64
    amp = np.convolve(amp_tab[owner], kernel, mode="same")
    f0 = f0_tab[owner]
    voiced = voiced_tab[owner]

    phase = 2 * np.pi * np.cumsum(np.where(voiced, f0, 0.0)) / params.sample_rate
    # harmonic weights depend only on the phoneme, so build them per token
    k = np.arange(1, N_HARMONICS + 1)
    hfreq = f0_tab[:, None] * k[None, :]
    weights = (
        np.exp(-k[None, :] / tilt)
        + np.exp(-((hfreq - f1_tab[:, None]) ** 2) / (2 * 150.0 ** 2))
        + 0.5 * np.exp(-((hfreq - f2_tab[:, None]) ** 2) / (2 * 250.0 ** 2))
    )
    weights = np.where(hfreq < params.sample_rate / 2 - 200, weights, 0.0)
    weights /= np.maximum(weights.sum(axis=1, keepdims=True), 1e-12)
    # sin(k*phase) by the Chebyshev recurrence sin((k+1)x) = 2cos(x)sin(kx) - sin((k-1)x)
    two_cos = 2 * np.cos(phase)
    prev, cur = np.zeros(n), np.sin(phase)
    harmonic = np.zeros(n)
    for j in range(N_HARMONICS):
        harmonic += weights[owner, j] * cur
        prev, cur = cur, two_cos * cur - prev

    noise = rng.standard_normal(n)
    noise = np.diff(noise, prepend=0.0) * 0.35

    x = amp * np.where(voiced, harmonic, noise)
    x = np.clip(x, -1.0, 1.0)
    # quantize as a 16-bit file would
    return np.round(x * 32767.0) / 32767.0


def _utterance_seed(base_seed, utt_id):
    h = hashlib.blake2b(f"{base_seed}:{utt_id}".encode(), digest_size=8).digest()
    return int.from_bytes(h, "little")


def generate_toy_corpus(spec, out_dir, write_audio=True):
    """Write manifest.jsonl, alignments/, mels/ (and wavs/) under ``out_dir``."""
    out = Path(out_dir)
    for sub in ("alignments", "mels", "wavs"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    params = spec.frame_params
    prompt_rng = np.random.default_rng(spec.base_seed)
    prompts = sample_prompts(spec.n_utterances_per_speaker, prompt_rng, spec.sentence_length_range)

    utterances, alignments, mels = [], {}, {}
    for speaker, severity in speaker_ids(spec.n_speakers_per_severity):
        for j, text in enumerate(prompts):
            utt_id = f"{speaker}_{j:04d}"
            rng = np.random.default_rng(_utterance_seed(spec.base_seed, utt_id))
            phones, durs = plan_utterance(text_to_phonemes(text), speaker, severity, spec, rng)

            bounds = np.concatenate([[0], np.cumsum(durs)])
            entries = [
                AlignmentEntry(
                    SILENCE if tok == PAUSE else tok,
                    int(bounds[i]) * params.hop_length / params.sample_rate,
                    int(bounds[i + 1]) * params.hop_length / params.sample_rate,
                    w,
                )
                for i, (tok, w) in enumerate(zip(phones.tokens, phones.word_index))
            ]
            audio = render_audio(phones, durs, speaker, severity, params, rng)
            mel = MelSpectrogram(mel_spectrogram(audio, params).astype(np.float32))
            assert mel.n_frames == durs.sum()

            rel_align, rel_mel = f"alignments/{utt_id}.jsonl", f"mels/{utt_id}.mel"
            rel_wav = f"wavs/{utt_id}.wav" if write_audio else None
            save_alignment(entries, out / rel_align)
            write_mel(mel, out / rel_mel)
            if write_audio:
                write_wav(out / rel_wav, audio, params.sample_rate)
            utterances.append(Utterance(utt_id, speaker, severity, text, phones, rel_align, rel_mel, rel_wav))
            alignments[utt_id] = entries
            mels[utt_id] = mel
    save_manifest(utterances, out / "manifest.jsonl")
    return ToyCorpus(out, utterances, alignments, mels)


