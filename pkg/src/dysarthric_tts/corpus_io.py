"""On-disk artifacts: JSON-lines manifests and alignments, binary mel files."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import N_MELS
from .phonemes import PAUSE, SILENCE, PhonemeSequence

SEVERITY_NAMES = ("Normal", "Low", "Moderate")
N_SEVERITIES = 3

MEL_MAGIC = b"MELF"
MEL_VERSION = 1
_MEL_HEADER = struct.Struct("<4sHII")

MANIFEST_KEYS = ("id", "speaker", "severity", "text", "phones", "word_index", "alignment", "mel", "audio")


class CorpusFormatError(ValueError):
    pass


class ManifestParseError(CorpusFormatError):
    def __init__(self, path, line_no, msg):
        super().__init__(f"{path}:{line_no}: {msg}")
        self.line_no = line_no


class DuplicateIdError(CorpusFormatError):
    pass


class SeverityRangeError(CorpusFormatError):
    pass


class AlignmentError(CorpusFormatError):
    pass


class OverlapError(AlignmentError):
    pass


class NegativeTimeError(AlignmentError):
    pass


class WordOrderError(AlignmentError):
    pass


class MelFormatError(CorpusFormatError):
    pass


class BadMagicError(MelFormatError):
    pass


class DimensionMismatchError(MelFormatError):
    pass


class NonFiniteError(MelFormatError):
    pass


def check_severity(severity):
    if isinstance(severity, bool) or not isinstance(severity, (int, np.integer)) or not 0 <= severity < N_SEVERITIES:
        raise SeverityRangeError(f"severity must be one of 0, 1, 2, got {severity!r}")
    return int(severity)


@dataclass
class Utterance:
    id: str
    speaker_id: str
    severity: int
    text: str
    phones: PhonemeSequence
    alignment_path: str | None = None
    mel_path: str | None = None
    audio_path: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.severity = check_severity(self.severity)
        if self.text.strip() and len(self.phones) == 0:
            raise CorpusFormatError(f"utterance {self.id}: non-empty text without phones")

    def to_record(self):
        rec = {
            "id": self.id,
            "speaker": self.speaker_id,
            "severity": self.severity,
            "text": self.text,
            "phones": list(self.phones.tokens),
            "word_index": list(self.phones.word_index),
            "alignment": self.alignment_path,
            "mel": self.mel_path,
            "audio": self.audio_path,
        }
        rec.update(self.extra)
        return rec

    @classmethod
    def from_record(cls, rec):
        missing = [k for k in ("id", "speaker", "severity", "text", "phones", "word_index") if k not in rec]
        if missing:
            raise CorpusFormatError(f"missing keys {missing}")
        extra = {k: v for k, v in rec.items() if k not in MANIFEST_KEYS}
        if str(rec["text"]).strip() and not rec["phones"]:
            raise CorpusFormatError(f"utterance {rec['id']!r} has text but no phones")
        return cls(
            id=str(rec["id"]),
            speaker_id=str(rec["speaker"]),
            severity=rec["severity"],
            text=rec["text"],
            phones=PhonemeSequence(rec["phones"], rec["word_index"]),
            alignment_path=rec.get("alignment"),
            mel_path=rec.get("mel"),
            audio_path=rec.get("audio"),
            extra=extra,
        )


def load_manifest(path):
    path = Path(path)
    utterances, seen = [], set()
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestParseError(path, line_no, f"invalid JSON: {e.msg}") from None
            if not isinstance(rec, dict):
                raise ManifestParseError(path, line_no, "record is not a JSON object")
            try:
                utt = Utterance.from_record(rec)
            except SeverityRangeError as e:
                raise SeverityRangeError(f"{path}:{line_no}: {e}") from None
            except (CorpusFormatError, ValueError, TypeError) as e:
                raise ManifestParseError(path, line_no, str(e)) from None
            if utt.id in seen:
                raise DuplicateIdError(f"{path}:{line_no}: duplicate utterance id {utt.id!r}")
            seen.add(utt.id)
            utterances.append(utt)
    return utterances


def dump_record(rec):
    return json.dumps(rec, ensure_ascii=False, sort_keys=False, separators=(", ", ": "))


def save_manifest(utterances, path):
    seen = set()
    lines = []
    for u in utterances:
        if u.id in seen:
            raise DuplicateIdError(f"duplicate utterance id {u.id!r}")
        seen.add(u.id)
        lines.append(dump_record(u.to_record()))
    Path(path).write_text("".join(l + "\n" for l in lines), encoding="utf-8")


@dataclass(frozen=True)
class AlignmentEntry:
    phone: str
    start: float
    end: float
    word: int

    @property
    def duration(self):
        return self.end - self.start

    @property
    def is_silence(self):
        return self.phone == SILENCE


def validate_alignment(entries):
    prev = None
    for i, e in enumerate(entries):
        if e.start < 0 or e.end < 0:
            raise NegativeTimeError(f"entry {i}: negative time ({e.start}, {e.end})")
        if not e.end > e.start:
            raise AlignmentError(f"entry {i}: end {e.end} not after start {e.start}")
        if prev is not None:
            if e.start < prev.start:
                raise AlignmentError(f"entry {i}: entries not sorted by start")
            if prev.end > e.start:
                raise OverlapError(f"entry {i - 1} ends at {prev.end} after entry {i} starts at {e.start}")
            if e.word < prev.word:
                raise WordOrderError(f"entry {i}: word index {e.word} decreases from {prev.word}")
        prev = e
    return entries


def load_alignment(path):
    entries = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                entries.append(AlignmentEntry(str(rec["phone"]), float(rec["start"]), float(rec["end"]), int(rec["word"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ManifestParseError(path, line_no, f"bad alignment record: {e}") from None
    return validate_alignment(entries)


def save_alignment(entries, path):
    validate_alignment(entries)
    lines = [dump_record({"phone": e.phone, "start": e.start, "end": e.end, "word": e.word}) for e in entries]
    Path(path).write_text("".join(l + "\n" for l in lines), encoding="utf-8")


def alignment_phones(entries):
    """PhonemeSequence view of an alignment ("sp" entries become PAUSE)."""
    return PhonemeSequence([PAUSE if e.is_silence else e.phone for e in entries], [e.word for e in entries])


@dataclass
class MelSpectrogram:
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2 or self.data.shape[1] != N_MELS:
            raise DimensionMismatchError(f"mel must be (n_frames, {N_MELS}), got {self.data.shape}")
        if self.data.shape[0] < 1:
            raise DimensionMismatchError("mel must have at least one frame")

    @property
    def n_frames(self):
        return self.data.shape[0]

    @property
    def n_mels(self):
        return self.data.shape[1]


def mel_bytes(mel):
    data = np.asarray(mel.data if isinstance(mel, MelSpectrogram) else mel)
    if not np.all(np.isfinite(data)):
        raise NonFiniteError("mel contains non-finite values")
    if data.ndim != 2:
        raise DimensionMismatchError(f"mel must be 2-D, got shape {data.shape}")
    payload = np.ascontiguousarray(data, dtype="<f4").tobytes()
    return _MEL_HEADER.pack(MEL_MAGIC, MEL_VERSION, data.shape[0], data.shape[1]) + payload


def write_mel(mel, path):
    Path(path).write_bytes(mel_bytes(mel))


def parse_mel(buf, source="<bytes>"):
    if len(buf) < _MEL_HEADER.size:
        raise MelFormatError(f"{source}: truncated header")
    magic, version, n_frames, n_mels = _MEL_HEADER.unpack_from(buf)
    if magic != MEL_MAGIC:
        raise BadMagicError(f"{source}: bad magic {magic!r}")
    if version != MEL_VERSION:
        raise MelFormatError(f"{source}: unsupported version {version}")
    expected = n_frames * n_mels * 4
    if len(buf) - _MEL_HEADER.size != expected:
        raise DimensionMismatchError(
            f"{source}: header says {n_frames}x{n_mels} but payload has {len(buf) - _MEL_HEADER.size} bytes"
        )
    data = np.frombuffer(buf, dtype="<f4", offset=_MEL_HEADER.size).reshape(n_frames, n_mels).astype(np.float32)
    return MelSpectrogram(data)


def read_mel(path):
    return parse_mel(Path(path).read_bytes(), source=str(path))


def resolve(base, rel):
    """Manifest paths are relative to the manifest's directory."""
    if rel is None:
        return None
    p = Path(rel)
    return p if p.is_absolute() else Path(base) / p


def utterance_duration(entries):
    return math.fsum(e.duration for e in entries)
