"""Coefficient grids, per-utterance sampling plans and batch synthesis into a manifest."""

from __future__ import annotations

import itertools
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_int, check_real, stable_seed
from .audio import FrameParams, write_wav
from .corpus_io import Utterance, dump_record, resolve, write_mel
from .model import SynthesisControls
from .synthesis import synthesize

log = logging.getLogger(__name__)

COEF_RANGE = (0.0, 2.0)

PRESETS = {
    "exp1": dict(pitch=[1.0], energy=[1.0], duration=[1.0], severity=[0, 1, 2], pause_insertion=True),
    "exp2": dict(
        pitch=[0.1, 0.6, 1.2, 1.75],
        energy=[0.1, 1.0, 2.0],
        duration=[1.0, 1.3, 1.6, 1.8],
        severity=[0, 1, 2],
        pause_insertion=True,
    ),
}


class GridSizeError(ValueError):
    pass


@dataclass(frozen=True)
class CoefficientGrid:
    pitch: tuple
    energy: tuple
    duration: tuple
    severity: tuple
    pause_insertion: bool = True

    def __post_init__(self):
        for name in ("pitch", "energy", "duration"):
            values = tuple(check_real(f"{name} coefficient", v, *COEF_RANGE) for v in getattr(self, name))
            if not values:
                raise ValueError(f"{name} list must be non-empty")
            object.__setattr__(self, name, values)
        sev = tuple(check_int("severity", s, 0, 2) for s in self.severity)
        if not sev:
            raise ValueError("severity list must be non-empty")
        object.__setattr__(self, "severity", sev)
        object.__setattr__(self, "pause_insertion", bool(self.pause_insertion))

    def combinations(self):
        """(pitch, energy, duration, severity) tuples in a fixed product order."""
        return list(itertools.product(self.pitch, self.energy, self.duration, self.severity))

    def __len__(self):
        return len(self.pitch) * len(self.energy) * len(self.duration) * len(self.severity)

    def to_dict(self):
        return {"pitch": list(self.pitch), "energy": list(self.energy), "duration": list(self.duration),
                "severity": list(self.severity), "pause_insertion": self.pause_insertion}


def build_grid(preset="exp1", **custom):
    """A preset name, or ``"custom"`` with pitch/energy/duration/severity lists."""
    if preset in PRESETS:
        if custom:
            raise ValueError("keyword lists are only accepted with preset='custom'")
        return CoefficientGrid(**PRESETS[preset])
    if preset != "custom":
        raise ValueError(f"unknown preset {preset!r}; choose exp1, exp2 or custom")
    base = dict(pitch=[1.0], energy=[1.0], duration=[1.0], severity=[0, 1, 2], pause_insertion=True)
    unknown = set(custom) - set(base)
    if unknown:
        raise ValueError(f"unknown grid keys {sorted(unknown)}")
    return CoefficientGrid(**{**base, **custom})


@dataclass(frozen=True)
class PlanEntry:
    source_id: str
    output_id: str
    combination: int
    controls: SynthesisControls


@dataclass
class AugmentationPlan:
    entries: list
    multiplier: int
    base_seed: int
    grid: CoefficientGrid = None

    def by_source(self):
        out = {}
        for e in self.entries:
            out.setdefault(e.source_id, []).append(e)
        return out


def _uid(utt):
    return utt.id if isinstance(utt, Utterance) else str(utt)


def plan_indices(corpus, n_combinations, multiplier, base_seed=0):
    """Sorted grid indices chosen for each utterance, keyed by id."""
    multiplier = check_int("multiplier", multiplier, 1)
    if multiplier > n_combinations:
        raise GridSizeError(f"multiplier {multiplier} exceeds grid size {n_combinations}")
    out = {}
    for utt in corpus:
        uid = _uid(utt)
        rng = np.random.default_rng(stable_seed("plan", int(base_seed), uid))
        out[uid] = np.sort(rng.choice(n_combinations, size=multiplier, replace=False))
    return out


def sample_plan(grid, corpus, multiplier, base_seed=0):
    """Draw ``multiplier`` distinct grid points per utterance, uniformly without replacement.

    Each utterance has its own generator keyed by (base_seed, utterance id),
    so the plan does not depend on corpus order.
    """
    combos = grid.combinations()
    entries = []
    for uid, chosen in plan_indices(corpus, len(combos), multiplier, base_seed).items():
        for c in chosen.tolist():
            pitch, energy, duration, severity = combos[c]
            controls = SynthesisControls(
                pitch_coef=pitch, energy_coef=energy, duration_coef=duration, severity=severity,
                pause_insertion=grid.pause_insertion, seed=stable_seed("entry", int(base_seed), uid, c),
            )
            entries.append(PlanEntry(uid, f"{uid}_syn{c:03d}", c, controls))
    return AugmentationPlan(entries, int(multiplier), int(base_seed), grid)


@dataclass
class AugmentResult:
    manifest_path: Path
    n_original: int
    n_synthetic: int
    failures: list = field(default_factory=list)

    @property
    def partial(self):
        return bool(self.failures)


def _rebase(path, source_root, out_dir):
    if path is None or source_root is None:
        return path
    return os.path.relpath(resolve(source_root, path), out_dir)


def run_plan(plan, corpus, model, out_dir, source_root=None, stats=None, write_audio=False,
             frame_params=FrameParams(), vocoder_iters=32, pause_mode="stochastic"):
    """Synthesize every plan entry and write ``out_dir/manifest.jsonl``.

    Originals come first with ``synthetic: false`` (paths rebased onto
    ``out_dir`` when ``source_root`` is given), then each successful entry in
    plan order. Failed entries go to ``failures.json`` and are left out of
    the manifest. Re-running with the same inputs rewrites identical bytes.
    """
    from .vocoder import griffin_lim

    out_dir = Path(out_dir)
    for sub in ("mels", "reports") + (("wavs",) if write_audio else ()):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    by_id = {u.id: u for u in corpus}
    missing = sorted({e.source_id for e in plan.entries} - set(by_id))
    if missing:
        raise KeyError(f"plan references utterances missing from the corpus: {missing[:5]}")

    records = []
    for u in corpus:
        rec = u.to_record()
        for key in ("alignment", "mel", "audio"):
            rec[key] = _rebase(rec[key], source_root, out_dir)
        rec["synthetic"] = False
        records.append(rec)
    n_original = len(records)

    failures = []
    for e in plan.entries:
        src = by_id[e.source_id]
        try:
            mel, report = synthesize(src.phones, src.speaker_id, e.controls, model, stats, pause_mode=pause_mode)
        except Exception as exc:  # collected per entry; the run continues
            failures.append({"id": e.output_id, "source_id": e.source_id,
                             "error": f"{type(exc).__name__}: {exc}"})
            log.warning("entry %s failed: %s", e.output_id, exc)
            continue
        write_mel(mel, out_dir / "mels" / f"{e.output_id}.mel")
        report.save(out_dir / "reports" / f"{e.output_id}.json")
        audio = None
        if write_audio:
            audio = f"wavs/{e.output_id}.wav"
            y = griffin_lim(mel.data, frame_params, n_iters=vocoder_iters, seed=e.controls.seed % 2 ** 32)
            write_wav(out_dir / audio, y, frame_params.sample_rate)
        syn = Utterance(
            id=e.output_id, speaker_id=src.speaker_id, severity=e.controls.severity, text=src.text,
            phones=type(src.phones)(report.phones, report.word_index),
            alignment_path=None, mel_path=f"mels/{e.output_id}.mel", audio_path=audio,
            extra={"synthetic": True, "controls": e.controls.to_dict(), "source_id": e.source_id,
                   "report": f"reports/{e.output_id}.json"},
        )
        records.append(syn.to_record())

    manifest = out_dir / "manifest.jsonl"
    manifest.write_text("".join(dump_record(r) + "\n" for r in records), encoding="utf-8")
    (out_dir / "failures.json").write_text(json.dumps(failures, indent=2) + "\n", encoding="utf-8")
    return AugmentResult(manifest, n_original, len(records) - n_original, failures)
