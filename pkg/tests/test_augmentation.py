import hashlib
import json
import random
from collections import Counter

import numpy as np
import pytest

from dysarthric_tts.augmentation import GridSizeError, build_grid, plan_indices, run_plan, sample_plan
from dysarthric_tts.corpus_io import Utterance, load_manifest, read_mel
from dysarthric_tts.model import SynthesisControls
from dysarthric_tts.phonemes import PAUSE, PhonemeSequence
from dysarthric_tts.synthesis import synthesize


def test_presets_exact_values():
    e1, e2 = build_grid("exp1"), build_grid("exp2")
    assert (e1.pitch, e1.energy, e1.duration, e1.severity, e1.pause_insertion) == ((1.0,), (1.0,), (1.0,), (0, 1, 2), True)
    assert e2.pitch == (0.1, 0.6, 1.2, 1.75)
    assert e2.energy == (0.1, 1.0, 2.0)
    assert e2.duration == (1.0, 1.3, 1.6, 1.8)
    assert e2.severity == (0, 1, 2) and e2.pause_insertion
    assert len(e1) == 3 and len(e2) == 144 == len(e2.combinations())


def test_custom_grid_range_checked():
    with pytest.raises(ValueError):
        build_grid("custom", pitch=[2.5])
    with pytest.raises(ValueError):
        build_grid("custom", severity=[3])
    with pytest.raises(ValueError):
        build_grid("custom", energy=[])
    with pytest.raises(ValueError):
        build_grid("exp3")
    assert len(build_grid("custom", pitch=[0.5, 1.5], severity=[1])) == 2


def test_exp1_times_three_is_exhaustive():
    plan = sample_plan(build_grid("exp1"), ["a", "b"], 3, base_seed=0)
    for entries in plan.by_source().values():
        assert sorted(e.controls.severity for e in entries) == [0, 1, 2]


def test_exp2_times_ten_distinct_and_repeatable():
    ids = [f"u{i}" for i in range(20)]
    a = sample_plan(build_grid("exp2"), ids, 10, base_seed=4)
    b = sample_plan(build_grid("exp2"), ids, 10, base_seed=4)
    assert a.entries == b.entries
    for entries in a.by_source().values():
        assert len({e.combination for e in entries}) == 10
    c = sample_plan(build_grid("exp2"), ids, 10, base_seed=5)
    assert a.entries != c.entries


def test_multiplier_above_grid_size():
    with pytest.raises(GridSizeError):
        sample_plan(build_grid("exp1"), ["a"], 4)


def _selection_frequency(n, seed=0):
    chosen = plan_indices([f"u{i}" for i in range(n)], 144, 10, base_seed=seed)
    return np.bincount(np.concatenate(list(chosen.values())), minlength=144) / n


def test_uniform_selection_frequency():
    # each point's count is Binomial(n, 10/144); n = 4e4 puts the 0.005 band near 4 sigma
    freq = _selection_frequency(40_000)
    assert np.abs(freq - 10 / 144).max() <= 0.005


def test_uniform_selection_chi_square():
    n, p = 10_000, 10 / 144
    freq = _selection_frequency(n, seed=1)
    stat = float(((freq - p) ** 2 / (p * (1 - p) / n)).sum())
    df, z = 143, 3.09  # Wilson-Hilferty upper 0.999 quantile
    crit = df * (1 - 2 / (9 * df) + z * np.sqrt(2 / (9 * df))) ** 3
    assert stat < crit


def test_plan_is_order_independent():
    ids = [f"u{i}" for i in range(30)]
    shuffled = ids[:]
    random.Random(3).shuffle(shuffled)
    a = sample_plan(build_grid("exp2"), ids, 10, base_seed=2).by_source()
    b = sample_plan(build_grid("exp2"), shuffled, 10, base_seed=2).by_source()
    assert a == b


def test_entry_seeds_differ():
    plan = sample_plan(build_grid("exp1"), ["a", "b"], 3, base_seed=0)
    assert len({e.controls.seed for e in plan.entries}) == 6


def _tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode() + p.read_bytes())
    return h.hexdigest()


def test_run_plan_counts_and_idempotence(small_corpus, trained_small, tmp_path):
    corpus = small_corpus.utterances[:2]
    plan = sample_plan(build_grid("exp1"), corpus, 3, base_seed=1)
    r1 = run_plan(plan, corpus, trained_small.model, tmp_path / "a", source_root=small_corpus.root)
    assert (r1.n_original, r1.n_synthetic, r1.failures) == (2, 6, [])
    records = load_manifest(r1.manifest_path)
    assert len(records) == 8
    assert [u.extra["synthetic"] for u in records] == [False] * 2 + [True] * 6
    assert read_mel(tmp_path / "a" / records[0].mel_path).n_frames > 0  # rebased original path resolves
    first = _tree_digest(tmp_path / "a")
    run_plan(plan, corpus, trained_small.model, tmp_path / "a", source_root=small_corpus.root)
    assert _tree_digest(tmp_path / "a") == first


def test_stored_controls_reproduce_mel(small_corpus, trained_small, tmp_path):
    corpus = small_corpus.utterances[:1]
    plan = sample_plan(build_grid("exp2"), corpus, 4, base_seed=9)
    r = run_plan(plan, corpus, trained_small.model, tmp_path)
    src = {u.id: u for u in corpus}
    for u in load_manifest(r.manifest_path)[1:]:
        c = SynthesisControls.from_dict(u.extra["controls"])
        mel, _ = synthesize(src[u.extra["source_id"]].phones, u.speaker_id, c, trained_small.model)
        assert mel.data.tobytes() == read_mel(tmp_path / u.mel_path).data.tobytes()


def test_failed_entries_are_reported(small_corpus, trained_small, tmp_path):
    spk = trained_small.model.speakers[0]
    bad = Utterance("silent", spk, 0, "", PhonemeSequence([PAUSE], [0]))
    corpus = [small_corpus.utterances[0], bad]
    grid = build_grid("custom", duration=[0.0], pause_insertion=False)
    plan = sample_plan(grid, corpus, 1, base_seed=0)
    r = run_plan(plan, corpus, trained_small.model, tmp_path)
    assert r.partial and [f["source_id"] for f in r.failures] == ["silent"]
    assert "EmptyOutputError" in r.failures[0]["error"]
    ids = [u.id for u in load_manifest(r.manifest_path)]
    assert len(ids) == 2 + 1 and "silent_syn000" not in ids
    assert json.loads((tmp_path / "failures.json").read_text()) == r.failures


def test_missing_source_rejected(small_corpus, trained_small, tmp_path):
    plan = sample_plan(build_grid("exp1"), ["ghost"], 1)
    with pytest.raises(KeyError):
        run_plan(plan, small_corpus.utterances[:1], trained_small.model, tmp_path)
