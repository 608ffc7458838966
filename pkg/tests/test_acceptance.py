"""Acceptance suite: one PASS/FAIL line per criterion, printed in the pytest terminal summary.

Run alone with ``pytest tests/test_acceptance.py``; the lines also appear at
the end of a full ``pytest -v`` run.
"""

import hashlib
import time

import numpy as np
import pytest

from dysarthric_tts.augmentation import build_grid, run_plan, sample_plan
from dysarthric_tts.corpus_io import load_manifest, mel_bytes, read_mel, save_manifest, write_mel
from dysarthric_tts.diagnostics import model_gradcheck, primitive_gradchecks
from dysarthric_tts.model import AcousticModel, ModelConfig, SynthesisControls, expansion_matrix
from dysarthric_tts.nn import no_grad
from dysarthric_tts.nn.checkpoint import load_checkpoint
from dysarthric_tts.pause import (
    CALIBRATION_LENGTH_RANGE, TORGO_PAUSES_PER_UTTERANCE, PauseInserter, SeverityPauseStats,
)
from dysarthric_tts.phonemes import text_to_phonemes
from dysarthric_tts.plotting import plot_panels
from dysarthric_tts.synthesis import SynthesisReport, synthesize
from dysarthric_tts.toy_corpus import ToyCorpusSpec, generate_toy_corpus, sample_prompts
from dysarthric_tts.trainer import (
    TrainConfig, build_model, evaluate, load_examples, load_model, make_batch, save_model, train,
)

pytestmark = pytest.mark.slow

RESULTS = {}

# compact configuration that trains in about two CPU minutes
COMPACT_MODEL = dict(hidden=64, n_heads=2, ff_filter=128, n_encoder_blocks=2, n_decoder_blocks=2, speaker_dropout=0.3)
COMPACT_TRAIN = dict(epochs=30, batch_size=8, seed=0)


def record(n, name, checks, detail):
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    RESULTS[n] = f"criterion {n} {name}: {'PASS' if ok else 'FAIL'} ({detail})" + (f" failed: {failed}" if failed else "")
    assert ok, RESULTS[n]


def _digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode() + b"\0" + p.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def toy_corpus(tmp_path_factory):
    spec = ToyCorpusSpec(n_speakers_per_severity=3, n_utterances_per_speaker=20, base_seed=1)
    return generate_toy_corpus(spec, tmp_path_factory.mktemp("toy_accept"))


@pytest.fixture(scope="module")
def compact(toy_corpus, tmp_path_factory):
    examples, speakers = load_examples(toy_corpus.manifest_path)
    t0 = time.perf_counter()
    result = train(ModelConfig(**COMPACT_MODEL), TrainConfig(**COMPACT_TRAIN), examples, speakers,
                   out_dir=tmp_path_factory.mktemp("compact"))
    return result, speakers, time.perf_counter() - t0


def test_criterion_1_pause_statistics():
    t0 = time.perf_counter()
    n = 10_000
    lo, hi = CALIBRATION_LENGTH_RANGE
    rng = np.random.default_rng(2024)
    sentences = [text_to_phonemes(p) for p in sample_prompts(n, rng, (lo, hi))]
    inserter = PauseInserter(mode="stochastic")
    means = []
    for severity in range(3):
        out = inserter.transform(sentences, severity, rng)
        means.append(float(np.mean([len(b) - len(a) for a, b in zip(sentences, out)])))
    elapsed = time.perf_counter() - t0
    targets = TORGO_PAUSES_PER_UTTERANCE
    rel = [abs(m - t) / t for m, t in zip(means, targets)]
    ratios = [means[1] / means[0], means[2] / means[0]]
    want = [targets[1] / targets[0], targets[2] / targets[0]]
    checks = {
        "means within 5%": max(rel) <= 0.05,
        "ratios within 5%": all(abs(r - w) / w <= 0.05 for r, w in zip(ratios, want)),
        "runtime < 5 s": elapsed < 5.0,
    }
    record(1, "pause statistics", checks,
           f"means {[round(m, 3) for m in means]} vs {list(targets)}, max rel err {max(rel):.3f}, "
           f"ratios {ratios[0]:.2f}x {ratios[1]:.2f}x, {elapsed:.2f} s")


def test_criterion_2_grid_fidelity(tmp_path):
    t0 = time.perf_counter()
    corpus = generate_toy_corpus(ToyCorpusSpec(n_speakers_per_severity=2, n_utterances_per_speaker=17, base_seed=2),
                                 tmp_path / "toy", write_audio=False).utterances[:100]
    gen_time = time.perf_counter() - t0
    t0 = time.perf_counter()
    e1, e2 = build_grid("exp1"), build_grid("exp2")
    p1, p2 = sample_plan(e1, corpus, 3, base_seed=0), sample_plan(e2, corpus, 10, base_seed=0)
    plan_time = time.perf_counter() - t0
    model = AcousticModel(ModelConfig(hidden=16, n_heads=2, ff_filter=16, n_encoder_blocks=1, n_decoder_blocks=1,
                                      n_speakers=6), seed=0, speakers=sorted({u.speaker_id for u in corpus}))
    t0 = time.perf_counter()
    r1 = run_plan(p1, corpus, model, tmp_path / "x3", source_root=tmp_path / "toy")
    r2 = run_plan(p2, corpus, model, tmp_path / "x10", source_root=tmp_path / "toy")
    synth_time = time.perf_counter() - t0
    n1, n2 = len(load_manifest(r1.manifest_path)), len(load_manifest(r2.manifest_path))
    checks = {
        "exp1 values": (e1.pitch, e1.energy, e1.duration, e1.severity, e1.pause_insertion)
        == ((1.0,), (1.0,), (1.0,), (0, 1, 2), True),
        "exp2 values": (e2.pitch, e2.energy, e2.duration, e2.severity, e2.pause_insertion)
        == ((0.1, 0.6, 1.2, 1.75), (0.1, 1.0, 2.0), (1.0, 1.3, 1.6, 1.8), (0, 1, 2), True),
        "exp2 cardinality 144": len(e2) == 144 == len(e2.combinations()),
        "x3 plan 300 entries": len(p1.entries) == 300,
        "x10 plan 1000 entries": len(p2.entries) == 1000,
        "x3 manifest 400 records": n1 == 400 and not r1.partial,
        "x10 manifest 1100 records": n2 == 1100 and not r2.partial,
        "grid + plans < 1 s": plan_time < 1.0,
    }
    record(2, "grid fidelity", checks,
           f"manifests {n1}/{n2} records, grid+plans {plan_time * 1000:.0f} ms, "
           f"synthesis {synth_time:.1f} s, corpus generation {gen_time:.1f} s")


def test_criterion_3_coefficient_laws(compact, toy_corpus):
    result, speakers, _ = compact
    model = result.model
    t0 = time.perf_counter()
    prompts = sample_prompts(60, np.random.default_rng(33))
    exact, frames = True, np.zeros(2)
    for i, text in enumerate(prompts):
        phones = text_to_phonemes(text)
        spk = speakers[i % len(speakers)]
        sev = i % 3
        _, base = synthesize(phones, spk, SynthesisControls(severity=sev), model)
        _, scaled = synthesize(phones, spk, SynthesisControls(pitch_coef=1.75, energy_coef=0.1, duration_coef=1.6,
                                                              severity=sev), model)
        pd = np.asarray(base.predicted_durations)
        exact &= np.array_equal(np.asarray(scaled.predicted_durations), pd)
        exact &= np.array_equal(np.asarray(scaled.scaled_durations), 1.6 * pd)
        exact &= np.array_equal(np.asarray(scaled.applied_pitch), 1.75 * np.asarray(scaled.predicted_pitch))
        exact &= np.array_equal(np.asarray(scaled.applied_energy), 0.1 * np.asarray(scaled.predicted_energy))
        frames += [base.total_frames, scaled.total_frames]
    # the laws hold for any checkpoint, trained or not
    fresh = build_model(ModelConfig(**COMPACT_MODEL), load_examples(toy_corpus.manifest_path)[0], speakers, seed=7)
    _, ad = fresh.infer(text_to_phonemes(prompts[0]).ids, 0, SynthesisControls(pitch_coef=0.6, energy_coef=2.0))
    exact &= np.array_equal(ad.applied_pitch, 0.6 * ad.predicted_pitch)
    exact &= np.array_equal(ad.applied_energy, 2.0 * ad.predicted_energy)
    elapsed = time.perf_counter() - t0
    ratio = frames[1] / frames[0]
    checks = {"laws exact": bool(exact), "ratio in [1.45, 1.75]": 1.45 <= ratio <= 1.75, "runtime < 30 s": elapsed < 30}
    record(3, "coefficient laws", checks, f"duration 1.6/1.0 frame ratio {ratio:.3f} over 60 utterances, {elapsed:.1f} s")


def test_criterion_4_severity_monotonicity(compact, tmp_path):
    result, speakers, train_time = compact
    model = result.model
    prompts = [text_to_phonemes(p) for p in sample_prompts(20, np.random.default_rng(999))]
    totals = np.zeros(3)
    per_prompt = np.zeros((len(prompts), 3))
    for s in range(3):
        for i, phones in enumerate(prompts):
            for spk in speakers:
                _, rep = synthesize(phones, spk, SynthesisControls(severity=s), model)
                per_prompt[i, s] += rep.total_frames
        totals[s] = per_prompt[:, s].sum()
    means = totals / (len(prompts) * len(speakers))
    ratio = means[2] / means[0]
    # severity sweep panels: widths follow the frame counts of a prompt whose durations grow
    grow = [i for i in range(len(prompts)) if per_prompt[i, 0] < per_prompt[i, 1] < per_prompt[i, 2]]
    widths_ok = False
    if grow:
        items = [synthesize(prompts[grow[0]], speakers[0], SynthesisControls(severity=s), model) for s in range(3)]
        _, widths = plot_panels(items, tmp_path / "sweep.ppm")
        widths_ok = widths == sorted(widths) and len(set(widths)) == 3 and widths == [r.total_frames for _, r in items]
    checks = {
        "strictly increasing": means[0] < means[1] < means[2],
        "ratio in [1.4, 2.2]": 1.4 <= ratio <= 2.2,
        "training <= 30 min": train_time <= 1800,
        "sweep panel widths": widths_ok,
    }
    record(4, "severity monotonicity", checks,
           f"mean frames {means.round(1).tolist()}, sev2/sev0 {ratio:.3f}, training {train_time:.0f} s")


def test_criterion_5_gradient_verification():
    t0 = time.perf_counter()
    prims = primitive_gradchecks(seed=0)
    errs = {}
    for mode in ("phoneme", "frame"):
        errs[mode], _ = model_gradcheck(n_phonemes=4, seed=0, mode=mode)
    elapsed = time.perf_counter() - t0
    worst = max(prims, key=prims.get)
    checks = {
        "model < 1e-4": max(errs.values()) < 1e-4,
        "primitives < 1e-5": prims[worst] < 1e-5,
        "runtime < 10 min": elapsed < 600,
    }
    record(5, "gradient verification", checks,
           f"model {errs['phoneme']:.2e} (phoneme) {errs['frame']:.2e} (frame), "
           f"worst primitive {worst} {prims[worst]:.2e}, {elapsed:.0f} s")


def test_criterion_6_determinism(small_corpus, small_examples, tmp_path):
    examples, speakers = small_examples
    mc = ModelConfig(hidden=16, n_heads=2, ff_filter=32, n_encoder_blocks=1, n_decoder_blocks=1)
    tc = TrainConfig(epochs=3, batch_size=4, seed=4)
    runs = [train(mc, tc, examples, speakers, out_dir=tmp_path / f"train{i}") for i in range(2)]
    same_ckpt = all((runs[0].checkpoint.parent / f).read_bytes() == (runs[1].checkpoint.parent / f).read_bytes()
                    for f in ("model.ckpt", "model.json", "metrics.jsonl"))
    model = runs[0].model
    u = small_corpus.utterances[5]
    ctl = SynthesisControls(pitch_coef=1.2, duration_coef=1.3, severity=2, pause_insertion=True, seed=77)
    a, b = (synthesize(u.phones, u.speaker_id, ctl, model) for _ in range(2))
    same_synth = mel_bytes(a[0]) == mel_bytes(b[0]) and a[1].to_json() == b[1].to_json()
    digests = []
    for name in ("aug_a", "aug_b"):
        plan = sample_plan(build_grid("exp2"), small_corpus.utterances, 4, base_seed=9)
        run_plan(plan, small_corpus.utterances, model, tmp_path / name, source_root=small_corpus.root)
        digests.append(_digest(tmp_path / name))
    checks = {"train": same_ckpt, "synthesize": same_synth, "augment": digests[0] == digests[1]}
    record(6, "determinism", checks, "checkpoint, metrics, mel, report and augmented tree compared byte for byte")


def _padding_gap(m, examples, order, mode):
    """Max change in a short utterance's outputs when batched with a longer one."""
    worst = 0.0
    for short_i, long_i in zip(order[:4], order[::-1][:4]):
        short, long_ = examples[short_i], examples[long_i]
        if len(short.phone_ids) == len(long_.phone_ids):
            continue
        with no_grad():
            mel1, ad1 = m.forward(make_batch([short], m), mode=mode)
            mel2, ad2 = m.forward(make_batch([short, long_], m), mode=mode)
        Tn, L = int(short.durations.sum()), len(short.phone_ids)
        worst = max(worst, float(np.abs(mel2.data[0, :Tn] - mel1.data[0, :Tn]).max()),
                    float(np.abs(ad2.log_duration.data[0, :L] - ad1.log_duration.data[0, :L]).max()),
                    float(np.abs(ad2.pitch.data[0, :L] - ad1.pitch.data[0, :L]).max()))
    return worst


def test_criterion_7_length_regulator_and_masking(small_examples):
    rng = np.random.default_rng(7)
    bad = 0
    for _ in range(10_000):
        B, L = int(rng.integers(1, 4)), int(rng.integers(1, 16))
        d = rng.integers(0, 7, size=(B, L))
        d[np.arange(B), rng.integers(0, L, size=B)] += 1
        M, valid = expansion_matrix(d)
        sums = d.sum(axis=1)
        bad += int(M.shape[1] != sums.max() or (valid.sum(axis=1) != sums).any()
                   or (M.sum(axis=(1, 2)) != sums).any())
    examples, speakers = small_examples
    order = sorted(range(len(examples)), key=lambda i: len(examples[i].phone_ids))
    gaps = {}
    for dtype in ("float32", "float64"):
        for mode in ("phoneme", "frame"):
            m = AcousticModel(ModelConfig(hidden=32, n_heads=2, ff_filter=32, n_encoder_blocks=2, n_decoder_blocks=2,
                                          n_speakers=len(speakers), masking_mode=mode, dtype=dtype), seed=11).eval()
            gaps[dtype, mode] = _padding_gap(m, examples, order, mode)
    f32 = max(gaps["float32", k] for k in ("phoneme", "frame"))
    f64 = max(gaps["float64", k] for k in ("phoneme", "frame"))
    # the float64 gap separates rounding noise from genuine leakage through padding
    checks = {"frames == sum(durations)": bad == 0, "float32 padding gap < 1e-5": f32 < 1e-5,
              "float64 padding gap < 1e-10": f64 < 1e-10}
    record(7, "length regulator and masking", checks,
           f"10000 cases, {bad} mismatches; padding gap {f32:.1e} (float32) {f64:.1e} (float64)")


def test_criterion_8_overfit(small_examples):
    examples, speakers = small_examples
    one = examples[:1]
    mc = ModelConfig(hidden=32, n_heads=2, ff_filter=64, n_encoder_blocks=1, n_decoder_blocks=1,
                     dropout=0.0, predictor_dropout=0.0, speaker_dropout=0.0)
    tc = TrainConfig(epochs=200, batch_size=1, learning_rate=2e-3, seed=0)
    before = evaluate(build_model(mc, one, speakers, tc.seed), one)["mel"]
    after = evaluate(train(mc, tc, one, speakers).model, one)["mel"]
    drop = before / after
    record(8, "overfit sanity", {">= 10x within 200 epochs": drop >= 10},
           f"mel MSE {before:.3f} -> {after:.4f} ({drop:.0f}x)")


def test_criterion_9_round_trips(compact, toy_corpus, tmp_path):
    result, speakers, _ = compact
    rng = np.random.default_rng(5)
    mel = (rng.standard_normal((37, 80)) * 10.0 ** rng.integers(-30, 30, size=(37, 80))).astype(np.float32)
    write_mel(mel, tmp_path / "a.mel")
    back = read_mel(tmp_path / "a.mel")
    write_mel(back, tmp_path / "b.mel")
    mel_ok = back.data.tobytes() == mel.tobytes() and (tmp_path / "a.mel").read_bytes() == (tmp_path / "b.mel").read_bytes()

    save_model(result.model, tmp_path / "m.ckpt")
    loaded = load_model(tmp_path / "m.ckpt")
    state = result.model.state_dict()
    ckpt_ok = all(loaded.state_dict()[k].tobytes() == v.tobytes() for k, v in state.items())
    ckpt_ok &= list(load_checkpoint(tmp_path / "m.ckpt")) == list(state)
    phones = text_to_phonemes(sample_prompts(1, np.random.default_rng(1))[0])
    ctl = SynthesisControls(severity=1)
    ckpt_ok &= mel_bytes(synthesize(phones, speakers[0], ctl, loaded)[0]) == mel_bytes(
        synthesize(phones, speakers[0], ctl, result.model)[0])

    utts = load_manifest(toy_corpus.manifest_path)
    save_manifest(utts, tmp_path / "manifest.jsonl")
    manifest_ok = (tmp_path / "manifest.jsonl").read_bytes() == toy_corpus.manifest_path.read_bytes()
    manifest_ok &= load_manifest(tmp_path / "manifest.jsonl") == utts

    stats = SeverityPauseStats.default()
    stats.save(tmp_path / "s.json")
    again = SeverityPauseStats.load(tmp_path / "s.json")
    again.save(tmp_path / "s2.json")
    stats_ok = again == stats and (tmp_path / "s.json").read_bytes() == (tmp_path / "s2.json").read_bytes()

    _, report = synthesize(phones, speakers[0], ctl, result.model)
    report_ok = SynthesisReport.from_json(report.to_json()) == report

    checks = {"mel": mel_ok, "checkpoint": ckpt_ok, "manifest": manifest_ok, "stats": stats_ok, "report": report_ok}
    record(9, "round trips", checks, "mel, checkpoint, manifest, pause stats and report")
