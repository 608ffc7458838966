"""Command-line entry point: ``dystts <command> [--config cfg.json] [flags]``.

Flags override values from the JSON config. Exit codes: 0 success,
2 validation or input error, 3 augmentation finished with failed entries.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("dysarthric_tts")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_PARTIAL = 3
GRADCHECK_TOLERANCE = 1e-4
HELP_WIDTH = 80
CONFIG_SECTIONS = ("features", "model", "train", "pause", "augment")
PAUSE_FLAG = {"on": ("stochastic", True), "det": ("deterministic", True), "off": ("stochastic", False)}


class UsageError(ValueError):
    """Bad flag combination or config content; reported with exit status 2."""


def _formatter(prog):
    return argparse.HelpFormatter(prog, width=HELP_WIDTH, max_help_position=32)


def load_config(path):
    if path is None:
        return {s: {} for s in CONFIG_SECTIONS}
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise UsageError(f"config {path}: malformed JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(raw, dict):
        raise UsageError(f"config {path}: top level must be a JSON object")
    unknown = set(raw) - set(CONFIG_SECTIONS)
    if unknown:
        raise UsageError(f"config {path}: unknown sections {sorted(unknown)}; allowed {list(CONFIG_SECTIONS)}")
    return {s: dict(raw.get(s) or {}) for s in CONFIG_SECTIONS}


def _log_resolved(command, resolved):
    log.info("resolved config for %s: %s", command, json.dumps(resolved, sort_keys=True, default=str))


def _manifest_path(corpus):
    p = Path(corpus)
    p = p / "manifest.jsonl" if p.is_dir() else p
    if not p.exists():
        raise FileNotFoundError(f"no manifest at {p}; pass a corpus directory or a manifest.jsonl file")
    return p


def _frame_params(cfg):
    from .audio import FrameParams
    return FrameParams.from_dict(cfg["features"])


def _pause_stats(cfg, override=None):
    from .pause import SeverityPauseStats
    path = override or cfg["pause"].get("stats")
    return SeverityPauseStats.load(path) if path else SeverityPauseStats.default()


# ---- commands -----------------------------------------------------------

def cmd_toy_gen(args, cfg):
    from .toy_corpus import ToyCorpusSpec, generate_toy_corpus

    spec = ToyCorpusSpec(
        n_speakers_per_severity=args.speakers_per_severity,
        n_utterances_per_speaker=args.utterances_per_speaker,
        base_seed=args.seed if args.seed is not None else 0,
        frame_params=_frame_params(cfg),
    )
    _log_resolved("toy-gen", {"spec": spec.to_dict(), "out": args.out, "audio": not args.no_audio})
    corpus = generate_toy_corpus(spec, args.out, write_audio=not args.no_audio)
    print(f"wrote {len(corpus.utterances)} utterances to {corpus.manifest_path}")
    return EXIT_OK


def cmd_analyze(args, cfg):
    from .corpus_io import load_alignment, load_manifest, resolve
    from .pause import DEFAULT_PAUSE_MIN_MS, estimate_stats

    manifest = _manifest_path(args.corpus)
    pause_min_ms = args.pause_min_ms if args.pause_min_ms is not None else cfg["pause"].get("pause_min_ms", DEFAULT_PAUSE_MIN_MS)
    _log_resolved("analyze", {"corpus": str(manifest), "pause_min_ms": pause_min_ms})
    utts = load_manifest(manifest)
    items, counts = [], [0, 0, 0]
    for u in utts:
        if u.alignment_path is None:
            raise UsageError(f"utterance {u.id} has no alignment")
        items.append((u.severity, load_alignment(resolve(manifest.parent, u.alignment_path))))
        counts[u.severity] += 1
    stats = estimate_stats(items, pause_min_ms)
    print(format_stats_table(stats, counts))
    if args.out:
        stats.save(args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def format_stats_table(stats, counts):
    lines = ["severity  utterances  pauses/utt  slots/utt  p(slot)"]
    for s in sorted(stats):
        st = stats[s]
        lines.append(f"{s:>8d}  {counts[s]:>10d}  {st.pauses_per_utterance:>10.4f}  "
                     f"{st.slots_per_utterance:>9.4f}  {st.slot_probability:>7.4f}")
    return "\n".join(lines)


def cmd_train(args, cfg):
    from .model import ModelConfig
    from .trainer import TrainConfig, load_examples, train

    model_cfg = ModelConfig.from_dict(cfg["model"])
    train_raw = dict(cfg["train"])
    if args.seed is not None:
        train_raw["seed"] = args.seed
    if args.epochs is not None:
        train_raw["epochs"] = args.epochs
    train_cfg = TrainConfig(**train_raw)
    manifest = _manifest_path(args.corpus)
    _log_resolved("train", {"corpus": str(manifest), "out": args.out, "features": cfg["features"],
                            "model": model_cfg.to_dict(), "train": train_cfg.to_dict()})
    examples, speakers = load_examples(manifest, params=_frame_params(cfg))
    result = train(model_cfg, train_cfg, examples, speakers, out_dir=args.out)
    print(f"best epoch {result.best_epoch}; checkpoint {result.checkpoint}")
    return EXIT_OK


def cmd_gradcheck(args, cfg):
    from .diagnostics import model_gradcheck, primitive_gradchecks

    seed = args.seed if args.seed is not None else 0
    _log_resolved("gradcheck", {"phonemes": args.phonemes, "mode": args.mode, "seed": seed})
    worst_prim = 0.0
    if not args.skip_primitives:
        prims = primitive_gradchecks(seed)
        for name, err in prims.items():
            print(f"primitive {name:<14s} {err:.3e}")
        worst_prim = max(prims.values())
    err, per_param = model_gradcheck(args.phonemes, seed, args.mode, max_entries=args.max_entries)
    worst = max(per_param, key=per_param.get)
    print(f"model max relative error {err:.3e} ({worst})")
    ok = err < GRADCHECK_TOLERANCE and worst_prim < GRADCHECK_TOLERANCE
    print("PASS" if ok else f"FAIL: tolerance {GRADCHECK_TOLERANCE:.0e}")
    return EXIT_OK if ok else EXIT_INVALID


def _controls(args, cfg):
    from .model import SynthesisControls

    mode, insert = PAUSE_FLAG[args.pause]
    controls = SynthesisControls(
        pitch_coef=args.pitch, energy_coef=args.energy, duration_coef=args.duration,
        severity=args.severity, pause_insertion=insert, seed=args.seed if args.seed is not None else 0,
    )
    return controls, mode


def cmd_synth(args, cfg):
    from .audio import write_wav
    from .corpus_io import write_mel
    from .phonemes import text_to_phonemes
    from .plotting import plot_spectrogram
    from .synthesis import synthesize
    from .trainer import load_model
    from .vocoder import griffin_lim

    controls, pause_mode = _controls(args, cfg)
    params = _frame_params(cfg)
    _log_resolved("synth", {"checkpoint": args.checkpoint, "speaker": args.speaker, "text": args.text,
                            "controls": controls.to_dict(), "pause_mode": pause_mode, "out": args.out})
    model = load_model(args.checkpoint)
    phones = text_to_phonemes(args.text, letter_fallback=args.letter_fallback)
    mel, report = synthesize(phones, args.speaker, controls, model, _pause_stats(cfg, args.stats), pause_mode=pause_mode)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_mel(mel, out.with_suffix(".mel"))
    report.save(out.with_suffix(".json"))
    if args.wav:
        write_wav(out.with_suffix(".wav"), griffin_lim(mel.data, params, args.iters, controls.seed % 2 ** 32), params.sample_rate)
    if args.plot:
        plot_spectrogram(mel, report, out.with_suffix(".ppm"))
    print(f"{report.total_frames} frames, inserted pauses at {report.inserted_pause_positions}; wrote {out.with_suffix('.mel')}")
    return EXIT_OK


def cmd_augment(args, cfg):
    from .augmentation import build_grid, run_plan, sample_plan
    from .corpus_io import load_manifest
    from .trainer import load_model

    aug = dict(cfg["augment"])
    preset = args.preset or aug.get("preset", "exp1")
    grid = build_grid("custom", **aug["grid"]) if preset == "custom" else build_grid(preset)
    if args.pause is not None:
        grid = build_grid("custom", **{**grid.to_dict(), "pause_insertion": args.pause != "off"})
    pause_mode = PAUSE_FLAG[args.pause or "on"][0]
    multiplier = args.multiplier if args.multiplier is not None else aug.get("multiplier", 3)
    seed = args.seed if args.seed is not None else aug.get("seed", 0)
    write_audio = args.wav or bool(aug.get("write_audio", False))
    manifest = _manifest_path(args.corpus)
    _log_resolved("augment", {"corpus": str(manifest), "checkpoint": args.checkpoint, "grid": grid.to_dict(),
                              "multiplier": multiplier, "seed": seed, "pause_mode": pause_mode,
                              "write_audio": write_audio, "out": args.out})
    corpus = load_manifest(manifest)
    plan = sample_plan(grid, corpus, multiplier, seed)
    model = load_model(args.checkpoint)
    result = run_plan(plan, corpus, model, args.out, source_root=manifest.parent, stats=_pause_stats(cfg),
                      write_audio=write_audio, frame_params=_frame_params(cfg), pause_mode=pause_mode)
    print(f"{result.n_original} original + {result.n_synthetic} synthetic records -> {result.manifest_path}")
    if result.partial:
        for f in result.failures:
            print(f"failed {f['id']}: {f['error']}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_vocode(args, cfg):
    from .audio import write_wav
    from .corpus_io import read_mel
    from .vocoder import griffin_lim

    params = _frame_params(cfg)
    seed = args.seed if args.seed is not None else 0
    _log_resolved("vocode", {"mel": args.mel, "out": args.out, "iters": args.iters, "seed": seed})
    y = griffin_lim(read_mel(args.mel).data, params, args.iters, seed)
    write_wav(args.out, y, params.sample_rate)
    print(f"wrote {len(y)} samples to {args.out}")
    return EXIT_OK


def cmd_plot(args, cfg):
    from .corpus_io import read_mel
    from .plotting import plot_spectrogram
    from .synthesis import SynthesisReport

    _log_resolved("plot", {"mel": args.mel, "report": args.report, "out": args.out})
    report = SynthesisReport.from_json(Path(args.report).read_text(encoding="utf-8")) if args.report else None
    img = plot_spectrogram(read_mel(args.mel), report, args.out)
    print(f"wrote {img.shape[1]}x{img.shape[0]} image to {args.out}")
    return EXIT_OK


# ---- parser -------------------------------------------------------------

def _coef(text):
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False, formatter_class=_formatter)
    common.add_argument("--config", metavar="PATH", help="JSON config with sections " + ", ".join(CONFIG_SECTIONS))
    common.add_argument("--seed", type=int, metavar="N", help="seed for every random choice of the command")
    common.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")

    p = argparse.ArgumentParser(prog="dystts", formatter_class=_formatter,
                                description="Severity- and prosody-controlled dysarthric speech synthesis toolkit.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_, description=help_, formatter_class=_formatter)
        sp.set_defaults(func=fn)
        return sp

    sp = add("toy-gen", cmd_toy_gen, "generate a synthetic aligned toy corpus")
    sp.add_argument("--out", required=True, metavar="DIR", help="output corpus directory")
    sp.add_argument("--speakers-per-severity", type=int, default=2, metavar="N", help="speakers per severity (default 2)")
    sp.add_argument("--utterances-per-speaker", type=int, default=20, metavar="N", help="utterances per speaker (default 20)")
    sp.add_argument("--no-audio", action="store_true", help="skip writing WAV files")

    sp = add("analyze", cmd_analyze, "estimate per-severity pause statistics of a corpus")
    sp.add_argument("--corpus", required=True, metavar="PATH", help="corpus directory or manifest.jsonl")
    sp.add_argument("--pause-min-ms", type=float, metavar="MS", help="minimum silence counted as a pause (default 150)")
    sp.add_argument("--out", metavar="PATH", help="write the stats as JSON")

    sp = add("train", cmd_train, "train the acoustic model on a corpus")
    sp.add_argument("--corpus", required=True, metavar="PATH", help="corpus directory or manifest.jsonl")
    sp.add_argument("--out", required=True, metavar="DIR", help="directory for model.ckpt and metrics.jsonl")
    sp.add_argument("--epochs", type=int, metavar="N", help="override train.epochs")

    sp = add("gradcheck", cmd_gradcheck, "finite-difference check of primitives and the full model")
    sp.add_argument("--phonemes", type=int, default=4, metavar="N", help="input length (default 4)")
    sp.add_argument("--mode", choices=("phoneme", "frame"), default="phoneme", help="masking mode")
    sp.add_argument("--max-entries", type=int, metavar="N", help="check at most N entries per parameter")
    sp.add_argument("--skip-primitives", action="store_true", help="only check the full model")

    def controls(sp):
        sp.add_argument("--severity", type=int, default=0, choices=(0, 1, 2), help="severity level")
        sp.add_argument("--pitch", type=_coef, default=1.0, metavar="C", help="pitch coefficient in [0, 2]")
        sp.add_argument("--energy", type=_coef, default=1.0, metavar="C", help="energy coefficient in [0, 2]")
        sp.add_argument("--duration", type=_coef, default=1.0, metavar="C", help="duration coefficient in [0, 2]")

    sp = add("synth", cmd_synth, "synthesize one sentence")
    sp.add_argument("--checkpoint", required=True, metavar="PATH", help="model.ckpt (with model.json beside it)")
    sp.add_argument("--speaker", required=True, metavar="ID", help="speaker id known to the checkpoint")
    sp.add_argument("--text", required=True, help="sentence to synthesize")
    sp.add_argument("--out", required=True, metavar="PREFIX", help="writes PREFIX.mel and PREFIX.json")
    controls(sp)
    sp.add_argument("--pause", choices=("on", "off", "det"), default="off",
                    help="pause insertion: binomial draw, none, or rounded expected count")
    sp.add_argument("--stats", metavar="PATH", help="pause stats JSON (default: built-in per-severity averages)")
    sp.add_argument("--letter-fallback", action="store_true", help="spell unknown words letter by letter")
    sp.add_argument("--wav", action="store_true", help="also write PREFIX.wav via Griffin-Lim")
    sp.add_argument("--plot", action="store_true", help="also write PREFIX.ppm")
    sp.add_argument("--iters", type=int, default=60, metavar="N", help="Griffin-Lim iterations (default 60)")

    sp = add("augment", cmd_augment, "synthesize an augmented corpus from a coefficient grid")
    sp.add_argument("--corpus", required=True, metavar="PATH", help="corpus directory or manifest.jsonl")
    sp.add_argument("--checkpoint", required=True, metavar="PATH", help="trained model.ckpt")
    sp.add_argument("--out", required=True, metavar="DIR", help="output directory")
    sp.add_argument("--preset", choices=("exp1", "exp2", "custom"), help="coefficient grid (default exp1)")
    sp.add_argument("--multiplier", type=int, metavar="N", help="synthetic copies per utterance")
    sp.add_argument("--pause", choices=("on", "off", "det"), help="override the grid's pause insertion")
    sp.add_argument("--wav", action="store_true", help="also vocode every synthetic entry")

    sp = add("vocode", cmd_vocode, "Griffin-Lim waveform from a mel file")
    sp.add_argument("--mel", required=True, metavar="PATH", help="input .mel file")
    sp.add_argument("--out", required=True, metavar="PATH", help="output .wav file")
    sp.add_argument("--iters", type=int, default=60, metavar="N", help="iterations (default 60)")

    sp = add("plot", cmd_plot, "render a mel (and report curves) as a PPM image")
    sp.add_argument("--mel", required=True, metavar="PATH", help="input .mel file")
    sp.add_argument("--report", metavar="PATH", help="synthesis report JSON for pitch/energy/pause overlays")
    sp.add_argument("--out", required=True, metavar="PATH", help="output .ppm file")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (ValueError, KeyError, TypeError, OSError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"dystts {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
