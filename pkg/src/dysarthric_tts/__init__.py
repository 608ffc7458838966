"""Dysarthric speech synthesis with severity, prosody and pause controls for ASR data augmentation."""

from .audio import FrameParams
from .augmentation import AugmentationPlan, CoefficientGrid, build_grid, run_plan, sample_plan
from .corpus_io import MelSpectrogram, Utterance, load_manifest, read_mel, save_manifest, write_mel
from .estimator import DysarthricSynthesizer
from .model import AcousticModel, ModelConfig, SynthesisControls
from .pause import PauseInserter, SeverityPauseStats, estimate_stats, insert_pauses, pause_count
from .phonemes import PhonemeSequence, text_to_phonemes
from .synthesis import SynthesisReport, synthesize
from .trainer import TrainConfig, load_model, save_model, train
from .vocoder import griffin_lim

__version__ = "0.1.0"

__all__ = [
    "AcousticModel", "AugmentationPlan", "CoefficientGrid", "DysarthricSynthesizer", "FrameParams",
    "MelSpectrogram", "ModelConfig", "PauseInserter", "PhonemeSequence", "SeverityPauseStats",
    "SynthesisControls", "SynthesisReport", "TrainConfig", "Utterance", "build_grid", "estimate_stats",
    "griffin_lim", "insert_pauses", "load_manifest", "load_model", "pause_count", "read_mel", "run_plan",
    "sample_plan", "save_manifest", "save_model", "synthesize", "text_to_phonemes", "train", "write_mel",
]
