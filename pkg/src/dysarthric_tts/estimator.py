"""Estimator-style wrapper around training and synthesis."""

from __future__ import annotations

from sklearn.base import BaseEstimator

from ._validation import check_choice, check_int, check_is_fitted, check_real
from .model import ModelConfig, SynthesisControls
from .synthesis import synthesize
from .trainer import TrainConfig, load_examples, train


class DysarthricSynthesizer(BaseEstimator):
    """``fit`` trains on a corpus manifest; ``predict`` maps (phones, speaker) pairs to mels.

    Hyperparameters are plain constructor arguments so ``get_params`` /
    ``set_params`` and ``sklearn.base.clone`` behave as usual. Controls for
    ``predict`` are the coefficient arguments below.
    """

    def __init__(self, hidden=64, n_blocks=2, n_heads=2, ff_filter=128, speaker_dropout=0.3,
                 masking_mode="phoneme", epochs=30, batch_size=8, learning_rate=1e-3, seed=0,
                 severity=0, pitch_coef=1.0, energy_coef=1.0, duration_coef=1.0, pause_insertion=False):
        self.hidden = hidden
        self.n_blocks = n_blocks
        self.n_heads = n_heads
        self.ff_filter = ff_filter
        self.speaker_dropout = speaker_dropout
        self.masking_mode = masking_mode
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.severity = severity
        self.pitch_coef = pitch_coef
        self.energy_coef = energy_coef
        self.duration_coef = duration_coef
        self.pause_insertion = pause_insertion

    def _configs(self):
        check_int("hidden", self.hidden, 1)
        check_int("n_blocks", self.n_blocks, 1)
        check_real("speaker_dropout", self.speaker_dropout, 0.0, 1.0)
        check_choice("masking_mode", self.masking_mode, {"phoneme", "frame"})
        mc = ModelConfig(hidden=self.hidden, n_heads=self.n_heads, ff_filter=self.ff_filter,
                         n_encoder_blocks=self.n_blocks, n_decoder_blocks=self.n_blocks,
                         speaker_dropout=self.speaker_dropout, masking_mode=self.masking_mode)
        tc = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                         learning_rate=self.learning_rate, seed=self.seed)
        return mc, tc

    def fit(self, X, y=None):
        """X: path to a manifest.jsonl, or a list of trainer.Example with ``speakers`` in y."""
        mc, tc = self._configs()
        if isinstance(X, (str, bytes)) or hasattr(X, "__fspath__"):
            examples, speakers = load_examples(X)
        else:
            examples, speakers = list(X), list(y)
        result = train(mc, tc, examples, speakers)
        self.model_, self.metrics_, self.speakers_ = result.model, result.metrics, list(speakers)
        return self

    def controls(self, seed=None):
        return SynthesisControls(self.pitch_coef, self.energy_coef, self.duration_coef, self.severity,
                                 self.pause_insertion, self.seed if seed is None else seed)

    def predict(self, X, stats=None):
        """X: iterable of (PhonemeSequence, speaker id); returns a list of MelSpectrogram."""
        check_is_fitted(self, "model_")
        return [synthesize(phones, spk, self.controls(), self.model_, stats)[0] for phones, spk in X]

    def predict_reports(self, X, stats=None):
        check_is_fitted(self, "model_")
        return [synthesize(phones, spk, self.controls(), self.model_, stats)[1] for phones, spk in X]
