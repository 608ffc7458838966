import numpy as np
import pytest

from dysarthric_tts.model import AcousticModel, ModelConfig
from dysarthric_tts.toy_corpus import ToyCorpusSpec, generate_toy_corpus
from dysarthric_tts.trainer import TrainConfig, load_examples, train

SMALL_MODEL = dict(hidden=16, n_heads=2, ff_filter=32, n_encoder_blocks=1, n_decoder_blocks=1, ff_conv_kernel=3)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Three speakers (one per severity), four utterances each."""
    spec = ToyCorpusSpec(n_speakers_per_severity=1, n_utterances_per_speaker=4, base_seed=5)
    return generate_toy_corpus(spec, tmp_path_factory.mktemp("toy_small"))


@pytest.fixture(scope="session")
def small_examples(small_corpus):
    return load_examples(small_corpus.manifest_path)


@pytest.fixture(scope="session")
def trained_small(small_examples, tmp_path_factory):
    examples, speakers = small_examples
    out = tmp_path_factory.mktemp("run_small")
    return train(ModelConfig(**SMALL_MODEL), TrainConfig(epochs=2, batch_size=4, seed=0), examples, speakers, out_dir=out)


@pytest.fixture
def tiny_model():
    cfg = ModelConfig(**SMALL_MODEL, n_speakers=2)
    return AcousticModel(cfg, seed=1, speakers=["A01", "B02"])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(module.RESULTS):
        terminalreporter.write_line(module.RESULTS[n])
