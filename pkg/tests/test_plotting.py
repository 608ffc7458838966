import numpy as np
import pytest

from dysarthric_tts.model import SynthesisControls
from dysarthric_tts.phonemes import text_to_phonemes
from dysarthric_tts.plotting import plot_panels, plot_spectrogram, read_ppm, render
from dysarthric_tts.synthesis import synthesize


def test_columns_equal_frames(tmp_path, rng):
    img = plot_spectrogram(rng.random((10, 80)), None, tmp_path / "a.ppm")
    assert img.shape == (80, 10, 3)
    np.testing.assert_array_equal(read_ppm(tmp_path / "a.ppm"), img)


def test_zero_frames_rejected(tmp_path):
    with pytest.raises(ValueError):
        plot_spectrogram(np.zeros((0, 80)), None, tmp_path / "z.ppm")


def test_unwritable_path(rng, tmp_path):
    with pytest.raises(OSError):
        plot_spectrogram(rng.random((3, 80)), None, tmp_path / "missing" / "x.ppm")


def test_overlays_deterministic(trained_small, tmp_path):
    m = trained_small.model
    mel, report = synthesize(text_to_phonemes("bad and good"), m.speakers[0], SynthesisControls(pause_insertion=True, severity=2, seed=2), m)
    a = plot_spectrogram(mel, report, tmp_path / "a.ppm")
    b = plot_spectrogram(mel, report, tmp_path / "b.ppm")
    assert (tmp_path / "a.ppm").read_bytes() == (tmp_path / "b.ppm").read_bytes()
    assert not np.array_equal(a, render(mel))


def test_panels_width_follows_durations(trained_small, tmp_path):
    m = trained_small.model
    seq = text_to_phonemes("bad and good")
    items = [synthesize(seq, m.speakers[0], SynthesisControls(duration_coef=c), m) for c in (0.5, 1.0, 2.0)]
    img, widths = plot_panels(items, tmp_path / "p.ppm")
    assert widths == sorted(widths) and widths[0] < widths[-1]
    assert img.shape[1] == sum(widths) + 2 * 2
