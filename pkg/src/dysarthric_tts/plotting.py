"""Spectrogram images with pitch/energy overlays, written as binary PPM."""

from __future__ import annotations

from pathlib import Path

import numpy as np

PITCH_COLOR = (255, 140, 0)
ENERGY_COLOR = (160, 32, 240)
PAUSE_COLOR = (255, 255, 255)
PITCH_AXIS_MAX = 400.0


def _heat(values):
    """Map [0, 1] to a dark-blue → yellow ramp."""
    v = np.clip(values, 0.0, 1.0)[..., None]
    lo = np.array([20.0, 12.0, 60.0])
    mid = np.array([30.0, 150.0, 140.0])
    hi = np.array([250.0, 230.0, 40.0])
    rgb = np.where(v < 0.5, lo + (mid - lo) * (v / 0.5), mid + (hi - mid) * ((v - 0.5) / 0.5))
    return np.round(rgb).astype(np.uint8)


def render(mel, report=None):
    """RGB array (n_mels, n_frames, 3); low frequencies at the bottom, one column per frame."""
    data = np.asarray(mel.data if hasattr(mel, "data") else mel, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("cannot plot a mel with zero frames")
    n_frames, n_mels = data.shape
    logmel = np.log(np.maximum(data, 1e-5))
    lo, hi = logmel.min(), logmel.max()
    norm = (logmel - lo) / (hi - lo) if hi > lo else np.zeros_like(logmel)
    img = _heat(norm.T[::-1])

    if report is not None:
        cols = np.arange(n_frames)
        durations = np.asarray(report.durations)
        owner = np.repeat(np.arange(len(durations)), durations)
        for pos, tok in enumerate(report.phones):
            if tok == "PAUSE":
                img[0:4, cols[owner == pos]] = PAUSE_COLOR
        pitch = report.frame_values("applied_pitch")
        energy = report.frame_values("applied_energy")
        pmax = max(PITCH_AXIS_MAX, float(pitch.max()) if pitch.size else 0.0)
        emax = float(energy.max()) if energy.size and energy.max() > 0 else 1.0
        for values, vmax, color in ((energy, emax, ENERGY_COLOR), (pitch, pmax, PITCH_COLOR)):
            rows = (n_mels - 1) - np.round(values / vmax * (n_mels - 1)).astype(int)
            voiced = values > 0
            img[rows[voiced], cols[voiced]] = color
    return img


def write_ppm(img, path):
    h, w, _ = img.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def read_ppm(path):
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)


def plot_spectrogram(mel, report, path):
    """Heat map of ``mel`` with applied pitch (orange, 0-400 Hz) and energy (purple) curves."""
    path = Path(path)
    if not path.parent.exists():
        raise OSError(f"directory {path.parent} does not exist")
    img = render(mel, report)
    write_ppm(img, path)
    return img


def plot_panels(items, path, gap=2):
    """Side-by-side panels for a sweep; each panel is as wide as its frame count."""
    imgs = [render(mel, report) for mel, report in items]
    h = imgs[0].shape[0]
    sep = np.full((h, gap, 3), 255, dtype=np.uint8)
    row = []
    for i, im in enumerate(imgs):
        if i:
            row.append(sep)
        row.append(im)
    img = np.concatenate(row, axis=1)
    write_ppm(img, path)
    return img, [im.shape[1] for im in imgs]
