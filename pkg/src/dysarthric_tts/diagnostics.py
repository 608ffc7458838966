"""Finite-difference gradient checks for each autodiff primitive and for the full model."""

from __future__ import annotations

import numpy as np

from .model import AcousticModel, Batch, LossWeights, ModelConfig, compute_loss
from .nn import Parameter, grad_check
from .nn import tensor as T

# Loss components are scaled down so that tiny true gradients (e.g. attention
# key biases, which are exactly zero) are not swamped by O(eps^2) noise.
GRADCHECK_WEIGHTS = LossWeights(mel=0.01, duration=0.01, pitch=0.01, energy=0.01, severity=0.01)

TINY_CONFIG = dict(
    n_encoder_blocks=1, n_decoder_blocks=1, hidden=8, n_heads=2, ff_filter=8, ff_conv_kernel=3,
    predictor_dropout=0.0, dropout=0.0, n_speakers=2, dtype="float64",
)


def _param(rng, *shape, name, away_from_zero=False):
    x = rng.standard_normal(shape)
    if away_from_zero:
        x = np.sign(x) * (0.2 + np.abs(x))
    return Parameter(x, name=name)


def _project(y, rng):
    """Scalar loss with a random readout so every output entry gets a distinct gradient."""
    w = np.random.default_rng(int(rng.integers(2 ** 31))).standard_normal(y.shape)
    return T.sum_(T.mul(y, w))


def _primitive_cases(rng):
    a = _param(rng, 3, 4, name="a")
    b = _param(rng, 3, 4, name="b")
    c = _param(rng, 4, name="c")
    r = _param(rng, 3, 4, name="r", away_from_zero=True)
    m1 = _param(rng, 2, 3, 4, name="m1")
    m2 = _param(rng, 2, 4, 5, name="m2")
    w = _param(rng, 4, 5, name="w")
    bias = _param(rng, 5, name="bias")
    ln_x = _param(rng, 2, 3, 6, name="ln_x")
    gamma = _param(rng, 6, name="gamma")
    beta = _param(rng, 6, name="beta")
    cx = _param(rng, 2, 7, 3, name="cx")
    cw = _param(rng, 3, 3, 4, name="cw")
    cb = _param(rng, 4, name="cb")
    table = _param(rng, 6, 3, name="table")
    ids = np.array([[0, 2, 2], [5, 1, 0]])
    q = _param(rng, 2, 3, 4, name="q")
    k = _param(rng, 2, 5, 4, name="k")
    v = _param(rng, 2, 5, 4, name="v")
    key_valid = np.array([[True] * 5, [True, True, True, False, False]])
    mask = np.where(key_valid, 0.0, -np.inf)[:, None, :]
    target = rng.standard_normal((3, 4))
    sel = rng.random((3, 4)) > 0.3
    logits = _param(rng, 4, 3, name="logits")
    labels = np.array([0, 2, 1, 2])

    def seeded(fn):
        # re-seed the readout on every evaluation so f(θ±eps) use the same projection
        return lambda: fn(np.random.default_rng(7))

    return {
        "add": ([a, c], seeded(lambda g: _project(T.add(a, c), g))),
        "mul": ([a, b], seeded(lambda g: _project(T.mul(a, b), g))),
        "relu": ([r], seeded(lambda g: _project(T.relu(r), g))),
        "sum": ([m1], seeded(lambda g: _project(T.sum_(m1, axis=1, keepdims=True), g))),
        "reshape": ([m1], seeded(lambda g: _project(T.reshape(m1, (6, 4)), g))),
        "transpose": ([m1], seeded(lambda g: _project(T.transpose(m1, (0, 2, 1)), g))),
        "matmul": ([m1, m2], seeded(lambda g: _project(T.matmul(m1, m2), g))),
        "linear": ([a, w, bias], seeded(lambda g: _project(T.linear(a, w, bias), g))),
        "softmax": ([m1], seeded(lambda g: _project(T.softmax(m1, axis=-1), g))),
        "layer_norm": ([ln_x, gamma, beta], seeded(lambda g: _project(T.layer_norm(ln_x, gamma, beta), g))),
        "conv1d": ([cx, cw, cb], seeded(lambda g: _project(T.conv1d(cx, cw, cb), g))),
        "embedding": ([table], seeded(lambda g: _project(T.embedding(ids, table), g))),
        "dropout": ([a], seeded(lambda g: _project(T.dropout(a, 0.4, np.random.default_rng(3)), g))),
        "attention": ([q, k, v], seeded(lambda g: _project(T.scaled_dot_attention(q, k, v, mask), g))),
        "masked_mse": ([a], lambda: T.masked_mse(a, target, sel)),
        "cross_entropy": ([logits], lambda: T.cross_entropy(logits, labels)),
    }


def primitive_gradchecks(seed=0, eps=1e-5):
    """{primitive name: max relative error} over small float64 random inputs."""
    rng = np.random.default_rng(seed)
    out = {}
    for name, (params, loss_fn) in _primitive_cases(rng).items():
        out[name] = grad_check(params, loss_fn, eps=eps)[0]
    return out


def tiny_batch(model, n_phonemes=4, seed=0):
    """One utterance with random ids, durations and targets (normalized units)."""
    rng = np.random.default_rng(seed)
    L = n_phonemes
    durations = rng.integers(1, 4, size=L)
    Tn = int(durations.sum())
    voiced = rng.random(L) > 0.3
    voiced[0] = True
    frame_voiced = np.repeat(voiced, durations)
    pitch = np.where(voiced, rng.standard_normal(L), 0.0)
    energy = rng.standard_normal(L)
    return Batch(
        phone_ids=rng.integers(1, model.config.n_phonemes - 1, size=(1, L)),
        src_valid=np.ones((1, L), dtype=bool),
        speakers=np.array([1 % model.config.n_speakers]),
        severities=np.array([int(rng.integers(3))]),
        durations=durations[None, :],
        pitch=pitch[None, :],
        voiced=voiced[None, :],
        energy=energy[None, :],
        frame_pitch=np.repeat(pitch, durations)[None, :],
        frame_voiced=frame_voiced[None, :],
        frame_energy=np.repeat(energy, durations)[None, :],
        mel=rng.standard_normal((1, Tn, model.config.n_mels)),
        frame_valid=np.ones((1, Tn), dtype=bool),
    )


def model_gradcheck(n_phonemes=4, seed=0, mode="phoneme", config=None, eps=3e-4, max_entries=None, order=4):
    """Full-model check in float64 with dropout off; returns (max error, per-parameter errors)."""
    cfg = ModelConfig.from_dict({**TINY_CONFIG, "masking_mode": mode, **(config or {})})
    if cfg.dtype != "float64":
        raise ValueError("the full-model gradient check runs in float64")
    model = AcousticModel(cfg, seed=seed)
    model.eval()
    batch = tiny_batch(model, n_phonemes, seed)

    def loss_fn():
        mel, ad = model.forward(batch)
        return compute_loss(mel, ad, batch, GRADCHECK_WEIGHTS, mode)["total"]

    return grad_check(model.named_parameters(), loss_fn, eps=eps, max_entries=max_entries,
                      rng=np.random.default_rng(seed), order=order)
