import struct

import numpy as np
import pytest

from dysarthric_tts.diagnostics import primitive_gradchecks
from dysarthric_tts.model import VariancePredictor
from dysarthric_tts.nn import Adam, Conv1d, Linear, Parameter, ShapeError, Tensor, grad_check, no_grad
from dysarthric_tts.nn import tensor as T
from dysarthric_tts.nn.checkpoint import CheckpointFormatError, checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint


def test_matmul_identity(rng):
    a = rng.standard_normal((3, 5))
    np.testing.assert_array_equal(T.matmul(Tensor(np.eye(3)), Tensor(a)).data, a)


def test_softmax_rows_sum_to_one(rng):
    s = T.softmax(Tensor(rng.standard_normal((20, 7)) * 10)).data
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)


def test_softmax_empty_axis():
    with pytest.raises(ShapeError):
        T.softmax(Tensor(np.zeros((3, 0))))


def test_layer_norm_constant_row():
    out = T.layer_norm(Tensor(np.full((2, 6), 4.2))).data
    np.testing.assert_array_equal(out, np.zeros((2, 6)))


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))


def test_conv1d_same_length(rng):
    x = Tensor(rng.standard_normal((2, 11, 3)))
    for k in (1, 3, 9):
        assert T.conv1d(x, Tensor(rng.standard_normal((k, 3, 4)))).shape == (2, 11, 4)


def test_masked_attention_ignores_masked_keys(rng):
    q, k, v = (Tensor(rng.standard_normal((1, 3, 4))) for _ in range(3))
    mask = np.where(np.array([[True, True, False]]), 0.0, -np.inf)[:, None, :]
    out = T.scaled_dot_attention(q, k, v, mask).data
    v2 = v.data.copy()
    v2[0, 2] = 1e6
    out2 = T.scaled_dot_attention(q, k, Tensor(v2), mask).data
    np.testing.assert_array_equal(out, out2)


def test_dropout_identities(rng):
    x = Tensor(rng.standard_normal((4, 5)))
    np.testing.assert_array_equal(T.dropout(x, 0.0, rng).data, x.data)
    np.testing.assert_array_equal(T.dropout(x, 0.7, rng, training=False).data, x.data)
    y = T.dropout(x, 0.5, rng).data
    kept = y != 0
    np.testing.assert_allclose(y[kept], 2 * x.data[kept])


def test_backward_accumulates_on_reuse():
    p = Parameter(np.array([2.0, -1.0]))
    T.sum_(T.mul(p, p) + p).backward()
    np.testing.assert_array_equal(p.grad, 2 * p.data + 1)


def test_no_grad_builds_no_graph():
    p = Parameter(np.ones(3))
    with no_grad():
        y = T.mul(p, 2.0)
    assert not y.requires_grad


def test_every_primitive_below_1e5():
    errs = primitive_gradchecks()
    assert set(errs) >= {"matmul", "add", "relu", "softmax", "layer_norm", "conv1d", "embedding", "dropout", "attention"}
    assert max(errs.values()) < 1e-5, errs


def test_linear_squared_loss_gradcheck(rng):
    lin = Linear(4, 3, rng, np.float64)
    x, y = rng.standard_normal((5, 4)), rng.standard_normal((5, 3))

    def loss():
        d = lin(Tensor(x)) - y
        return T.sum_(T.mul(d, d))

    assert grad_check(list(lin.named_parameters()), loss)[0] < 1e-7


def test_predictor_stack_gradcheck(rng):
    vp = VariancePredictor(6, 3, 0.0, rng, np.float64)
    x = rng.standard_normal((2, 5, 6))
    valid = np.array([[True] * 5, [True, True, True, False, False]])
    w = rng.standard_normal((2, 5))
    assert grad_check(list(vp.named_parameters()), lambda: T.sum_(T.mul(vp(Tensor(x), valid, None), w)))[0] < 1e-5


def test_grad_check_rejects_float32_and_nonfinite(rng):
    p = Parameter(np.ones(2, dtype=np.float32), name="p")
    with pytest.raises(TypeError):
        grad_check([p], lambda: T.sum_(p))
    q = Parameter(np.ones(2), name="q")
    with pytest.raises(FloatingPointError):
        grad_check([q], lambda: T.sum_(T.mul(q, np.inf)))


def test_adam_lr_zero_no_update(rng):
    lin = Linear(3, 2, rng)
    before = {k: v.copy() for k, v in lin.state_dict().items()}
    opt = Adam(lin.parameters(), lr=0.0)
    T.sum_(lin(Tensor(rng.standard_normal((4, 3))))).backward()
    opt.step()
    for k, v in lin.state_dict().items():
        np.testing.assert_array_equal(v, before[k])


def test_adam_clips_gradient_norm(rng):
    p = Parameter(np.zeros(2))
    p.grad = np.array([300.0, 400.0])
    opt = Adam([p], lr=1.0, grad_clip=1.0)
    assert opt.grad_norm() == 500.0
    opt.step()
    # first Adam step moves each coordinate by ~lr regardless of scale
    np.testing.assert_allclose(p.data, [-1.0, -1.0], rtol=1e-6)


def test_checkpoint_bit_exact(tmp_path, rng):
    state = {"a.weight": rng.standard_normal((3, 4)).astype(np.float32), "b": np.float32([1.5]), "ünï": np.zeros((2, 1, 3), np.float32)}
    save_checkpoint(state, tmp_path / "m.ckpt")
    back = load_checkpoint(tmp_path / "m.ckpt")
    assert list(back) == list(state)
    for k in state:
        assert back[k].tobytes() == state[k].tobytes() and back[k].shape == state[k].shape
    assert checkpoint_bytes(back) == (tmp_path / "m.ckpt").read_bytes()


def test_checkpoint_layout():
    buf = checkpoint_bytes({"w": np.float32([[1, 2]])})
    assert buf[:4] == b"CKPT"
    version, count = struct.unpack_from("<HI", buf, 4)
    assert (version, count) == (1, 1)
    (name_len,) = struct.unpack_from("<H", buf, 10)
    assert buf[12:12 + name_len] == b"w"
    assert buf[12 + name_len] == 2
    assert struct.unpack_from("<II", buf, 13 + name_len) == (1, 2)
    assert len(buf) == 13 + name_len + 8 + 8


def test_checkpoint_bad_magic():
    with pytest.raises(CheckpointFormatError):
        parse_checkpoint(b"NOPE" + b"\0" * 10)


def test_module_state_dict_checks(rng):
    from dysarthric_tts.nn import LayerNorm
    with pytest.raises(KeyError):
        Linear(2, 3, rng).load_state_dict(LayerNorm(3).state_dict())
    with pytest.raises(ValueError, match="shape"):
        Conv1d(2, 3, 3, rng).load_state_dict(Linear(2, 3, rng).state_dict())
