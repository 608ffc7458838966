"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

import numpy as np

from .tensor import no_grad


def relative_error(analytic, numeric):
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)


def _difference(flat, i, eps, loss_fn, order):
    orig = flat[i]

    def f(step):
        flat[i] = orig + step
        return float(loss_fn().data)

    try:
        if order == 2:
            return (f(eps) - f(-eps)) / (2 * eps)
        return (-f(2 * eps) + 8 * f(eps) - 8 * f(-eps) + f(-2 * eps)) / (12 * eps)
    finally:
        flat[i] = orig


def grad_check(params, loss_fn, eps=1e-4, max_entries=None, rng=None, order=2):
    """Max relative error between backprop and a central finite difference.

    ``order`` 2 is (f(θ+eps) - f(θ-eps)) / 2eps; ``order`` 4 is the
    five-point stencil, whose O(eps^4) truncation lets eps stay large
    enough to keep round-off small on deep compositions.

    ``params`` is a list of (name, Parameter) or Parameters, all float64.
    ``loss_fn()`` must rebuild the scalar loss from the current parameter
    values. With ``max_entries`` each parameter is checked on a random
    subset of that many entries; by default every entry is checked.
    Returns (max error, {name: max error}).
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    named = [(p.name or f"param{i}", p) if not isinstance(p, tuple) else p for i, p in enumerate(params)]
    for name, p in named:
        if p.data.dtype != np.float64:
            raise TypeError(f"{name}: grad_check needs float64 parameters, got {p.data.dtype}")
        p.grad = None
    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("non-finite loss")
    loss.backward()

    per_param = {}
    for name, p in named:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
        worst = 0.0
        with no_grad():
            for i in idx:
                numeric = _difference(flat, i, eps, loss_fn, order)
                worst = max(worst, float(relative_error(analytic.reshape(-1)[i], numeric)))
        per_param[name] = worst
    return max(per_param.values(), default=0.0), per_param
