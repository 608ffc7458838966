"""Parameterized layers on top of the tensor primitives."""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .tensor import Parameter


class Module:
    training = True

    def named_parameters(self, prefix=""):
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Parameter):
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for val in vars(self).values():
            if isinstance(val, Module):
                yield from val.modules()
            elif isinstance(val, (list, tuple)):
                for item in val:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state, strict=True):
        params = dict(self.named_parameters())
        if strict and set(params) != set(state):
            missing = sorted(set(params) - set(state))
            extra = sorted(set(state) - set(params))
            raise KeyError(f"state mismatch; missing {missing[:5]}, unexpected {extra[:5]}")
        for name, arr in state.items():
            p = params[name]
            if p.data.shape != tuple(arr.shape):
                raise ValueError(f"{name}: shape {arr.shape} != {p.data.shape}")
            p.data = np.array(arr, dtype=p.data.dtype)

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self


def _uniform(rng, shape, bound, dtype):
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, dtype=np.float32, bias=True):
        self.weight = Parameter(_uniform(rng, (n_in, n_out), math.sqrt(6.0 / (n_in + n_out)), dtype))
        self.bias = Parameter(np.zeros(n_out, dtype=dtype)) if bias else None

    def __call__(self, x):
        return T.linear(x, self.weight, self.bias)


class Conv1d(Module):
    def __init__(self, n_in, n_out, kernel_size, rng, dtype=np.float32):
        fan = n_in * kernel_size
        self.weight = Parameter(_uniform(rng, (kernel_size, n_in, n_out), math.sqrt(6.0 / (fan + n_out)), dtype))
        self.bias = Parameter(np.zeros(n_out, dtype=dtype))

    def __call__(self, x):
        return T.conv1d(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim, dtype=np.float32, eps=1e-5):
        self.gamma = Parameter(np.ones(dim, dtype=dtype))
        self.beta = Parameter(np.zeros(dim, dtype=dtype))
        self.eps = eps

    def __call__(self, x):
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


class Embedding(Module):
    def __init__(self, n, dim, rng, dtype=np.float32, scale=None):
        scale = dim ** -0.5 if scale is None else scale
        self.weight = Parameter((rng.standard_normal((n, dim)) * scale).astype(dtype))

    def __call__(self, ids):
        return T.embedding(ids, self.weight)


class Dropout(Module):
    def __init__(self, rate):
        self.rate = rate

    def __call__(self, x, rng):
        return T.dropout(x, self.rate, rng, self.training)
