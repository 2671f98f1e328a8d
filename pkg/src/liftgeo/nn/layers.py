from __future__ import annotations

import numpy as np

from ..errors import BatchTooSmall, ShapeMismatch
from . import autograd as ag
from .autograd import Tensor


class Module:
    """Minimal container: named parameters, named buffers, train/eval flag."""

    training = True

    def children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.name == "param":
                yield prefix + name, value
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name in getattr(self, "_buffers", ()):
            yield prefix + name, getattr(self, name)
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def state_dict(self):
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(dict(self.named_buffers()))
        return state

    def load_state_dict(self, state):
        own = self.state_dict()
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise ShapeMismatch(f"state mismatch; missing={missing} unexpected={extra}")
        for name, value in state.items():
            if own[name].shape != np.shape(value):
                raise ShapeMismatch(f"{name}: expected {own[name].shape}, got {np.shape(value)}")
            own[name][...] = value

    def train(self, mode=True):
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def requires_grad_(self, flag):
        for p in self.parameters():
            p.requires_grad = flag
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _param(array):
    return Tensor(array, requires_grad=True, name="param")


class Dense(Module):
    def __init__(self, n_in, n_out, rng, dtype=np.float64):
        bound = np.sqrt(6.0 / n_in)
        self.W = _param(rng.uniform(-bound, bound, size=(n_in, n_out)).astype(dtype))
        self.b = _param(np.zeros(n_out, dtype=dtype))

    def forward(self, x):
        x = ag.as_tensor(x)
        if x.data.ndim != 2:
            raise ShapeMismatch(f"dense layer expects (batch, features), got {x.shape}")
        return ag.linear(x, self.W, self.b)


class BatchNorm(Module):
    _buffers = ("running_mean", "running_var")

    def __init__(self, width, momentum=0.1, eps=1e-5, dtype=np.float64):
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.gamma = _param(np.ones(width, dtype=dtype))
        self.beta = _param(np.zeros(width, dtype=dtype))
        self.running_mean = np.zeros(width, dtype=dtype)
        self.running_var = np.ones(width, dtype=dtype)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x):
        x = ag.as_tensor(x)
        if x.shape[-1] != self.gamma.shape[0]:
            raise ShapeMismatch(f"batchnorm width {self.gamma.shape[0]} got {x.shape}")
        if not self.training:
            return ag.batchnorm(x, self.gamma, self.beta, self.running_mean, self.running_var, self.eps)
        n = x.shape[0]
        if n < 2:
            raise BatchTooSmall("batch normalization in train mode needs at least 2 rows")
        m = self.momentum
        self.running_mean *= 1 - m
        self.running_mean += m * x.data.mean(axis=0)
        self.running_var *= 1 - m
        self.running_var += m * x.data.var(axis=0, ddof=1)
        return ag.batchnorm(x, self.gamma, self.beta, None, None, self.eps)


def activation(name):
    if name == "relu":
        return ag.relu
    if name == "leaky_relu":
        return ag.leaky_relu
    raise ValueError(f"unknown activation {name!r}")


class ResidualBlock(Module):
    """``y = x + f(x)`` with ``f = act(bn(dense(act(bn(dense(x))))))``."""

    def __init__(self, width, rng, batchnorm=True, act="relu", dtype=np.float64):
        self.dense1 = Dense(width, width, rng, dtype)
        self.dense2 = Dense(width, width, rng, dtype)
        self.bn1 = BatchNorm(width, dtype=dtype) if batchnorm else None
        self.bn2 = BatchNorm(width, dtype=dtype) if batchnorm else None
        self.act_name = act
        self.width = width

    def forward(self, x):
        x = ag.as_tensor(x)
        if x.shape[-1] != self.width:
            raise ShapeMismatch(f"residual block width {self.width} got {x.shape}")
        act = activation(self.act_name)
        h = self.dense1(x)
        if self.bn1 is not None:
            h = self.bn1(h)
        h = self.dense2(act(h))
        if self.bn2 is not None:
            h = self.bn2(h)
        return x + act(h)


class ResidualMLP(Module):
    """Input map, a stack of residual blocks, output map."""

    def __init__(self, n_in, n_out, width, n_blocks, rng, batchnorm=True,
                 act="relu", dtype=np.float64):
        self.input = Dense(n_in, width, rng, dtype)
        self.input_bn = BatchNorm(width, dtype=dtype) if batchnorm else None
        self.blocks = [ResidualBlock(width, rng, batchnorm, act, dtype) for _ in range(n_blocks)]
        self.output = Dense(width, n_out, rng, dtype)
        self.act_name = act
        self.n_in, self.n_out, self.width = n_in, n_out, width

    def forward(self, x):
        act = activation(self.act_name)
        h = self.input(x)
        if self.input_bn is not None:
            h = self.input_bn(h)
        h = act(h)
        for block in self.blocks:
            h = block(h)
        return self.output(h)
