"""Sequence layers with hand-written backward passes.

All sequence tensors are time-major, ``(T, batch, features)``. Every layer
caches what its backward pass needs during ``forward`` and writes parameter
gradients into ``self.grads`` (overwriting, not accumulating).
"""

from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from ..errors import DegenerateBatch, MissingCache, ShapeMismatch


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self._cache = None

    def children(self) -> Iterator[tuple[str, "Layer"]]:
        return iter(())

    def named_layers(self, prefix: str = "") -> Iterator[tuple[str, "Layer"]]:
        yield prefix, self
        for name, child in self.children():
            yield from child.named_layers(f"{prefix}.{name}" if prefix else name)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise MissingCache(f"{type(self).__name__}.backward called without a cached forward pass")
        return self._cache

    def zero_grads(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)


class IndRNN(Layer):
    """h_t = act(x_t W + u * h_{t-1} + b), one recurrent weight per neuron."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, activation: str = "relu",
                 recurrent_clip: float = 2.0 ** (1 / 21), dtype=np.float32):
        super().__init__()
        if activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {activation!r}")
        self.n_in, self.n_out = n_in, n_out
        self.activation = activation
        self.recurrent_clip = float(recurrent_clip)
        bound = 1.0 / np.sqrt(n_in)
        self.params["W"] = rng.uniform(-bound, bound, (n_in, n_out)).astype(dtype)
        self.params["u"] = rng.uniform(0.0, self.recurrent_clip, n_out).astype(dtype)
        self.params["b"] = np.zeros(n_out, dtype=dtype)
        self.zero_grads()
        self.grad_h0 = None

    def forward(self, x, train=False, h0=None):
        W, u, b = self.params["W"], self.params["u"], self.params["b"]
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ShapeMismatch(f"IndRNN expects (T, batch, {self.n_in}), got {x.shape}")
        T, B, _ = x.shape
        if h0 is None:
            h0 = np.zeros((B, self.n_out), dtype=x.dtype)
        elif h0.shape != (B, self.n_out):
            raise ShapeMismatch(f"h0 must be ({B}, {self.n_out}), got {h0.shape}")
        pre = (x.reshape(T * B, -1) @ W).reshape(T, B, -1) + b
        h = np.empty_like(pre)
        prev = h0
        relu = self.activation == "relu"
        for t in range(T):
            a = pre[t] + u * prev
            pre[t] = a
            prev = np.maximum(a, 0) if relu else a
            h[t] = prev
        self._cache = (x, h0, pre, h)
        return h

    def backward(self, dh):
        x, h0, pre, h = self._take_cache()
        W, u = self.params["W"], self.params["u"]
        T, B, _ = x.shape
        if dh.shape != h.shape:
            raise ShapeMismatch(f"grad_out shape {dh.shape} does not match output {h.shape}")
        da = np.empty_like(pre)
        carry = np.zeros((B, self.n_out), dtype=dh.dtype)
        du = np.zeros_like(u)
        relu = self.activation == "relu"
        for t in range(T - 1, -1, -1):
            g = dh[t] + carry
            if relu:
                g = g * (pre[t] > 0)
            da[t] = g
            h_prev = h[t - 1] if t > 0 else h0
            du += (g * h_prev).sum(axis=0)
            carry = g * u
        flat = da.reshape(T * B, -1)
        self.grads["W"] = x.reshape(T * B, -1).T @ flat
        self.grads["u"] = du
        self.grads["b"] = flat.sum(axis=0)
        self.grad_h0 = carry
        return (flat @ W.T).reshape(T, B, -1)

    def clip_recurrent(self):
        np.clip(self.params["u"], -self.recurrent_clip, self.recurrent_clip, out=self.params["u"])


def indrnn_forward(layer: IndRNN, x_seq, h0=None, train=False):
    return layer.forward(x_seq, train=train, h0=h0)


def indrnn_backward(layer: IndRNN, grad_out):
    dx = layer.backward(grad_out)
    return {"W": layer.grads["W"], "u": layer.grads["u"], "b": layer.grads["b"], "x": dx}


def clip_recurrent(layer: IndRNN) -> None:
    layer.clip_recurrent()


class BatchNorm(Layer):
    """Per-feature normalization with statistics pooled over time and batch."""

    def __init__(self, n: int, momentum: float = 0.1, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        if not eps > 0:
            raise ValueError("eps must be positive")
        self.momentum, self.eps = momentum, eps
        self.params["gamma"] = np.ones(n, dtype=dtype)
        self.params["beta"] = np.zeros(n, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(n, dtype=dtype)
        self.buffers["running_var"] = np.ones(n, dtype=dtype)
        self.zero_grads()

    def forward(self, x, train=False):
        gamma, beta = self.params["gamma"], self.params["beta"]
        axes = tuple(range(x.ndim - 1))
        if train:
            count = x.size // x.shape[-1]
            if count < 2:
                raise DegenerateBatch(f"batch norm needs at least 2 values per feature, got {count}")
            mean = x.mean(axis=axes)
            var = ((x - mean) ** 2).mean(axis=axes)
            m = self.momentum
            rm, rv = self.buffers["running_mean"], self.buffers["running_var"]
            rm *= 1 - m
            rm += m * mean.astype(rm.dtype)
            rv *= 1 - m
            rv += m * var.astype(rv.dtype)
        else:
            mean, var = self.buffers["running_mean"], self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, train)
        return (xhat * gamma + beta).astype(x.dtype, copy=False)

    def backward(self, dy):
        xhat, inv_std, train = self._take_cache()
        axes = tuple(range(dy.ndim - 1))
        gamma = self.params["gamma"]
        self.grads["gamma"] = (dy * xhat).sum(axis=axes)
        self.grads["beta"] = dy.sum(axis=axes)
        dxhat = dy * gamma
        if not train:
            return dxhat * inv_std
        n = dy.size // dy.shape[-1]
        return (inv_std / n) * (n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))


class Dropout(Layer):
    """Inverted dropout, active only in train mode.

    ``per_step`` draws a fresh mask for every time step; otherwise one mask
    per (batch, feature) is shared across time.
    """

    def __init__(self, rate: float, per_step: bool = False):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.per_step = per_step
        self.rng: Optional[np.random.Generator] = None

    def forward(self, x, train=False):
        if not train or self.rate == 0:
            self._cache = None
            return x
        if self.rng is None:
            raise RuntimeError("dropout layer has no random generator attached")
        shape = x.shape if self.per_step else (1,) + x.shape[1:]
        mask = (self.rng.random(shape) >= self.rate).astype(x.dtype) / (1 - self.rate)
        self._cache = mask
        return x * mask

    def backward(self, dy):
        return dy if self._cache is None else dy * self._cache


class Linear(Layer):
    """Affine map on the trailing axis (time-distributed for sequences)."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        bound = 1.0 / np.sqrt(n_in)
        self.params["W"] = rng.uniform(-bound, bound, (n_in, n_out)).astype(dtype)
        self.params["b"] = np.zeros(n_out, dtype=dtype)
        self.zero_grads()

    def forward(self, x, train=False):
        if x.shape[-1] != self.n_in:
            raise ShapeMismatch(f"Linear expects {self.n_in} input features, got {x.shape[-1]}")
        self._cache = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        x = self._take_cache()
        flat_x = x.reshape(-1, self.n_in)
        flat_dy = dy.reshape(-1, self.n_out)
        self.grads["W"] = flat_x.T @ flat_dy
        self.grads["b"] = flat_dy.sum(axis=0)
        return dy @ self.params["W"].T


class LastStep(Layer):
    def forward(self, x, train=False):
        self._cache = x.shape
        return x[-1]

    def backward(self, dy):
        shape = self._take_cache()
        dx = np.zeros(shape, dtype=dy.dtype)
        dx[-1] = dy
        return dx


class Sequential(Layer):
    def __init__(self, layers: list[tuple[str, Layer]]):
        super().__init__()
        self.layers = list(layers)

    def children(self):
        return iter(self.layers)

    def forward(self, x, train=False):
        for _, layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dy):
        for _, layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


def recurrent_unit(n_in: int, n_out: int, rng, dropout: float, *, activation="relu",
                   recurrent_clip=2.0 ** (1 / 21), momentum=0.1, eps=1e-5, dtype=np.float32) -> Sequential:
    """IndRNN followed by batch norm and (inter-layer, time-shared) dropout."""
    layers = [
        ("rnn", IndRNN(n_in, n_out, rng, activation, recurrent_clip, dtype)),
        ("bn", BatchNorm(n_out, momentum, eps, dtype)),
    ]
    if dropout > 0:
        layers.append(("drop", Dropout(dropout)))
    return Sequential(layers)


class DenseLayer(Layer):
    """Bottleneck unit then producer unit; output is ``concat(input, new)``."""

    def __init__(self, n_in: int, growth: int, rng, *, bottleneck_factor=4, bottleneck_dropout=0.1,
                 dense_dropout=0.5, **unit_kw):
        super().__init__()
        self.n_in, self.growth = n_in, growth
        width = bottleneck_factor * growth
        self.bottleneck = recurrent_unit(n_in, width, rng, bottleneck_dropout, **unit_kw)
        self.producer = recurrent_unit(width, growth, rng, dense_dropout, **unit_kw)

    @property
    def n_out(self):
        return self.n_in + self.growth

    def children(self):
        return iter([("bottleneck", self.bottleneck), ("producer", self.producer)])

    def forward(self, x, train=False):
        new = self.producer.forward(self.bottleneck.forward(x, train), train)
        self._cache = True
        return np.concatenate([x, new], axis=-1)

    def backward(self, dy):
        self._take_cache()
        dx = dy[..., : self.n_in]
        return dx + self.bottleneck.backward(self.producer.backward(dy[..., self.n_in:]))


class ResidualUnit(Layer):
    """y = x + f(x) where f is two equal-width recurrent units."""

    def __init__(self, width: int, rng, dropout: float, **unit_kw):
        super().__init__()
        self.body = Sequential([
            ("first", recurrent_unit(width, width, rng, dropout, **unit_kw)),
            ("second", recurrent_unit(width, width, rng, 0.0, **unit_kw)),
        ])

    def children(self):
        return iter([("body", self.body)])

    def forward(self, x, train=False):
        self._cache = True
        return x + self.body.forward(x, train)

    def backward(self, dy):
        self._take_cache()
        return dy + self.body.backward(dy)
