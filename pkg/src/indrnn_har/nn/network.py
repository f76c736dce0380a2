"""Plain, residual and dense IndRNN classifiers."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from ..errors import BadConfig, ShapeMismatch
from .layers import (
    BatchNorm, DenseLayer, Dropout, IndRNN, LastStep, Layer, Linear, ResidualUnit, Sequential,
    recurrent_unit,
)
from .loss import softmax

ARCHITECTURES = ("plain", "residual", "dense")
DROPOUT_KEYS = ("input", "dense_layer", "bottleneck", "transition")


def default_dropout() -> dict:
    return {"input": 0.5, "dense_layer": 0.5, "bottleneck": 0.1, "transition": 0.3}


@dataclass(frozen=True)
class NetworkConfig:
    architecture: str = "dense"
    block_layers: tuple = (8, 6, 4)
    growth_rate: int = 48
    transition_compression: float = 0.5
    dropout: dict = field(default_factory=default_dropout)
    n_classes: int = 8
    # Width of the input projection layer (dense); defaults to 2 * growth_rate.
    stem_size: Optional[int] = None
    # Width of plain/residual layers; defaults to bottleneck_factor * growth_rate.
    hidden_size: Optional[int] = None
    plain_layers: int = 6
    bottleneck_factor: int = 4
    activation: str = "relu"
    max_memory: float = 2.0
    seq_len: int = 21
    recurrent_clip: Optional[float] = None
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "block_layers", tuple(int(n) for n in self.block_layers))
        drop = default_dropout()
        drop.update(self.dropout or {})
        object.__setattr__(self, "dropout", drop)
        self.validate()

    def validate(self):
        if self.architecture not in ARCHITECTURES:
            raise BadConfig(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if not self.block_layers or any(n < 1 for n in self.block_layers):
            raise BadConfig(f"block_layers must be a nonempty tuple of positive counts, got {self.block_layers}")
        if not 0 < self.transition_compression <= 1:
            raise BadConfig(f"transition_compression must be in (0, 1], got {self.transition_compression}")
        unknown = set(self.dropout) - set(DROPOUT_KEYS)
        if unknown:
            raise BadConfig(f"unknown dropout keys {sorted(unknown)}")
        for k, p in self.dropout.items():
            if not 0 <= p < 1:
                raise BadConfig(f"dropout[{k!r}] must be in [0, 1), got {p}")
        for name in ("growth_rate", "n_classes", "plain_layers", "bottleneck_factor", "seq_len"):
            if getattr(self, name) < 1:
                raise BadConfig(f"{name} must be positive")
        if self.n_classes < 2:
            raise BadConfig("n_classes must be at least 2")
        if self.max_memory <= 0 or (self.recurrent_clip is not None and self.recurrent_clip <= 0):
            raise BadConfig("recurrent bound must be positive")

    @property
    def clip(self) -> float:
        if self.recurrent_clip is not None:
            return float(self.recurrent_clip)
        return float(self.max_memory ** (1.0 / self.seq_len))

    @property
    def stem_width(self) -> int:
        return self.stem_size or 2 * self.growth_rate

    @property
    def hidden_width(self) -> int:
        return self.hidden_size or self.bottleneck_factor * self.growth_rate

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["block_layers"] = list(self.block_layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise BadConfig(f"unknown network config keys {sorted(extra)}")
        return cls(**d)


class Network(Layer):
    """Input dropout, recurrent body, last-step affine classifier.

    ``forward`` takes batch-major ``(batch, T, F)`` features and returns
    logits ``(batch, n_classes)``; :meth:`predict_proba` adds the softmax.
    """

    def __init__(self, cfg: NetworkConfig, input_dim: int, body: Sequential, body_width: int,
                 rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        self.input_dim = input_dim
        self.dtype = np.dtype(dtype)
        self.input_dropout = Dropout(cfg.dropout["input"], per_step=True)
        self.body = body
        self.last = LastStep()
        self.classifier = Linear(body_width, cfg.n_classes, rng, dtype)
        self.set_seed(0)

    def children(self):
        return iter([("input_dropout", self.input_dropout), ("body", self.body),
                     ("last", self.last), ("classifier", self.classifier)])

    def set_seed(self, seed) -> None:
        """Reset the generator that draws dropout masks."""
        self.rng = np.random.default_rng(seed)
        for _, layer in self.named_layers():
            if isinstance(layer, Dropout):
                layer.rng = self.rng

    def forward(self, x, train=False):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise ShapeMismatch(f"network expects (batch, T, {self.input_dim}), got {x.shape}")
        h = np.ascontiguousarray(x.transpose(1, 0, 2))
        h = self.input_dropout.forward(h, train)
        h = self.body.forward(h, train)
        return self.classifier.forward(self.last.forward(h, train), train)

    def backward(self, dlogits):
        d = self.classifier.backward(np.asarray(dlogits, dtype=self.dtype))
        d = self.body.backward(self.last.backward(d))
        d = self.input_dropout.backward(d)
        return d.transpose(1, 0, 2)

    def predict_proba(self, x, batch_size: int = 256) -> np.ndarray:
        out = [softmax(self.forward(x[i:i + batch_size], train=False)) for i in range(0, len(x), batch_size)]
        return np.concatenate(out, axis=0) if out else np.zeros((0, self.cfg.n_classes), self.dtype)

    # Parameter access -------------------------------------------------------

    def named_parameters(self) -> Iterator[tuple[str, Layer, str]]:
        for path, layer in self.named_layers():
            for key in layer.params:
                yield f"{path}.{key}" if path else key, layer, key

    def parameters(self) -> dict[str, np.ndarray]:
        return {name: layer.params[key] for name, layer, key in self.named_parameters()}

    def gradients(self) -> dict[str, np.ndarray]:
        return {name: layer.grads[key] for name, layer, key in self.named_parameters()}

    def named_buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for path, layer in self.named_layers():
            for key, buf in layer.buffers.items():
                out[f"{path}.{key}"] = buf
        return out

    def indrnn_layers(self) -> list[IndRNN]:
        return [layer for _, layer in self.named_layers() if isinstance(layer, IndRNN)]

    def clip_recurrent(self) -> None:
        for layer in self.indrnn_layers():
            layer.clip_recurrent()

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())


def build_network(cfg: NetworkConfig, input_dim: int, seed: int = 0, dtype=np.float32) -> Network:
    """Construct a network for ``cfg`` on ``input_dim`` input features.

    dense: input projection, dense blocks of concatenating dense layers,
    compressing transitions between blocks. residual: affine projection to a
    fixed width, then ``sum(block_layers)`` residual units of two layers.
    plain: ``plain_layers`` stacked recurrent units.
    """
    if not isinstance(cfg, NetworkConfig):
        raise BadConfig(f"expected NetworkConfig, got {type(cfg).__name__}")
    cfg.validate()
    if input_dim < 1:
        raise BadConfig("input_dim must be positive")
    rng = np.random.default_rng(seed)
    unit_kw = dict(activation=cfg.activation, recurrent_clip=cfg.clip, momentum=cfg.bn_momentum,
                   eps=cfg.bn_eps, dtype=dtype)
    drop = cfg.dropout
    layers: list[tuple[str, Layer]] = []

    if cfg.architecture == "dense":
        width = cfg.stem_width
        layers.append(("stem", recurrent_unit(input_dim, width, rng, 0.0, **unit_kw)))
        for bi, n_layers in enumerate(cfg.block_layers):
            block = []
            for li in range(n_layers):
                dl = DenseLayer(width, cfg.growth_rate, rng, bottleneck_factor=cfg.bottleneck_factor,
                                bottleneck_dropout=drop["bottleneck"], dense_dropout=drop["dense_layer"],
                                **unit_kw)
                block.append((f"layer{li}", dl))
                width = dl.n_out
            layers.append((f"block{bi}", Sequential(block)))
            if bi < len(cfg.block_layers) - 1:
                out = max(1, int(np.floor(width * cfg.transition_compression)))
                layers.append((f"transition{bi}", recurrent_unit(width, out, rng, drop["transition"], **unit_kw)))
                width = out
    elif cfg.architecture == "residual":
        width = cfg.hidden_width
        if input_dim != width:
            layers.append(("projection", Linear(input_dim, width, rng, dtype)))
        for bi, n_layers in enumerate(cfg.block_layers):
            block = [(f"unit{ui}", ResidualUnit(width, rng, drop["dense_layer"], **unit_kw))
                     for ui in range(n_layers)]
            layers.append((f"block{bi}", Sequential(block)))
    else:
        width = input_dim
        for li in range(cfg.plain_layers):
            layers.append((f"layer{li}", recurrent_unit(width, cfg.hidden_width, rng, drop["dense_layer"], **unit_kw)))
            width = cfg.hidden_width

    return Network(cfg, input_dim, Sequential(layers), width, rng, dtype)
