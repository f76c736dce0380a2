"""Adam with bias correction and the warmup / plateau learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ShapeMismatch


@dataclass
class Adam:
    lr: float = 8e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict) -> None:
        """Update ``params`` in place from ``grads`` (matching names/shapes)."""
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ShapeMismatch(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            if m.shape != p.shape:
                raise ShapeMismatch(f"optimizer moment for {name} has shape {m.shape}, parameter {p.shape}")
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype, copy=False)


def adam_step(opt: Adam, net, grads: dict | None = None) -> None:
    """One Adam update of ``net`` followed by recurrent-weight clipping."""
    opt.step(net.parameters(), net.gradients() if grads is None else grads)
    net.clip_recurrent()


@dataclass(frozen=True)
class LRSchedule:
    base_lr: float = 8e-5
    warmup_lr: float = 2e-5
    warmup_epochs: int = 10
    patience: int = 100
    decay_factor: float = 10.0
    max_drops: int = 2

    def __call__(self, epoch: int, history: Sequence[float]) -> float:
        return lr_schedule(epoch, history, self)


def count_drops(history: Sequence[float], sched: LRSchedule) -> int:
    """Number of plateau drops triggered by the metric history so far."""
    best = -np.inf
    stale = 0
    drops = 0
    for value in history:
        if value > best:
            best = value
            stale = 0
        else:
            stale += 1
            if stale >= sched.patience and drops < sched.max_drops:
                drops += 1
                stale = 0
    return drops


def lr_schedule(epoch: int, history: Sequence[float], sched: LRSchedule = LRSchedule()) -> float:
    """Learning rate for ``epoch`` given validation metrics of earlier epochs."""
    if epoch < sched.warmup_epochs:
        return sched.warmup_lr
    return sched.base_lr / sched.decay_factor ** count_drops(history, sched)
