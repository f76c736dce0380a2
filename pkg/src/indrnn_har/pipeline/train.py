"""Mini-batch training with best-validation model selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..nn import Adam, LRSchedule, adam_step, cross_entropy, softmax
from .data import Dataset
from .model import Classifier, evaluate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 128
    schedule: LRSchedule = LRSchedule()
    # Stop once validation F1 has not improved for this many epochs.
    early_stop_patience: Optional[int] = None
    # Stop as soon as validation F1 reaches this value.
    target_f1: Optional[float] = None
    seed: int = 0


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_f1: float


@dataclass
class TrainResult:
    model: Classifier
    optimizer: Adam
    history: list = field(default_factory=list)
    best_epoch: int = -1
    best_f1: float = -1.0

    def history_csv(self) -> str:
        rows = ["epoch,lr,train_loss,val_f1"]
        rows += [f"{r.epoch},{r.lr:.6g},{r.train_loss:.8f},{r.val_f1:.8f}" for r in self.history]
        return "\n".join(rows) + "\n"

    def epochs_to_reach(self, threshold: float) -> Optional[int]:
        """1-based epoch count at which validation F1 first reached ``threshold``."""
        for r in self.history:
            if r.val_f1 >= threshold:
                return r.epoch + 1
        return None


def train(model: Classifier, train_set: Dataset, val_set: Dataset, cfg: TrainConfig = TrainConfig(),
          optimizer: Optional[Adam] = None) -> TrainResult:
    """Train ``model`` in place and restore its best-validation-F1 state.

    Mini-batches are reshuffled each epoch from a generator seeded by
    ``cfg.seed``; dropout masks come from the network generator reseeded
    with ``cfg.seed + 1``.
    """
    if train_set.features is None or val_set.features is None:
        raise ValueError("datasets must be featurized before training")
    x = train_set.features
    y = train_set.targets(model.target)
    x_norm = model.scaler.transform(x)
    net = model.net
    net.set_seed(cfg.seed + 1)
    rng = np.random.default_rng(cfg.seed)
    opt = optimizer if optimizer is not None else Adam(lr=cfg.schedule.base_lr)
    result = TrainResult(model=model, optimizer=opt)
    best_state = None
    stale = 0
    val_history: list[float] = []

    for epoch in range(cfg.epochs):
        opt.lr = cfg.schedule(epoch, val_history)
        order = rng.permutation(len(x_norm))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start: start + cfg.batch_size]
            logits = net.forward(x_norm[idx], train=True)
            loss, dlogits = cross_entropy(softmax(logits.astype(np.float64)), y[idx])
            net.backward(dlogits)
            adam_step(opt, net)
            losses.append(loss * len(idx))
        train_loss = float(np.sum(losses) / len(order))
        val_f1 = evaluate(model, val_set).macro_f1
        val_history.append(val_f1)
        result.history.append(EpochRecord(epoch, opt.lr, train_loss, val_f1))
        log.info("epoch %d lr %.3g loss %.4f val_f1 %.4f", epoch, opt.lr, train_loss, val_f1)
        if val_f1 > result.best_f1:
            result.best_f1, result.best_epoch = val_f1, epoch
            best_state = model.state()
            stale = 0
        else:
            stale += 1
        if cfg.target_f1 is not None and val_f1 >= cfg.target_f1:
            break
        if cfg.early_stop_patience is not None and stale >= cfg.early_stop_patience:
            break

    if best_state is not None:
        model.load_state(best_state)
    return result
