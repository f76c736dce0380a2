"""Stratified transfer splits, fine-tuning and fusion of the two transfer models."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import ClassTooSmall
from ..nn import LRSchedule
from .data import Dataset
from .metrics import EvalReport
from .model import Classifier, evaluate
from .train import TrainConfig, TrainResult, train


@dataclass
class TransferSplit:
    transfer_train: Dataset
    transfer_val: Dataset
    variant: str
    train_index: np.ndarray = field(repr=False, default=None)
    val_index: np.ndarray = field(repr=False, default=None)


def stratified_halves(labels: np.ndarray, n_classes: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Per class, split indices (stable order) into a first and second half.

    The first half takes the extra sample of an odd-sized class.
    """
    labels = np.asarray(labels)
    first, second = [], []
    classes = np.unique(labels) if n_classes is None else np.arange(n_classes)
    for c in classes:
        idx = np.flatnonzero(labels == c)
        if len(idx) == 0 and n_classes is not None:
            continue
        if len(idx) < 2:
            raise ClassTooSmall(f"class {int(c)} has {len(idx)} sample(s); need at least 2 to split")
        cut = (len(idx) + 1) // 2
        first.append(idx[:cut])
        second.append(idx[cut:])
    return np.sort(np.concatenate(first)), np.sort(np.concatenate(second))


def stratified_split(val_set: Dataset, variant: str = "A", target: str = "activity") -> TransferSplit:
    """Variant A trains on each class's first half; variant B swaps the halves.

    The halves are fixed, so B is the exact swap of A. An odd-sized class
    puts its extra sample in the first half, i.e. in A's training set.
    """
    if variant not in ("A", "B"):
        raise ValueError(f"variant must be 'A' or 'B', got {variant!r}")
    first, second = stratified_halves(val_set.targets(target))
    train_idx, val_idx = (first, second) if variant == "A" else (second, first)
    return TransferSplit(
        transfer_train=val_set.subset(train_idx, role="train"),
        transfer_val=val_set.subset(val_idx, role="validation"),
        variant=variant,
        train_index=train_idx,
        val_index=val_idx,
    )


class FusedPredictor:
    """Averages the softmax outputs of several classifiers."""

    def __init__(self, models: Sequence[Classifier]):
        if not models:
            raise ValueError("need at least one model to fuse")
        self.models = list(models)
        self.target = self.models[0].target
        self.class_names = self.models[0].class_names

    def predict_proba(self, feats: np.ndarray) -> np.ndarray:
        return fuse_probabilities([m.predict_proba(feats) for m in self.models])

    def predict(self, feats: np.ndarray) -> np.ndarray:
        return self.predict_proba(feats).argmax(axis=1)


def fuse_probabilities(probs: Sequence[np.ndarray]) -> np.ndarray:
    stacked = np.stack([np.asarray(p, dtype=np.float64) for p in probs])
    return stacked.mean(axis=0)


@dataclass(frozen=True)
class TransferConfig:
    lr: float = 2e-5
    epochs: int = 100
    batch_size: int = 128
    patience: int = 20
    seed: int = 0

    def train_config(self, seed_offset: int = 0) -> TrainConfig:
        sched = LRSchedule(base_lr=self.lr, warmup_lr=self.lr, warmup_epochs=0, patience=10 ** 9)
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, schedule=sched,
                           early_stop_patience=self.patience, seed=self.seed + seed_offset)


@dataclass
class TransferResult:
    model_a: Classifier
    model_b: Classifier
    fused: FusedPredictor
    history_a: TrainResult
    history_b: TrainResult
    reports: dict = field(default_factory=dict)


def transfer_and_fuse(base: Classifier, val_set: Dataset, cfg: TransferConfig = TransferConfig(),
                      test_set: Optional[Dataset] = None) -> TransferResult:
    """Fine-tune two copies of ``base`` on complementary stratified halves.

    All parameters are updated; each copy early-stops on its own transfer
    validation F1. Reports cover each model on its transfer validation half
    and, when ``test_set`` is given, TransferA, TransferB, the fused model
    and the untouched base model on the test set.
    """
    models = {}
    histories = {}
    reports: dict[str, EvalReport] = {}
    for offset, variant in enumerate(("A", "B")):
        split = stratified_split(val_set, variant, base.target)
        model = base.copy()
        hist = train(model, split.transfer_train, split.transfer_val, cfg.train_config(offset))
        models[variant], histories[variant] = model, hist
        reports[f"transfer{variant}_val"] = evaluate(model, split.transfer_val)
    fused = FusedPredictor([models["A"], models["B"]])
    if test_set is not None:
        reports["base_test"] = evaluate(base, test_set)
        reports["transferA_test"] = evaluate(models["A"], test_set)
        reports["transferB_test"] = evaluate(models["B"], test_set)
        reports["fused_test"] = evaluate(fused, test_set)
    return TransferResult(models["A"], models["B"], fused, histories["A"], histories["B"], reports)
