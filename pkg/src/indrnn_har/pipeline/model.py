"""A trained classifier: network plus the feature pipeline it expects."""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import CorruptCheckpoint, ShapeMismatch
from ..features import FeatureConfig, FeatureScaler, WindowSpec
from ..nn import Adam, Network, build_network, load_checkpoint, save_checkpoint
from ..nn.network import NetworkConfig
from ..sensor_model import Activity
from .data import LOCATION_GROUPS, Dataset
from .metrics import EvalReport, report

ACTIVITY_NAMES = tuple(a.name for a in Activity)


@dataclass
class Classifier:
    net: Network
    scaler: FeatureScaler
    window: WindowSpec = WindowSpec()
    features: FeatureConfig = FeatureConfig()
    target: str = "activity"

    @classmethod
    def create(cls, cfg: NetworkConfig, train_features: np.ndarray, *, window=WindowSpec(),
               features=FeatureConfig(), target="activity", seed=0, dtype=np.float32) -> "Classifier":
        """New network with a z-score scaler fitted on ``train_features``."""
        net = build_network(cfg, train_features.shape[-1], seed=seed, dtype=dtype)
        return cls(net, FeatureScaler.fit(train_features), window, features, target)

    @property
    def class_names(self) -> tuple:
        return LOCATION_GROUPS if self.target == "location_group" else ACTIVITY_NAMES[: self.net.cfg.n_classes]

    def _check(self, feats: np.ndarray) -> None:
        if feats.ndim != 3 or feats.shape[-1] != self.net.input_dim:
            raise ShapeMismatch(f"model expects (N, T, {self.net.input_dim}) features, got {feats.shape}")

    def predict_proba(self, feats: np.ndarray, batch_size: int = 256) -> np.ndarray:
        feats = np.asarray(feats)
        self._check(feats)
        return self.net.predict_proba(self.scaler.transform(feats), batch_size)

    def predict(self, feats: np.ndarray) -> np.ndarray:
        return self.predict_proba(feats).argmax(axis=1)

    def copy(self) -> "Classifier":
        dup = copy.deepcopy(self)
        dup.net.set_seed(0)
        return dup

    def state(self) -> dict:
        """Snapshot of parameters and buffers."""
        return {"params": {k: v.copy() for k, v in self.net.parameters().items()},
                "buffers": {k: v.copy() for k, v in self.net.named_buffers().items()}}

    def load_state(self, state: dict) -> None:
        for name, layer, key in self.net.named_parameters():
            layer.params[key][...] = state["params"][name]
        layers = dict(self.net.named_layers())
        for name, value in state["buffers"].items():
            lpath, key = name.rsplit(".", 1)
            layers[lpath].buffers[key][...] = value

    def save(self, path, optimizer: Optional[Adam] = None, meta: Optional[dict] = None) -> None:
        info = {
            "window": dataclasses.asdict(self.window),
            "features": dataclasses.asdict(self.features),
            "target": self.target,
        }
        info.update(meta or {})
        save_checkpoint(path, self.net, optimizer, self.scaler.mean, self.scaler.std, info)

    @classmethod
    def load(cls, path, expected_config: Optional[NetworkConfig] = None) -> tuple["Classifier", Optional[Adam], dict]:
        ck = load_checkpoint(path, expected_config)
        if ck.scaler_mean is None:
            raise CorruptCheckpoint(f"{path}: no normalization statistics stored")
        meta = dict(ck.meta)
        model = cls(
            ck.net,
            FeatureScaler(ck.scaler_mean, ck.scaler_std),
            WindowSpec(**meta.pop("window", {})),
            FeatureConfig(**meta.pop("features", {})),
            meta.pop("target", "activity"),
        )
        return model, ck.optimizer, meta


def evaluate(model, dataset: Dataset, target: Optional[str] = None) -> EvalReport:
    """Score ``model`` on a featurized dataset.

    ``model`` is anything exposing ``predict_proba`` over raw feature
    tensors (a :class:`Classifier` or a fused predictor).
    """
    if dataset.features is None:
        raise ValueError("dataset must be featurized before evaluation")
    target = target or getattr(model, "target", "activity")
    probs = model.predict_proba(dataset.features)
    k = probs.shape[1]
    names = getattr(model, "class_names", None)
    return report(dataset.targets(target), probs.argmax(axis=1), k, names)
