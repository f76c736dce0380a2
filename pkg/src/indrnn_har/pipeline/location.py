"""Two-group location recognition (Bag+Hand vs Hips+Torso)."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .data import LOCATION_GROUPS, Dataset
from .model import Classifier


def majority_vote(labels: Iterable[str]) -> str:
    """Most common label; ties resolve to the lexicographically first."""
    counts = Counter(labels)
    if not counts:
        raise ValueError("cannot vote over an empty label list")
    top = max(counts.values())
    return min(label for label, c in counts.items() if c == top)


@dataclass(frozen=True)
class LocationDecision:
    per_sample: tuple
    group: str

    def counts(self) -> dict:
        return {g: self.per_sample.count(g) for g in LOCATION_GROUPS}


def recognize_location_group(samples, location_net: Classifier) -> LocationDecision:
    """Classify each sample into a location group and vote for the dataset.

    ``samples`` is a featurized :class:`Dataset` or a raw ``(N, T, F)``
    feature tensor; ``location_net`` must be trained on group targets.
    """
    if location_net.target != "location_group":
        raise ValueError("location_net must be trained with location_group targets")
    feats = samples.features if isinstance(samples, Dataset) else np.asarray(samples)
    if feats is None:
        raise ValueError("dataset must be featurized")
    pred = location_net.predict(feats)
    per_sample = tuple(LOCATION_GROUPS[int(p)] for p in pred)
    return LocationDecision(per_sample, majority_vote(per_sample))
