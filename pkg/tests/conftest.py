import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_sets():
    """Small featurized train/val/test sets on the synthetic task."""
    from indrnn_har.pipeline.data import SyntheticSpec, synthesize

    def make(n, seed, role, **kw):
        spec = SyntheticSpec(n_per_class=n, noise=0.5, seed=seed, role=role, **kw)
        return synthesize(spec).featurize()

    return {
        "train": make(12, 11, "train", locations=("Bag", "Hips", "Torso", "Hand")),
        "val": make(4, 12, "validation", locations=("Bag", "Hips", "Torso", "Hand")),
        "shift": make(6, 13, "validation", users=(2, 3)),
    }


def tiny_config(**kw):
    from indrnn_har.nn import NetworkConfig
    base = dict(architecture="plain", plain_layers=2, hidden_size=16,
                dropout={"input": 0.1, "dense_layer": 0.1})
    base.update(kw)
    return NetworkConfig(**base)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
