import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tiny_config
from indrnn_har.errors import ClassTooSmall
from indrnn_har.nn import LRSchedule
from indrnn_har.pipeline.data import Dataset
from indrnn_har.pipeline.model import Classifier
from indrnn_har.pipeline.train import TrainConfig, train
from indrnn_har.pipeline.transfer import (
    FusedPredictor, TransferConfig, fuse_probabilities, stratified_halves, stratified_split, transfer_and_fuse,
)


def labelled(counts):
    return Dataset(activity=np.repeat(np.arange(len(counts)), counts), role="validation")


def test_even_class_split():
    ds = labelled([10, 10])
    for v in "AB":
        s = stratified_split(ds, v)
        assert np.bincount(s.transfer_train.activity).tolist() == [5, 5]
        assert not set(s.train_index) & set(s.val_index)


def test_odd_class_split():
    a = stratified_split(labelled([7]), "A")
    assert (len(a.transfer_train), len(a.transfer_val)) == (4, 3)
    b = stratified_split(labelled([7]), "B")
    assert (len(b.transfer_train), len(b.transfer_val)) == (3, 4)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(2, 15), min_size=1, max_size=8), st.randoms(use_true_random=False))
def test_split_partition_and_complement(counts, rnd):
    labels = np.repeat(np.arange(len(counts)), counts)
    rnd.shuffle(labels)
    ds = Dataset(activity=labels, role="validation")
    a, b = stratified_split(ds, "A"), stratified_split(ds, "B")
    n = len(labels)
    assert sorted(np.concatenate([a.train_index, a.val_index]).tolist()) == list(range(n))
    np.testing.assert_array_equal(a.train_index, b.val_index)
    np.testing.assert_array_equal(a.val_index, b.train_index)
    for c, k in enumerate(counts):
        # within one sample of an even split, per class
        assert abs(2 * np.sum(a.transfer_train.activity == c) - k) <= 1


def test_split_errors():
    with pytest.raises(ClassTooSmall):
        stratified_halves(np.array([0, 0, 1]))
    with pytest.raises(ValueError):
        stratified_split(labelled([4]), "C")


def test_fusion_example():
    fused = fuse_probabilities([np.array([[0.9, 0.1]]), np.array([[0.2, 0.8]])])
    np.testing.assert_allclose(fused, [[0.55, 0.45]])
    assert fused.argmax() == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(2, 8), st.integers(0, 1000))
def test_fusion_symmetric(n, k, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(k), n)
    q = rng.dirichlet(np.ones(k), n)
    assert np.array_equal(fuse_probabilities([p, q]), fuse_probabilities([q, p]))


@pytest.fixture(scope="module")
def base_model(tiny_sets):
    model = Classifier.create(tiny_config(), tiny_sets["train"].features, seed=1)
    cfg = TrainConfig(epochs=4, batch_size=32, schedule=LRSchedule(base_lr=3e-3, warmup_epochs=0))
    train(model, tiny_sets["train"], tiny_sets["val"], cfg)
    return model


def test_identical_models_fuse_to_either(base_model, tiny_sets):
    x = tiny_sets["val"].features
    fused = FusedPredictor([base_model, base_model.copy()])
    np.testing.assert_array_equal(fused.predict(x), base_model.predict(x))
    np.testing.assert_allclose(fused.predict_proba(x), base_model.predict_proba(x), rtol=1e-6)


def test_transfer_and_fuse_runs(base_model, tiny_sets):
    before = {k: v.copy() for k, v in base_model.net.parameters().items()}
    cfg = TransferConfig(lr=1e-3, epochs=3, batch_size=16, patience=2)
    res = transfer_and_fuse(base_model, tiny_sets["shift"], cfg, test_set=tiny_sets["val"])
    assert set(res.reports) == {"transferA_val", "transferB_val", "base_test", "transferA_test",
                                "transferB_test", "fused_test"}
    for k, v in base_model.net.parameters().items():
        assert np.array_equal(v, before[k])  # base untouched
    changed = any(not np.array_equal(v, before[k]) for k, v in res.model_a.net.parameters().items())
    assert changed
    assert len(res.history_a.history) <= 3
