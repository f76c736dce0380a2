import numpy as np
import pytest

from indrnn_har.errors import BadSpec, ChannelCountMismatch, RaggedMatrix, UnknownLabel
from indrnn_har.features import fft_amplitude, segment
from indrnn_har.pipeline.data import (
    CHANNEL_FILES, LABEL_FILE, ClassRecipe, Dataset, SyntheticSpec, default_recipes, ingest, location_group,
    synthesize, write_dataset,
)
from indrnn_har.sensor_model import RawSample


@pytest.fixture(scope="module")
def small():
    return synthesize(SyntheticSpec(n_per_class=3, seed=5, locations=("Bag", "Hips", "Torso", "Hand")))


def test_synth_balanced_and_deterministic():
    spec = SyntheticSpec(n_per_class=50, seed=1)
    a, b = synthesize(spec), synthesize(spec)
    assert len(a) == 400
    assert np.bincount(a.activity).tolist() == [50] * 8
    for k in a.raw:
        assert a.raw[k].tobytes() == b.raw[k].tobytes()
    c = synthesize(SyntheticSpec(n_per_class=50, seed=2))
    assert a.raw["accelerometer"].tobytes() != c.raw["accelerometer"].tobytes()


def test_synth_class_counts_and_assignment():
    ds = synthesize(SyntheticSpec(class_counts=(2, 3, 1, 1, 1, 1, 1, 4), users=(1, 2), locations=("Bag", "Hand")))
    assert np.bincount(ds.activity).tolist() == [2, 3, 1, 1, 1, 1, 1, 4]
    last = ds.activity == 7
    assert ds.user[last].tolist() == [1, 2, 1, 2]
    assert ds.location[last].tolist() == [0, 0, 3, 3]


def test_synth_quaternions_unit(small):
    q = small.raw["orientation"].astype(np.float64)
    np.testing.assert_allclose(np.linalg.norm(q, axis=-1), 1, atol=1e-6)


@pytest.mark.parametrize("bad", [
    {"recipes": tuple(ClassRecipe(55.0) if i == 0 else r for i, r in enumerate(default_recipes()))},
    {"recipes": tuple(ClassRecipe(20.0) if i == 0 else r for i, r in enumerate(default_recipes()))},
    {"users": (9,)},
    {"locations": ("Pocket",)},
    {"noise": -1.0},
    {"class_counts": (0,) * 8},
])
def test_bad_spec(bad):
    with pytest.raises(BadSpec):
        synthesize(SyntheticSpec(**bad))


def test_spec_dict_roundtrip():
    spec = SyntheticSpec(users=(1, 3), locations=("Torso",), seed=4)
    assert SyntheticSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(BadSpec):
        SyntheticSpec.from_dict({"bogus": 1})


def test_noise_free_peak_at_base_bin():
    ds = synthesize(SyntheticSpec(n_per_class=2, noise=0.0, seed=3, freq_jitter=0.0))
    ch = ds.channels().astype(np.float64)
    recipes = default_recipes()
    for i in range(len(ds)):
        base = int(round(recipes[ds.activity[i]].base_freq))  # 100-frame window at 100 Hz: 1 Hz per bin
        for w in segment(ch[i])[[0, 10, 20]]:
            for c in range(9):  # pressure carries a drift ramp
                spec = fft_amplitude(w[:, c])
                assert 1 + spec[1:].argmax() == base


def test_location_groups():
    assert location_group([0, 1, 2, 3]).tolist() == [0, 1, 1, 0]


def test_dataset_validation(small):
    with pytest.raises(ValueError):
        Dataset(activity=np.array([], dtype=int))
    with pytest.raises(ValueError):
        Dataset(activity=[0, 1], role="holdout")
    sub = small.subset([2, 0])
    assert sub.activity.tolist() == [small.activity[2], small.activity[0]]
    assert isinstance(sub.sample(0), RawSample)


def test_featurize_preserves_order(small):
    feats = small.featurize().features
    assert feats.shape == (len(small), 21, 580)
    rev = small.subset(np.arange(len(small))[::-1]).featurize().features
    np.testing.assert_array_equal(rev[::-1], feats)


def test_write_then_ingest(tmp_path, small):
    files = write_dataset(small, tmp_path)
    assert len(files) == 14 + 3  # channels, labels, locations, users
    back = ingest(tmp_path, role="test")
    assert back.role == "test"
    np.testing.assert_array_equal(back.activity, small.activity)
    np.testing.assert_array_equal(back.location, small.location)
    np.testing.assert_array_equal(back.user, small.user)
    for k, v in small.raw.items():
        np.testing.assert_allclose(back.raw[k], v, rtol=1e-6, atol=1e-6)


def _write_minimal(d, n=3, rng=None):
    rng = rng or np.random.default_rng(0)
    for files in CHANNEL_FILES.values():
        for f in files:
            vals = rng.normal(size=(n, 500))
            if f == "Ori_w.txt":
                vals = np.ones((n, 500))
            elif f.startswith("Ori"):
                vals = np.zeros((n, 500))
            np.savetxt(d / f, vals, fmt="%.6f")
    np.savetxt(d / LABEL_FILE, np.ones((n, 500)), fmt="%d")


def test_ingest_three_samples(tmp_path):
    _write_minimal(tmp_path)
    ds = ingest(tmp_path)
    assert len(ds) == 3
    assert ds.channels().shape == (3, 500, 10)
    assert ds.location is None


def test_ingest_ragged_row(tmp_path):
    _write_minimal(tmp_path)
    lines = (tmp_path / "Gyr_y.txt").read_text().splitlines()
    lines[1] = " ".join(lines[1].split()[:499])
    (tmp_path / "Gyr_y.txt").write_text("\n".join(lines) + "\n")
    with pytest.raises(RaggedMatrix, match="row 1"):
        ingest(tmp_path)


def test_ingest_majority_label(tmp_path):
    _write_minimal(tmp_path, n=2)
    labels = np.ones((2, 500), dtype=int)
    labels[0, :200] = 2            # 300 x label 1, 200 x label 2
    labels[1, :] = 5
    np.savetxt(tmp_path / LABEL_FILE, labels, fmt="%d")
    ds = ingest(tmp_path)
    assert ds.activity.tolist() == [0, 4]  # codes 1 and 5, zero-based


def test_ingest_unknown_label(tmp_path):
    _write_minimal(tmp_path)
    labels = np.ones((3, 500), dtype=int)
    labels[2, 7] = 9
    np.savetxt(tmp_path / LABEL_FILE, labels, fmt="%d")
    with pytest.raises(UnknownLabel, match="row 2 frame 7"):
        ingest(tmp_path)


def test_ingest_missing_channel(tmp_path):
    _write_minimal(tmp_path)
    (tmp_path / "Mag_z.txt").unlink()
    with pytest.raises(ChannelCountMismatch, match="Mag_z.txt"):
        ingest(tmp_path)


def test_ingest_row_count_mismatch(tmp_path):
    _write_minimal(tmp_path)
    np.savetxt(tmp_path / "Acc_x.txt", np.zeros((2, 500)))
    with pytest.raises(ChannelCountMismatch):
        ingest(tmp_path)
