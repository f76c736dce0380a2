import numpy as np
import pytest

from indrnn_har.errors import CorruptCheckpoint
from indrnn_har.nn import Adam, adam_step, build_network, cross_entropy, load_checkpoint, save_checkpoint, softmax

import gradcheck


@pytest.fixture
def trained(rng):
    cfg = gradcheck.small_dense_config(dropout={"input": 0.1})
    net = build_network(cfg, 5)
    opt = Adam(lr=1e-2)
    x = rng.normal(size=(4, 21, 5)).astype(np.float32)
    y = np.array([0, 1, 2, 3])
    for _ in range(3):
        _, d = cross_entropy(softmax(net.forward(x, train=True)), y)
        net.backward(d)
        adam_step(opt, net)
    return cfg, net, opt, x


def test_roundtrip_bit_exact(tmp_path, trained):
    cfg, net, opt, x = trained
    path = tmp_path / "m.ckpt"
    mean, std = np.arange(5, dtype=np.float32), np.ones(5, np.float32)
    save_checkpoint(path, net, opt, mean, std, {"note": "x", "n": 3})
    ck = load_checkpoint(path, expected_config=cfg, expected_input_dim=5)
    assert ck.net.forward(x).tobytes() == net.forward(x).tobytes()
    for k, v in net.parameters().items():
        assert ck.net.parameters()[k].tobytes() == v.tobytes()
    for k, v in net.named_buffers().items():
        assert ck.net.named_buffers()[k].tobytes() == v.tobytes()
    assert ck.meta == {"note": "x", "n": 3}
    assert ck.optimizer.t == opt.t and ck.optimizer.lr == opt.lr
    for k in opt.m:
        assert ck.optimizer.m[k].tobytes() == opt.m[k].tobytes()
    np.testing.assert_array_equal(ck.scaler_mean, mean)
    save_checkpoint(tmp_path / "again.ckpt", ck.net, ck.optimizer, ck.scaler_mean, ck.scaler_std, ck.meta)
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_float64_roundtrip(tmp_path, rng):
    net = build_network(gradcheck.small_dense_config(), 5, dtype=np.float64)
    save_checkpoint(tmp_path / "d.ckpt", net)
    ck = load_checkpoint(tmp_path / "d.ckpt")
    x = rng.normal(size=(2, 21, 5))
    assert ck.net.forward(x).tobytes() == net.forward(x).tobytes()
    assert ck.optimizer is None and ck.scaler_mean is None


@pytest.mark.parametrize("damage", ["truncate", "flip", "magic", "empty"])
def test_corrupt_files_rejected(tmp_path, trained, damage):
    _, net, opt, _ = trained
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, net, opt)
    buf = bytearray(path.read_bytes())
    if damage == "truncate":
        buf = buf[: len(buf) // 2]
    elif damage == "flip":
        buf[len(buf) // 2] ^= 0xFF
    elif damage == "magic":
        buf[:8] = b"XXXXXXXX"
    else:
        buf = bytearray()
    path.write_bytes(bytes(buf))
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(path)


def test_config_mismatch_reports_diff(tmp_path, trained):
    cfg, net, _, _ = trained
    save_checkpoint(tmp_path / "m.ckpt", net)
    other = gradcheck.small_dense_config(growth_rate=4)
    with pytest.raises(CorruptCheckpoint, match="growth_rate: checkpoint=3 expected=4"):
        load_checkpoint(tmp_path / "m.ckpt", expected_config=other)
    with pytest.raises(CorruptCheckpoint, match="input_dim"):
        load_checkpoint(tmp_path / "m.ckpt", expected_input_dim=6)
