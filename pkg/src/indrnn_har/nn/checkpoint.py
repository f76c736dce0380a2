"""Binary checkpoint format.

Layout (little-endian)::

    8s   magic b"IRNNCKPT"
    u32  format version
    u32  header length, then UTF-8 JSON header (network config, input_dim,
         dtype, optimizer scalars, free-form metadata)
    u32  tensor count; per tensor:
         u16 name length, name, u8 dtype code (0=float32, 1=float64),
         u8 ndim, ndim x u32 shape, raw little-endian data
    32s  SHA-256 of every preceding byte

Tensor names are prefixed ``param/``, ``buffer/``, ``adam_m/``, ``adam_v/``
or ``scaler/``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import CorruptCheckpoint
from .network import Network, NetworkConfig, build_network
from .optim import Adam

MAGIC = b"IRNNCKPT"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


@dataclass
class Checkpoint:
    net: Network
    optimizer: Optional[Adam] = None
    scaler_mean: Optional[np.ndarray] = None
    scaler_std: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)


def _pack_tensor(name: str, arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    code = _CODES.get(arr.dtype)
    if code is None:
        raise TypeError(f"tensor {name} has unsupported dtype {arr.dtype}")
    enc = name.encode()
    head = struct.pack("<H", len(enc)) + enc + struct.pack("<BB", code, arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()


def save_checkpoint(path, net: Network, optimizer: Optional[Adam] = None, scaler_mean=None,
                    scaler_std=None, meta: Optional[dict] = None) -> None:
    header = {
        "config": net.cfg.to_dict(),
        "input_dim": net.input_dim,
        "dtype": net.dtype.name,
        "meta": meta or {},
    }
    tensors = [(f"param/{k}", v) for k, v in net.parameters().items()]
    tensors += [(f"buffer/{k}", v) for k, v in net.named_buffers().items()]
    if optimizer is not None:
        header["optimizer"] = {"lr": optimizer.lr, "beta1": optimizer.beta1, "beta2": optimizer.beta2,
                               "eps": optimizer.eps, "t": optimizer.t}
        tensors += [(f"adam_m/{k}", v) for k, v in sorted(optimizer.m.items())]
        tensors += [(f"adam_v/{k}", v) for k, v in sorted(optimizer.v.items())]
    if scaler_mean is not None:
        tensors += [("scaler/mean", np.asarray(scaler_mean, np.float32)),
                    ("scaler/std", np.asarray(scaler_std, np.float32))]
    hbytes = json.dumps(header, sort_keys=True).encode()
    body = bytearray(MAGIC + struct.pack("<II", VERSION, len(hbytes)) + hbytes)
    body += struct.pack("<I", len(tensors))
    for name, arr in tensors:
        body += _pack_tensor(name, arr)
    body += hashlib.sha256(body).digest()
    Path(path).write_bytes(bytes(body))


def _config_diff(a: dict, b: dict) -> list[str]:
    return [f"{k}: checkpoint={a.get(k)!r} expected={b.get(k)!r}"
            for k in sorted(set(a) | set(b)) if a.get(k) != b.get(k)]


def load_checkpoint(path, expected_config: Optional[NetworkConfig] = None,
                    expected_input_dim: Optional[int] = None) -> Checkpoint:
    """Read a checkpoint, verifying magic, version, length and checksum.

    When ``expected_config`` is given, a checkpoint written for a different
    architecture is rejected with the differing fields listed.
    """
    buf = Path(path).read_bytes()
    if len(buf) < len(MAGIC) + 8 + 32:
        raise CorruptCheckpoint(f"{path}: file too short ({len(buf)} bytes)")
    if buf[: len(MAGIC)] != MAGIC:
        raise CorruptCheckpoint(f"{path}: bad magic {buf[:len(MAGIC)]!r}")
    body, digest = buf[:-32], buf[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptCheckpoint(f"{path}: checksum mismatch (truncated or modified file)")
    try:
        version, hlen = struct.unpack_from("<II", body, len(MAGIC))
        if version != VERSION:
            raise CorruptCheckpoint(f"{path}: unsupported version {version}")
        off = len(MAGIC) + 8
        header = json.loads(body[off: off + hlen].decode())
        off += hlen
        (count,) = struct.unpack_from("<I", body, off)
        off += 4
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", body, off)
            off += 2
            name = body[off: off + nlen].decode()
            off += nlen
            code, ndim = struct.unpack_from("<BB", body, off)
            off += 2
            shape = struct.unpack_from(f"<{ndim}I", body, off)
            off += 4 * ndim
            dt = _DTYPES[code]
            n = int(np.prod(shape, dtype=np.int64))
            if off + n * dt.itemsize > len(body):
                raise CorruptCheckpoint(f"{path}: tensor {name} runs past end of file")
            tensors[name] = np.frombuffer(body, dtype=dt, count=n, offset=off).reshape(shape).copy()
            off += n * dt.itemsize
        if off != len(body):
            raise CorruptCheckpoint(f"{path}: {len(body) - off} trailing bytes")
    except CorruptCheckpoint:
        raise
    except (struct.error, KeyError, UnicodeDecodeError, json.JSONDecodeError, ValueError) as exc:
        raise CorruptCheckpoint(f"{path}: {exc}") from None

    cfg_dict = header["config"]
    if expected_config is not None:
        diff = _config_diff(cfg_dict, expected_config.to_dict())
        if diff:
            raise CorruptCheckpoint(f"{path}: architecture config differs: " + "; ".join(diff))
    if expected_input_dim is not None and header["input_dim"] != expected_input_dim:
        raise CorruptCheckpoint(
            f"{path}: input_dim differs: checkpoint={header['input_dim']} expected={expected_input_dim}")

    cfg = NetworkConfig.from_dict(cfg_dict)
    net = build_network(cfg, header["input_dim"], dtype=np.dtype(header["dtype"]))
    for name, layer, key in net.named_parameters():
        _assign(layer.params, key, tensors.pop(f"param/{name}", None), name, path)
    for path_key in list(net.named_buffers()):
        lpath, key = path_key.rsplit(".", 1)
        layer = dict(net.named_layers())[lpath]
        _assign(layer.buffers, key, tensors.pop(f"buffer/{path_key}", None), path_key, path)

    opt = None
    if "optimizer" in header:
        o = header["optimizer"]
        opt = Adam(lr=o["lr"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"], t=o["t"])
        for name in list(tensors):
            if name.startswith("adam_m/"):
                opt.m[name[7:]] = tensors.pop(name)
            elif name.startswith("adam_v/"):
                opt.v[name[7:]] = tensors.pop(name)
    mean = tensors.pop("scaler/mean", None)
    std = tensors.pop("scaler/std", None)
    if tensors:
        raise CorruptCheckpoint(f"{path}: unexpected tensors {sorted(tensors)[:5]}")
    return Checkpoint(net=net, optimizer=opt, scaler_mean=mean, scaler_std=std, meta=header["meta"])


def _assign(store: dict, key: str, value, name: str, path) -> None:
    if value is None:
        raise CorruptCheckpoint(f"{path}: missing tensor {name}")
    if value.shape != store[key].shape:
        raise CorruptCheckpoint(f"{path}: tensor {name} has shape {value.shape}, expected {store[key].shape}")
    store[key] = value.astype(store[key].dtype, copy=False)
