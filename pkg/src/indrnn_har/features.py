"""Short-term spatial and frequency features over overlapping windows.

A derotated 500-frame sample is cut into 21 windows of 100 frames (stride 20).
Each window and channel yields time statistics, the FFT amplitude spectrum and
two spectrum statistics; the per-window vectors form the sequence consumed by
the recurrent classifier.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import BadConfig, CorruptFeatureFile, SpecMismatch
from .sensor_model import PRESSURE_CHANNEL, DerotatedSample

N_TIME_STATS = 6
N_FFT_STATS = 2


@dataclass(frozen=True)
class WindowSpec:
    window_len: int = 100
    n_windows: int = 21
    stride: int = 20

    def __post_init__(self):
        if self.stride < 1 or self.window_len < 2 or self.n_windows < 1:
            raise BadConfig(f"invalid window spec {self}")

    @property
    def span(self) -> int:
        return (self.n_windows - 1) * self.stride + self.window_len


@dataclass(frozen=True)
class FeatureConfig:
    include_time_stats: bool = True
    include_fft_spectrum: bool = True
    include_fft_stats: bool = True
    augment_temporal_diff: bool = False
    pressure_epsilon: float = 1e-6

    def __post_init__(self):
        if not (self.include_time_stats or self.include_fft_spectrum or self.include_fft_stats):
            raise BadConfig("at least one feature family must be enabled")
        if not self.pressure_epsilon > 0:
            raise BadConfig("pressure_epsilon must be positive")

    def per_channel(self, window_len: int) -> int:
        return (
            N_TIME_STATS * self.include_time_stats
            + (window_len // 2) * self.include_fft_spectrum
            + N_FFT_STATS * self.include_fft_stats
        )

    def n_features(self, n_channels: int, spec: WindowSpec) -> int:
        f = n_channels * self.per_channel(spec.window_len)
        return 2 * f if self.augment_temporal_diff else f


@dataclass
class FeatureSequence:
    steps: np.ndarray  # (n_windows, F)
    activity: Optional[int] = None
    location: Optional[int] = None
    meta: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return self.steps.shape[1]


def segment(sample, spec: WindowSpec = WindowSpec()) -> np.ndarray:
    """Cut a sample into ``(n_windows, window_len, channels)`` windows.

    Window ``i`` covers frames ``[i*stride, i*stride + window_len)``. Accepts a
    :class:`DerotatedSample` or a ``(frames, channels)`` array.
    """
    x = sample.channels() if isinstance(sample, DerotatedSample) else np.asarray(sample)
    if x.ndim == 1:
        x = x[:, None]
    if spec.span != x.shape[0]:
        raise SpecMismatch(
            f"{spec.n_windows} windows of {spec.window_len} at stride {spec.stride} span "
            f"{spec.span} frames, sample has {x.shape[0]}"
        )
    return _windows(x, spec, frame_axis=0)


def _windows(x: np.ndarray, spec: WindowSpec, frame_axis: int) -> np.ndarray:
    # Window axis is inserted at frame_axis, window frames follow it.
    x = np.moveaxis(x, frame_axis, -1)
    view = np.lib.stride_tricks.sliding_window_view(x, spec.window_len, axis=-1)
    view = view[..., :: spec.stride, :][..., : spec.n_windows, :]
    # (..., n_windows, window_len) -> (n_windows, window_len, ...) at frame_axis
    view = np.moveaxis(view, (-2, -1), (frame_axis, frame_axis + 1))
    return np.ascontiguousarray(view)


def time_stats(window, axis: int = -1) -> np.ndarray:
    """[mean, #above mean, #below mean, std, min, max] along ``axis``.

    Counts use strict inequality and std is the population (1/n) form. The
    statistics land on a new trailing axis.
    """
    w = np.asarray(window, dtype=np.float64)
    w = np.moveaxis(w, axis, -1)
    if w.shape[-1] < 2:
        raise ValueError("window needs at least 2 frames")
    mean = w.mean(axis=-1)
    above = (w > mean[..., None]).sum(axis=-1)
    below = (w < mean[..., None]).sum(axis=-1)
    std = np.sqrt(((w - mean[..., None]) ** 2).mean(axis=-1))
    return np.stack([mean, above, below, std, w.min(axis=-1), w.max(axis=-1)], axis=-1)


def normalize_pressure(pressure, epsilon: float = 1e-6, axis: int = -1) -> np.ndarray:
    """Per-sample z-score; the std is floored at ``epsilon``."""
    p = np.asarray(pressure, dtype=np.float64)
    mean = p.mean(axis=axis, keepdims=True)
    std = p.std(axis=axis, keepdims=True)
    return (p - mean) / np.maximum(std, epsilon)


def fft_amplitude(window, axis: int = -1) -> np.ndarray:
    """Magnitudes of DFT bins ``0 .. n/2 - 1`` along ``axis`` (no taper)."""
    w = np.asarray(window, dtype=np.float64)
    w = np.moveaxis(w, axis, -1)
    n = w.shape[-1]
    if n % 2:
        raise ValueError(f"window length must be even, got {n}")
    return np.abs(np.fft.rfft(w, axis=-1))[..., : n // 2]


def fft_stats(spectrum, axis: int = -1) -> np.ndarray:
    """[mean, population std] of a magnitude spectrum along ``axis``."""
    s = np.asarray(spectrum, dtype=np.float64)
    s = np.moveaxis(s, axis, -1)
    if s.shape[-1] == 0:
        raise ValueError("empty spectrum")
    return np.stack([s.mean(axis=-1), s.std(axis=-1)], axis=-1)


def temporal_difference(seq: np.ndarray, axis: int = -2) -> np.ndarray:
    """Step-wise first difference with a zero vector at step 0."""
    seq = np.moveaxis(np.asarray(seq), axis, 0)
    diff = np.zeros_like(seq)
    diff[1:] = seq[1:] - seq[:-1]
    return np.moveaxis(diff, 0, axis)


def extract_feature_batch(
    channels: np.ndarray, spec: WindowSpec = WindowSpec(), cfg: FeatureConfig = FeatureConfig()
) -> np.ndarray:
    """Featurize ``(N, frames, C)`` channel matrices into ``(N, n_windows, F)``.

    The last channel is taken to be pressure and is normalized per sample
    before windowing.
    """
    x = np.asarray(channels, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"expected (N, frames, channels), got shape {x.shape}")
    if spec.span != x.shape[1]:
        raise SpecMismatch(
            f"{spec.n_windows} windows of {spec.window_len} at stride {spec.stride} span "
            f"{spec.span} frames, samples have {x.shape[1]}"
        )
    if x.shape[2] > PRESSURE_CHANNEL:
        x = x.copy()
        x[:, :, PRESSURE_CHANNEL] = normalize_pressure(x[:, :, PRESSURE_CHANNEL], cfg.pressure_epsilon)
    n, _, c = x.shape
    # (N, W, L, C) -> (N, W, C, L) so statistics reduce over the last axis
    win = np.swapaxes(_windows(x, spec, frame_axis=1), 2, 3)
    parts = []
    if cfg.include_time_stats:
        parts.append(time_stats(win))
    if cfg.include_fft_spectrum or cfg.include_fft_stats:
        spec_mag = fft_amplitude(win)
        if cfg.include_fft_spectrum:
            parts.append(spec_mag)
        if cfg.include_fft_stats:
            parts.append(fft_stats(spec_mag))
    feats = np.concatenate(parts, axis=-1).reshape(n, spec.n_windows, -1)
    if cfg.augment_temporal_diff:
        feats = np.concatenate([feats, temporal_difference(feats, axis=1)], axis=-1)
    return feats.astype(np.float32)


def extract_features(
    sample: DerotatedSample, spec: WindowSpec = WindowSpec(), cfg: FeatureConfig = FeatureConfig()
) -> FeatureSequence:
    steps = extract_feature_batch(sample.channels()[None], spec, cfg)[0]
    return FeatureSequence(
        steps=steps,
        activity=None if sample.activity is None else int(sample.activity),
        location=None if sample.location is None else int(sample.location),
        meta={"n_features": steps.shape[1], "window": asdict(spec), "features": asdict(cfg)},
    )


@dataclass
class FeatureScaler:
    """Per-feature z-score fitted on training sequences (pooled over steps)."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, feats: np.ndarray, floor: float = 1e-6) -> "FeatureScaler":
        flat = np.asarray(feats, dtype=np.float64).reshape(-1, feats.shape[-1])
        return cls(
            mean=flat.mean(axis=0).astype(np.float32),
            std=np.maximum(flat.std(axis=0), floor).astype(np.float32),
        )

    @classmethod
    def identity(cls, n_features: int) -> "FeatureScaler":
        return cls(np.zeros(n_features, np.float32), np.ones(n_features, np.float32))

    def transform(self, feats: np.ndarray) -> np.ndarray:
        return ((feats - self.mean) / self.std).astype(np.float32)


# Feature cache layout (little-endian):
#   8s  magic  b"IRNNFEAT"
#   u32 version
#   u32 n_samples, u32 steps, u32 n_features
#   u32 metadata length, then UTF-8 JSON (window spec, feature config)
#   u32 label column count; per column: u16 name length, name, n_samples x i32
#   body: n_samples x steps x n_features float32, sample-major
FEATURE_MAGIC = b"IRNNFEAT"
FEATURE_VERSION = 1


def save_feature_file(path, feats: np.ndarray, labels: dict[str, np.ndarray], meta: Optional[dict] = None) -> None:
    feats = np.asarray(feats, dtype="<f4")
    n, t, f = feats.shape
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode()
    out = bytearray()
    out += struct.pack("<8sIIII", FEATURE_MAGIC, FEATURE_VERSION, n, t, f)
    out += struct.pack("<I", len(meta_bytes)) + meta_bytes
    out += struct.pack("<I", len(labels))
    for name in sorted(labels):
        col = np.asarray(labels[name], dtype="<i4")
        if col.shape != (n,):
            raise ValueError(f"label column {name!r} has shape {col.shape}, expected ({n},)")
        enc = name.encode()
        out += struct.pack("<H", len(enc)) + enc + col.tobytes()
    out += feats.tobytes()
    Path(path).write_bytes(bytes(out))


def load_feature_file(path) -> tuple[np.ndarray, dict[str, np.ndarray], dict]:
    buf = Path(path).read_bytes()
    try:
        magic, version, n, t, f = struct.unpack_from("<8sIIII", buf, 0)
        if magic != FEATURE_MAGIC:
            raise CorruptFeatureFile(f"{path}: bad magic {magic!r}")
        if version != FEATURE_VERSION:
            raise CorruptFeatureFile(f"{path}: unsupported version {version}")
        off = struct.calcsize("<8sIIII")
        (mlen,) = struct.unpack_from("<I", buf, off)
        off += 4
        meta = json.loads(buf[off : off + mlen].decode())
        off += mlen
        (ncol,) = struct.unpack_from("<I", buf, off)
        off += 4
        labels = {}
        for _ in range(ncol):
            (nlen,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off : off + nlen].decode()
            off += nlen
            labels[name] = np.frombuffer(buf, dtype="<i4", count=n, offset=off).astype(np.int64)
            off += 4 * n
        if len(buf) - off != 4 * n * t * f:
            raise CorruptFeatureFile(f"{path}: body has {len(buf) - off} bytes, expected {4 * n * t * f}")
        feats = np.frombuffer(buf, dtype="<f4", offset=off).reshape(n, t, f).astype(np.float32)
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError, ValueError) as exc:
        if isinstance(exc, CorruptFeatureFile):
            raise
        raise CorruptFeatureFile(f"{path}: {exc}") from None
    return feats, labels, meta
