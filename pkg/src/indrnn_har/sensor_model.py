"""Raw sensor samples and derotation of body-frame vectors into the NED frame."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ZeroQuaternion

N_FRAMES = 500
ZERO_NORM = 1e-9


class Activity(enum.IntEnum):
    Still = 0
    Walk = 1
    Run = 2
    Bike = 3
    Car = 4
    Bus = 5
    Train = 6
    Subway = 7


class Location(enum.IntEnum):
    Bag = 0
    Hips = 1
    Torso = 2
    Hand = 3


# Column order of the 10-channel matrix fed to feature extraction.
CHANNEL_NAMES = (
    "gyro_x", "gyro_y", "gyro_z",
    "accel_ned_x", "accel_ned_y", "accel_ned_z",
    "mag_ned_x", "mag_ned_y", "mag_ned_z",
    "pressure",
)
PRESSURE_CHANNEL = 9


@dataclass(frozen=True)
class Quaternion:
    w: float
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=np.float64)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    def normalized(self) -> "Quaternion":
        n = self.norm()
        if not n >= ZERO_NORM:
            raise ZeroQuaternion(f"quaternion norm {n:g} is below {ZERO_NORM:g}")
        return Quaternion(self.w / n, self.x / n, self.y / n, self.z / n)


def _rotation_from_unit(w, x, y, z) -> np.ndarray:
    # Broadcasts over leading axes; components must already be unit-normalized.
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
        ],
        axis=-2,
    )


def quaternion_to_rotation(q) -> np.ndarray:
    """Return the 3x3 rotation matrix of quaternion ``q`` = (w, x, y, z).

    ``q`` may be a :class:`Quaternion` or any length-4 sequence. It is
    normalized first; a norm below 1e-9 raises :class:`ZeroQuaternion`.
    """
    arr = q.as_array() if isinstance(q, Quaternion) else np.asarray(q, dtype=np.float64)
    if arr.shape != (4,):
        raise ValueError(f"expected 4 quaternion components, got shape {arr.shape}")
    n = np.linalg.norm(arr)
    if not n >= ZERO_NORM:
        raise ZeroQuaternion(f"quaternion norm {n:g} is below {ZERO_NORM:g}")
    w, x, y, z = arr / n
    return _rotation_from_unit(w, x, y, z)


def quaternions_to_rotations(q: np.ndarray) -> np.ndarray:
    """Vectorized :func:`quaternion_to_rotation` over an ``(..., 4)`` array."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1)
    bad = ~(n >= ZERO_NORM)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ZeroQuaternion(f"quaternion at index {idx} has norm {n[idx]:g}")
    q = q / n[..., None]
    return _rotation_from_unit(q[..., 0], q[..., 1], q[..., 2], q[..., 3])


def derotate(v, R) -> np.ndarray:
    """Map body-frame vector(s) ``v`` into the NED frame: ``R @ v``."""
    v = np.asarray(v, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    return np.einsum("...ij,...j->...i", R, v)


@dataclass(frozen=True)
class RawSample:
    """One 5-second recording at 100 Hz.

    Vector channels are ``(500, 3)`` arrays in body-frame sensor units,
    ``pressure`` is ``(500,)`` in hPa and ``orientation`` is ``(500, 4)`` as
    (w, x, y, z).
    """

    accelerometer: np.ndarray
    gyroscope: np.ndarray
    magnetometer: np.ndarray
    pressure: np.ndarray
    orientation: np.ndarray
    activity: Activity
    location: Optional[Location] = None

    def __post_init__(self):
        shapes = {
            "accelerometer": (N_FRAMES, 3),
            "gyroscope": (N_FRAMES, 3),
            "magnetometer": (N_FRAMES, 3),
            "pressure": (N_FRAMES,),
            "orientation": (N_FRAMES, 4),
        }
        for name, shape in shapes.items():
            arr = getattr(self, name)
            if np.shape(arr) != shape:
                raise ValueError(f"{name} must have shape {shape}, got {np.shape(arr)}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")


@dataclass(frozen=True)
class DerotatedSample:
    accel_ned: np.ndarray
    gyro: np.ndarray
    mag_ned: np.ndarray
    pressure: np.ndarray
    activity: Activity
    location: Optional[Location] = None

    def channels(self) -> np.ndarray:
        """The ``(500, 10)`` channel matrix in :data:`CHANNEL_NAMES` order."""
        return np.concatenate(
            [self.gyro, self.accel_ned, self.mag_ned, self.pressure[:, None]], axis=1
        )


def derotate_arrays(accel, gyro, mag, pressure, orientation) -> np.ndarray:
    """Batch derotation to the 10-channel layout.

    Inputs carry any leading shape followed by the frame axis; the result is
    float32 with a trailing channel axis of length 10.
    """
    try:
        R = quaternions_to_rotations(orientation)
    except ZeroQuaternion as exc:
        raise ZeroQuaternion(f"zero orientation quaternion: {exc}") from None
    accel_ned = derotate(accel, R)
    mag_ned = derotate(mag, R)
    out = np.concatenate(
        [np.asarray(gyro, np.float64), accel_ned, mag_ned, np.asarray(pressure, np.float64)[..., None]],
        axis=-1,
    )
    return out.astype(np.float32)


def preprocess_sample(s: RawSample) -> DerotatedSample:
    """Derotate accelerometer and magnetometer frame by frame.

    Gyroscope and pressure pass through; orientation is consumed here and not
    carried forward.
    """
    q = np.asarray(s.orientation, dtype=np.float64)
    norms = np.linalg.norm(q, axis=1)
    bad = np.flatnonzero(~(norms >= ZERO_NORM))
    if bad.size:
        raise ZeroQuaternion(f"frame {int(bad[0])}: quaternion norm {norms[bad[0]]:g} is below {ZERO_NORM:g}")
    R = quaternions_to_rotations(q)
    return DerotatedSample(
        accel_ned=derotate(s.accelerometer, R).astype(np.float32),
        gyro=np.asarray(s.gyroscope, dtype=np.float32).copy(),
        mag_ned=derotate(s.magnetometer, R).astype(np.float32),
        pressure=np.asarray(s.pressure, dtype=np.float32).copy(),
        activity=s.activity,
        location=s.location,
    )
