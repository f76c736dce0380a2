"""Datasets: SHL-style text ingestion and synthetic periodic sensor data."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..errors import BadSpec, ChannelCountMismatch, RaggedMatrix, UnknownLabel
from ..features import FeatureConfig, WindowSpec, extract_feature_batch
from ..sensor_model import (
    N_FRAMES, Activity, Location, RawSample, derotate_arrays, quaternions_to_rotations,
)

ROLES = ("train", "validation", "test")
LOCATION_GROUPS = ("BagHand", "HipsTorso")
_GROUP_OF_LOCATION = np.array([0, 1, 1, 0])  # Bag, Hips, Torso, Hand

# One whitespace-separated matrix per file, rows = samples, 500 columns.
CHANNEL_FILES = {
    "accelerometer": ("Acc_x.txt", "Acc_y.txt", "Acc_z.txt"),
    "gyroscope": ("Gyr_x.txt", "Gyr_y.txt", "Gyr_z.txt"),
    "magnetometer": ("Mag_x.txt", "Mag_y.txt", "Mag_z.txt"),
    "orientation": ("Ori_w.txt", "Ori_x.txt", "Ori_y.txt", "Ori_z.txt"),
    "pressure": ("Pressure.txt",),
}
LABEL_FILE = "Label.txt"
LOCATION_FILE = "Location.txt"
USER_FILE = "User.txt"


def location_group(location) -> np.ndarray:
    """Map Location codes to group indices (0 = BagHand, 1 = HipsTorso)."""
    return _GROUP_OF_LOCATION[np.asarray(location, dtype=np.int64)]


@dataclass
class Dataset:
    """A set of samples held as stacked arrays.

    ``raw`` maps sensor name to ``(N, 500, ...)`` arrays; ``features`` is the
    unnormalized ``(N, steps, F)`` sequence tensor. Either may be absent.
    """

    activity: np.ndarray
    role: str = "train"
    location: Optional[np.ndarray] = None
    user: Optional[np.ndarray] = None
    raw: Optional[dict] = None
    features: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.activity = np.asarray(self.activity, dtype=np.int64)
        n = len(self.activity)
        if n == 0:
            raise ValueError("dataset is empty")
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        for name in ("location", "user"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=np.int64)
                if arr.shape != (n,):
                    raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
                setattr(self, name, arr)
        if self.raw is not None:
            for k, v in self.raw.items():
                if len(v) != n:
                    raise ValueError(f"raw channel {k} has {len(v)} samples, expected {n}")
        if self.features is not None and len(self.features) != n:
            raise ValueError(f"features have {len(self.features)} samples, expected {n}")

    def __len__(self) -> int:
        return len(self.activity)

    def subset(self, idx, role: Optional[str] = None) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            activity=self.activity[idx],
            role=role or self.role,
            location=None if self.location is None else self.location[idx],
            user=None if self.user is None else self.user[idx],
            raw=None if self.raw is None else {k: v[idx] for k, v in self.raw.items()},
            features=None if self.features is None else self.features[idx],
            meta=dict(self.meta),
        )

    def sample(self, i: int) -> RawSample:
        if self.raw is None:
            raise ValueError("dataset holds no raw sensor data")
        loc = None if self.location is None or self.location[i] < 0 else Location(int(self.location[i]))
        return RawSample(
            accelerometer=self.raw["accelerometer"][i],
            gyroscope=self.raw["gyroscope"][i],
            magnetometer=self.raw["magnetometer"][i],
            pressure=self.raw["pressure"][i],
            orientation=self.raw["orientation"][i],
            activity=Activity(int(self.activity[i])),
            location=loc,
        )

    def channels(self) -> np.ndarray:
        """Derotated ``(N, 500, 10)`` channel tensor."""
        if self.raw is None:
            raise ValueError("dataset holds no raw sensor data")
        r = self.raw
        return derotate_arrays(r["accelerometer"], r["gyroscope"], r["magnetometer"], r["pressure"],
                               r["orientation"])

    def featurize(self, spec: WindowSpec = WindowSpec(), cfg: FeatureConfig = FeatureConfig(),
                  chunk: int = 256) -> "Dataset":
        ch = self.channels()
        feats = np.concatenate([extract_feature_batch(ch[i:i + chunk], spec, cfg)
                                for i in range(0, len(ch), chunk)])
        out = dataclasses.replace(self, features=feats, meta=dict(self.meta))
        out.meta.update(window=dataclasses.asdict(spec), feature_config=dataclasses.asdict(cfg))
        return out

    def targets(self, kind: str = "activity") -> np.ndarray:
        if kind == "activity":
            return self.activity
        if kind == "location_group":
            if self.location is None or (self.location < 0).any():
                raise ValueError("dataset lacks location labels")
            return location_group(self.location)
        raise ValueError(f"unknown target kind {kind!r}")

    def label_columns(self) -> dict:
        cols = {"activity": self.activity}
        if self.location is not None:
            cols["location"] = self.location
        if self.user is not None:
            cols["user"] = self.user
        return cols


# ---------------------------------------------------------------- ingestion

def _read_matrix(path: Path, n_cols: Optional[int] = N_FRAMES, dtype=np.float64) -> np.ndarray:
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    widths = [len(ln.split()) for ln in lines]
    expected = n_cols if n_cols is not None else (widths[0] if widths else 0)
    for i, w in enumerate(widths):
        if w != expected:
            raise RaggedMatrix(f"{path.name}: row {i} has {w} columns, expected {expected}")
    try:
        flat = np.array(" ".join(lines).split(), dtype=dtype)
    except ValueError as exc:
        raise RaggedMatrix(f"{path.name}: non-numeric entry ({exc})") from None
    return flat.reshape(len(lines), expected)


def _row_majority(mat: np.ndarray) -> np.ndarray:
    """Most frequent value per row; ties go to the smallest value."""
    out = np.empty(len(mat), dtype=np.int64)
    for i, row in enumerate(mat):
        vals, counts = np.unique(row, return_counts=True)
        out[i] = vals[np.argmax(counts)]
    return out


def _read_codes(path: Path, n: int, valid: range, what: str) -> np.ndarray:
    mat = _read_matrix(path, n_cols=None, dtype=np.float64)
    if len(mat) != n:
        raise ChannelCountMismatch(f"{path.name} has {len(mat)} rows, channel files have {n}")
    if not np.all(mat == np.round(mat)):
        raise UnknownLabel(f"{path.name}: non-integer {what} code")
    codes = _row_majority(mat.astype(np.int64)) if mat.shape[1] > 1 else mat[:, 0].astype(np.int64)
    bad = np.flatnonzero((codes < valid.start) | (codes >= valid.stop))
    if bad.size:
        raise UnknownLabel(f"{path.name}: row {int(bad[0])} has {what} code {int(codes[bad[0]])}, "
                           f"expected {valid.start}..{valid.stop - 1}")
    return codes


def ingest(directory, role: str = "train") -> Dataset:
    """Load a directory of per-channel text matrices.

    Each channel file holds one sample per row (500 whitespace-separated
    frames). ``Label.txt`` holds per-frame activity codes 1..8; each sample
    takes the majority label. ``Location.txt`` (codes 1..4, Bag/Hips/Torso/Hand)
    and ``User.txt`` are optional, one code per row or per frame.
    """
    d = Path(directory)
    missing = [f for files in CHANNEL_FILES.values() for f in files if not (d / f).is_file()]
    if not (d / LABEL_FILE).is_file():
        missing.append(LABEL_FILE)
    if missing:
        n_needed = sum(len(v) for v in CHANNEL_FILES.values())
        raise ChannelCountMismatch(f"{d}: missing {', '.join(missing)} (need {n_needed} channel files + {LABEL_FILE})")
    raw = {}
    n = None
    for name, files in CHANNEL_FILES.items():
        mats = []
        for f in files:
            m = _read_matrix(d / f)
            if n is None:
                n = len(m)
            elif len(m) != n:
                raise ChannelCountMismatch(f"{f} has {len(m)} rows, expected {n}")
            mats.append(m)
        arr = np.stack(mats, axis=-1)
        raw[name] = arr[..., 0] if name == "pressure" else arr
    labels = _read_matrix(d / LABEL_FILE)
    if len(labels) != n:
        raise ChannelCountMismatch(f"{LABEL_FILE} has {len(labels)} rows, channel files have {n}")
    if not np.all(labels == np.round(labels)):
        raise UnknownLabel(f"{LABEL_FILE}: non-integer label")
    bad = np.argwhere((labels < 1) | (labels > 8))
    if bad.size:
        r, c = bad[0]
        raise UnknownLabel(f"{LABEL_FILE}: row {r} frame {c} has label {labels[r, c]:g}, expected 1..8")
    activity = _row_majority(labels.astype(np.int64)) - 1
    location = user = None
    if (d / LOCATION_FILE).is_file():
        location = _read_codes(d / LOCATION_FILE, n, range(1, 5), "location") - 1
    if (d / USER_FILE).is_file():
        user = _read_codes(d / USER_FILE, n, range(1, 100), "user")
    return Dataset(activity=activity, role=role, location=location, user=user, raw=raw)


def write_dataset(ds: Dataset, directory) -> list[Path]:
    """Write ``ds`` in the ingestion layout; returns the files written."""
    if ds.raw is None:
        raise ValueError("dataset holds no raw sensor data")
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, mat, fmt):
        path = d / name
        with open(path, "w") as fh:
            for row in np.atleast_2d(mat):
                fh.write(" ".join(fmt % v for v in row) + "\n")
        written.append(path)

    for name, files in CHANNEL_FILES.items():
        arr = ds.raw[name]
        if name == "pressure":
            arr = arr[..., None]
        for j, f in enumerate(files):
            put(f, arr[..., j], "%.7g")
    put(LABEL_FILE, np.repeat(ds.activity[:, None] + 1, N_FRAMES, axis=1), "%d")
    if ds.location is not None:
        put(LOCATION_FILE, ds.location[:, None] + 1, "%d")
    if ds.user is not None:
        put(USER_FILE, ds.user[:, None], "%d")
    return written


# ---------------------------------------------------------------- synthesis

@dataclass(frozen=True)
class ClassRecipe:
    base_freq: float
    amplitude: float = 1.0
    harmonics: tuple = (1.0, 0.5, 0.25)
    pressure_drift: float = 0.0  # hPa per second


@dataclass(frozen=True)
class UserProfile:
    amplitude_scale: float = 1.0
    freq_scale: float = 1.0


def default_recipes() -> tuple:
    # Still, Walk, Run, Bike, Car, Bus, Train, Subway
    return (
        ClassRecipe(5.0, 0.1),
        ClassRecipe(2.0, 2.0),
        ClassRecipe(3.0, 4.0),
        ClassRecipe(1.0, 1.5),
        ClassRecipe(8.0, 0.4, pressure_drift=0.02),
        ClassRecipe(6.0, 0.5, pressure_drift=-0.02),
        ClassRecipe(11.0, 0.3, pressure_drift=0.05),
        ClassRecipe(13.0, 0.35, pressure_drift=-0.05),
    )


def default_user_profiles() -> dict:
    return {1: UserProfile(), 2: UserProfile(1.4, 1.25), 3: UserProfile(0.7, 0.85)}


def default_location_gains() -> dict:
    # (gyroscope, accelerometer, magnetometer, pressure) signal gains
    return {
        "Bag": (2.0, 0.6, 1.0, 1.0),
        "Hips": (0.5, 1.4, 1.0, 1.0),
        "Torso": (0.7, 1.2, 1.0, 1.0),
        "Hand": (2.5, 0.8, 1.0, 1.0),
    }


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic dataset of periodic sensor signals.

    Every class has a base frequency with harmonics and a fixed random channel
    weighting. Users rescale amplitude and frequency; locations apply channel
    gains. Sample ``j`` of a class is assigned user ``users[j % len(users)]``
    and location ``locations[(j // len(users)) % len(locations)]``.
    """

    n_per_class: int = 50
    class_counts: Optional[tuple] = None
    noise: float = 0.5
    recipes: tuple = field(default_factory=default_recipes)
    users: tuple = (1,)
    user_profiles: dict = field(default_factory=default_user_profiles)
    locations: tuple = ("Hips",)
    location_gains: dict = field(default_factory=default_location_gains)
    amplitude_jitter: float = 0.2
    freq_jitter: float = 0.02
    max_rotation_rate: float = 0.3  # rad/s
    seed: int = 0
    role: str = "train"

    def counts(self) -> list[int]:
        if self.class_counts is not None:
            return [int(c) for c in self.class_counts]
        return [self.n_per_class] * len(self.recipes)

    def validate(self) -> None:
        if len(self.recipes) != len(Activity):
            raise BadSpec(f"need {len(Activity)} class recipes, got {len(self.recipes)}")
        if len(self.counts()) != len(self.recipes) or min(self.counts()) < 0 or sum(self.counts()) == 0:
            raise BadSpec(f"invalid class counts {self.counts()}")
        for u in self.users:
            if u not in self.user_profiles:
                raise BadSpec(f"no profile for user {u}")
        for loc in self.locations:
            if loc not in self.location_gains:
                raise BadSpec(f"no gain profile for location {loc!r}")
            if loc not in Location.__members__:
                raise BadSpec(f"unknown location {loc!r}")
        if self.noise < 0:
            raise BadSpec("noise must be non-negative")
        top = max(self.user_profiles[u].freq_scale for u in self.users) * (1 + self.freq_jitter)
        for c, r in enumerate(self.recipes):
            if not 0 < r.base_freq < 50:
                raise BadSpec(f"class {Activity(c).name}: base frequency {r.base_freq} Hz must be in (0, 50)")
            highest = r.base_freq * len(r.harmonics) * top
            if highest >= 50:
                raise BadSpec(f"class {Activity(c).name}: harmonic at {highest:.2f} Hz reaches Nyquist (50 Hz)")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["user_profiles"] = {str(k): dataclasses.asdict(v) for k, v in self.user_profiles.items()}
        d["location_gains"] = {k: list(v) for k, v in self.location_gains.items()}
        d["recipes"] = [dataclasses.asdict(r) | {"harmonics": list(r.harmonics)} for r in self.recipes]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        if "recipes" in d:
            d["recipes"] = tuple(ClassRecipe(**{**r, "harmonics": tuple(r.get("harmonics", (1.0, 0.5, 0.25)))})
                                 for r in d["recipes"])
        if "user_profiles" in d:
            d["user_profiles"] = {int(k): UserProfile(**v) for k, v in d["user_profiles"].items()}
        if "location_gains" in d:
            d["location_gains"] = {k: tuple(v) for k, v in d["location_gains"].items()}
        for k in ("users", "locations", "class_counts"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise BadSpec(f"unknown synthetic spec keys {sorted(extra)}")
        return cls(**d)


GRAVITY = np.array([0.0, 0.0, 9.81])
EARTH_FIELD = np.array([0.0, 22.0, -42.0])
BASE_PRESSURE = 1010.0


def _quat_mul(a, b):
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def _orientations(rng, n: int, max_rate: float) -> np.ndarray:
    """Slowly rotating unit quaternions, ``(n, 500, 4)``."""
    q0 = rng.normal(size=(n, 4))
    q0 /= np.linalg.norm(q0, axis=1, keepdims=True)
    axis = rng.normal(size=(n, 3))
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    rate = rng.uniform(0, max_rate, size=n)
    t = np.arange(N_FRAMES) / 100.0
    half = 0.5 * rate[:, None] * t[None, :]
    dq = np.concatenate([np.cos(half)[..., None], np.sin(half)[..., None] * axis[:, None, :]], axis=-1)
    return _quat_mul(q0[:, None, :], dq)


def synthesize(spec: SyntheticSpec = SyntheticSpec()) -> Dataset:
    """Generate a labelled dataset of raw (body-frame) sensor recordings."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    counts = spec.counts()
    # Fixed per-class channel weighting; independent of the sampling seed.
    class_weights = np.random.default_rng(12345).uniform(0.5, 1.5, size=(len(spec.recipes), 10))

    activity, users, locs = [], [], []
    for c, n_c in enumerate(counts):
        for j in range(n_c):
            activity.append(c)
            users.append(spec.users[j % len(spec.users)])
            locs.append(Location[spec.locations[(j // len(spec.users)) % len(spec.locations)]])
    activity = np.array(activity, dtype=np.int64)
    users = np.array(users, dtype=np.int64)
    locs = np.array(locs, dtype=np.int64)
    n = len(activity)

    t = np.arange(N_FRAMES) / 100.0
    amp = np.array([spec.recipes[c].amplitude for c in activity])
    amp = amp * np.array([spec.user_profiles[u].amplitude_scale for u in users])
    amp = amp * (1 + spec.amplitude_jitter * rng.uniform(-1, 1, n))
    freq = np.array([spec.recipes[c].base_freq for c in activity])
    freq = freq * np.array([spec.user_profiles[u].freq_scale for u in users])
    freq = freq * (1 + spec.freq_jitter * rng.uniform(-1, 1, n))
    n_harm = max(len(r.harmonics) for r in spec.recipes)
    harm = np.zeros((n, n_harm))
    for i, c in enumerate(activity):
        h = spec.recipes[c].harmonics
        harm[i, : len(h)] = h
    phase = rng.uniform(0, 2 * np.pi, size=(n, 10, n_harm))

    k = np.arange(1, n_harm + 1)
    # (n, 10, H, T) sum over harmonics -> (n, T, 10)
    arg = 2 * np.pi * (freq[:, None, None, None] * k[None, None, :, None]) * t + phase[..., None]
    wave = (harm[:, None, :, None] * np.sin(arg)).sum(axis=2).transpose(0, 2, 1)
    sig = wave * class_weights[activity][:, None, :] * amp[:, None, None]
    sig = sig + spec.noise * amp[:, None, None] * rng.normal(size=sig.shape)

    gains = np.array([spec.location_gains[Location(l).name] for l in locs])  # (n, 4)
    chan_gain = np.concatenate([np.repeat(gains[:, :3], 3, axis=1), gains[:, 3:]], axis=1)
    sig = sig * chan_gain[:, None, :]

    gyro = sig[..., 0:3]
    accel_ned = sig[..., 3:6] + GRAVITY
    mag_ned = 5.0 * sig[..., 6:9] + EARTH_FIELD
    drift = np.array([spec.recipes[c].pressure_drift for c in activity])
    pressure = BASE_PRESSURE + rng.normal(0, 5, n)[:, None] + drift[:, None] * t + 0.05 * sig[..., 9]

    orient = _orientations(rng, n, spec.max_rotation_rate)
    R = quaternions_to_rotations(orient)
    # body = R^T ned so that derotation (R body) recovers the NED signal
    accel = np.einsum("ntji,ntj->nti", R, accel_ned)
    mag = np.einsum("ntji,ntj->nti", R, mag_ned)
    raw = {
        "accelerometer": accel.astype(np.float32),
        "gyroscope": gyro.astype(np.float32),
        "magnetometer": mag.astype(np.float32),
        "pressure": pressure.astype(np.float32),
        "orientation": orient.astype(np.float32),
    }
    return Dataset(activity=activity, role=spec.role, location=locs, user=users, raw=raw,
                   meta={"synthetic": spec.to_dict()})
