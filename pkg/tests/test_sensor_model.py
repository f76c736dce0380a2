import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from indrnn_har.errors import ZeroQuaternion
from indrnn_har.sensor_model import (
    Activity, Quaternion, RawSample, derotate, preprocess_sample, quaternion_to_rotation,
    quaternions_to_rotations,
)
from oracles import rotation_about_axis

S = 0.7071068


def make_sample(accel=(0.0, 0.0, 9.81), q=(1.0, 0.0, 0.0, 0.0), rng=None):
    n = 500
    rng = rng or np.random.default_rng(0)
    return RawSample(
        accelerometer=np.tile(accel, (n, 1)),
        gyroscope=rng.normal(size=(n, 3)),
        magnetometer=rng.normal(size=(n, 3)),
        pressure=1000 + rng.normal(size=n),
        orientation=np.tile(q, (n, 1)),
        activity=Activity.Walk,
    )


def test_identity_quaternion_gives_identity():
    assert np.array_equal(quaternion_to_rotation(Quaternion(1, 0, 0, 0)), np.eye(3))


def test_quarter_turn_about_z():
    R = quaternion_to_rotation((S, 0, 0, S))
    np.testing.assert_allclose(R, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-6)


def test_zero_quaternion_rejected():
    with pytest.raises(ZeroQuaternion):
        quaternion_to_rotation((0, 0, 0, 0))
    with pytest.raises(ZeroQuaternion):
        Quaternion(0, 0, 0, 0).normalized()


def test_unnormalized_input_is_normalized():
    np.testing.assert_allclose(quaternion_to_rotation((2, 0, 0, 2)), quaternion_to_rotation((S, 0, 0, S)),
                               atol=1e-7)
    assert abs(Quaternion(3, 4, 0, 0).normalized().norm() - 1) < 1e-3


@pytest.mark.parametrize("axis,angle", [((1, 0, 0), 0.3), ((0, 1, 0), -1.2), ((1, 2, 3), 2.5), ((-1, 0.5, 0.2), 3.1)])
def test_matches_axis_angle_oracle(axis, angle):
    a = np.asarray(axis, float) / np.linalg.norm(axis)
    q = (np.cos(angle / 2), *(np.sin(angle / 2) * a))
    np.testing.assert_allclose(quaternion_to_rotation(q), rotation_about_axis(axis, angle), atol=1e-12)


def test_derotate_examples():
    np.testing.assert_array_equal(derotate((1, 2, 3), np.eye(3)), [1, 2, 3])
    out = derotate((1, 0, 0), quaternion_to_rotation((S, 0, 0, S)))
    np.testing.assert_allclose(out, [0, 1, 0], atol=1e-6)


unit = st.floats(-1, 1, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.tuples(unit, unit, unit, unit).filter(lambda q: np.linalg.norm(q) > 1e-3),
       st.tuples(*[st.floats(-1e3, 1e3, allow_nan=False)] * 3))
def test_rotation_properties(q, v):
    R = quaternion_to_rotation(q)
    assert np.abs(R @ R.T - np.eye(3)).max() <= 1e-6
    assert abs(np.linalg.det(R) - 1) <= 1e-6
    np.testing.assert_allclose(quaternion_to_rotation(tuple(-c for c in q)), R, atol=1e-9, rtol=0)
    v = np.asarray(v)
    n = np.linalg.norm(v)
    assert abs(np.linalg.norm(derotate(v, R)) - n) <= 1e-6 * max(n, 1e-300)


def test_vectorized_matches_scalar(rng):
    q = rng.normal(size=(20, 4))
    batch = quaternions_to_rotations(q)
    for i in range(20):
        np.testing.assert_allclose(batch[i], quaternion_to_rotation(q[i]), atol=1e-15)


def test_preprocess_identity_passthrough():
    s = make_sample()
    d = preprocess_sample(s)
    np.testing.assert_allclose(d.accel_ned, s.accelerometer, atol=1e-6)
    np.testing.assert_array_equal(d.gyro, s.gyroscope.astype(np.float32))
    np.testing.assert_array_equal(d.pressure, s.pressure.astype(np.float32))
    assert d.channels().shape == (500, 10)
    assert d.accel_ned.dtype == np.float32


def test_preprocess_quarter_turn_about_x():
    d = preprocess_sample(make_sample(q=(S, S, 0, 0)))
    np.testing.assert_allclose(d.accel_ned, np.tile([0, -9.81, 0], (500, 1)), atol=1e-4)


def test_preprocess_reports_frame_of_zero_quaternion():
    s = make_sample()
    ori = s.orientation.copy()
    ori[137] = 0
    bad = RawSample(s.accelerometer, s.gyroscope, s.magnetometer, s.pressure, ori, s.activity)
    with pytest.raises(ZeroQuaternion, match="frame 137"):
        preprocess_sample(bad)


def test_preprocess_deterministic(rng):
    s = make_sample(q=tuple(rng.normal(size=4)), rng=rng)
    a, b = preprocess_sample(s), preprocess_sample(s)
    assert a.channels().tobytes() == b.channels().tobytes()


def test_raw_sample_requires_500_frames():
    s = make_sample()
    with pytest.raises(ValueError):
        RawSample(s.accelerometer[:499], s.gyroscope, s.magnetometer, s.pressure, s.orientation, s.activity)
