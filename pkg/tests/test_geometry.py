import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from liftgeo import geometry as geo
from liftgeo.errors import BehindCameraPlane, DegeneratePose

from helpers import random_pose2d

coords = st.floats(-5, 5, allow_nan=False, width=64)
raw_poses = arrays(np.float64, (14, 2), elements=coords).filter(
    lambda p: np.linalg.norm(p[0] - 0.5 * (p[8] + p[11])) > 1e-3)


def _rest_pose2d():
    # a root-centered pose with head-root distance 0.1
    rng = np.random.default_rng(5)
    p = rng.normal(size=(14, 2)) * 0.05
    p -= geo.root_2d(p)
    p[0] = [0.0, 0.1]
    return p


# ------------------------------------------------------------------ schema

def test_schema_constants():
    assert geo.N_JOINTS == 14 and len(geo.JOINT_NAMES) == 14
    assert (geo.HEAD, geo.R_HIP, geo.L_HIP) == (0, 8, 11)
    assert geo.SCHEMA.head == 0 and geo.SCHEMA.left_hip == 11 and geo.SCHEMA.right_hip == 8
    assert [name for name, *_ in geo.SCHEMA.limb_pairs] == ["arm_left", "arm_right", "leg_left", "leg_right"]


def test_schema_validation():
    with pytest.raises(ValueError):
        geo.JointSchema(names=geo.JOINT_NAMES[:13])
    with pytest.raises(ValueError):
        geo.JointSchema(head=8)
    with pytest.raises(ValueError):
        geo.JointSchema(left_hip=14)


# ----------------------------------------------------------- normalization

def test_normalize_fixed_point():
    p = _rest_pose2d()
    out, scale, root = geo.normalize_pose2d(p, c=10.0)
    np.testing.assert_allclose(out, p, atol=1e-12)
    assert scale == pytest.approx(1.0)
    np.testing.assert_allclose(root, 0.0, atol=1e-15)


def test_normalize_scaled_translated_copy():
    p = _rest_pose2d()
    out, scale, root = geo.normalize_pose2d(5 * p + np.array([3.0, 7.0]))
    np.testing.assert_allclose(out, p, atol=1e-12)
    assert scale == pytest.approx(0.2)
    np.testing.assert_allclose(root, [3.0, 7.0], atol=1e-12)


@given(raw_poses)
def test_normalize_invariants(raw):
    out, scale, root = geo.normalize_pose2d(raw, c=10.0)
    np.testing.assert_allclose(geo.root_2d(out), 0.0, atol=1e-9)
    assert np.linalg.norm(out[0]) == pytest.approx(0.1, abs=1e-9)
    np.testing.assert_allclose(scale * (raw - root), out, atol=1e-12)


@given(raw_poses)
def test_normalize_idempotent(raw):
    once = geo.normalize_pose2d(raw)[0]
    np.testing.assert_allclose(geo.normalize_pose2d(once)[0], once, atol=1e-12)


@given(raw_poses, st.floats(0.01, 100), st.floats(-50, 50), st.floats(-50, 50))
def test_normalize_similarity_invariant(raw, s, tx, ty):
    a = geo.normalize_pose2d(raw)[0]
    b = geo.normalize_pose2d(s * raw + np.array([tx, ty]))[0]
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_normalize_batched(rng):
    raw = rng.normal(size=(7, 14, 2))
    out, scale, root = geo.normalize_pose2d(raw)
    assert out.shape == (7, 14, 2) and scale.shape == (7,) and root.shape == (7, 2)
    for i in range(7):
        np.testing.assert_allclose(out[i], geo.normalize_pose2d(raw[i])[0], atol=1e-14)


def test_normalize_degenerate():
    p = np.zeros((14, 2))
    with pytest.raises(DegeneratePose):
        geo.normalize_pose2d(p)
    p = _rest_pose2d()
    p[0] = geo.root_2d(p) + 1e-11
    with pytest.raises(DegeneratePose):
        geo.normalize_pose2d(p)


# -------------------------------------------------------- lifting/projection

def test_lift_zero_offsets():
    p = _rest_pose2d()
    X = geo.lift_with_depths(p, np.zeros(14), c=10.0)
    np.testing.assert_allclose(X[:, :2], 10 * p)
    np.testing.assert_allclose(X[:, 2], 10.0)


def test_lift_clamp():
    X = geo.lift_with_depths(_rest_pose2d(), np.full(14, -20.0), c=10.0)
    np.testing.assert_array_equal(X[:, 2], 1.0)


@given(arrays(np.float64, (14, 2), elements=st.floats(-1, 1)),
       arrays(np.float64, (14,), elements=st.floats(-30, 30)))
def test_project_lift_closure(p, d):
    np.testing.assert_allclose(geo.project(geo.lift_with_depths(p, d)), p, atol=1e-12, rtol=0)


def test_project_examples():
    np.testing.assert_allclose(geo.project(np.array([0.0, 0.0, 10.0])), [0.0, 0.0])
    np.testing.assert_allclose(geo.project(np.array([1.0, 2.0, 10.0])), [0.1, 0.2])


@given(st.floats(0.1, 10))
def test_project_scale_about_camera(s):
    X = geo.lift_with_depths(random_pose2d(np.random.default_rng(0)), np.linspace(-1, 1, 14))
    np.testing.assert_allclose(geo.project(s * X), geo.project(X), atol=1e-12)


# ---------------------------------------------------------------- rotations

def test_rotation_identity(rng):
    Q = geo.sample_rotation(rng, (0.0, 0.0), (0.0, 0.0))
    np.testing.assert_array_equal(Q.R, np.eye(3))
    np.testing.assert_array_equal(Q.T, [0.0, 0.0, 10.0])


def test_rotation_order():
    # elevation applied after azimuth
    az, el = 0.3, -0.2
    ca, sa, ce, se = np.cos(az), np.sin(az), np.cos(el), np.sin(el)
    Ra = np.array([[ca, 0, sa], [0, 1, 0], [-sa, 0, ca]])
    Re = np.array([[1, 0, 0], [0, ce, -se], [0, se, ce]])
    np.testing.assert_allclose(geo.rotation_matrix(az, el), Re @ Ra, atol=1e-15)


def test_rotations_orthonormal(rng):
    Q = geo.sample_rotation(rng, n=1000)
    RtR = np.swapaxes(Q.R, -1, -2) @ Q.R
    np.testing.assert_allclose(RtR, np.broadcast_to(np.eye(3), RtR.shape), atol=1e-12)
    np.testing.assert_allclose(np.linalg.det(Q.R), 1.0, atol=1e-12)


def test_rotation_angles_uniform():
    rng = np.random.default_rng(99)
    az, el = geo.sample_angles(rng, 100_000)
    ks_az = stats.kstest(az, stats.uniform(loc=-np.pi, scale=2 * np.pi).cdf).statistic
    ks_el = stats.kstest(el, stats.uniform(loc=-np.pi / 9, scale=2 * np.pi / 9).cdf).statistic
    assert ks_az < 0.01 and ks_el < 0.01


# ------------------------------------------------------------ rigid maps

def _pose3d(rng):
    return geo.lift_with_depths(random_pose2d(rng), rng.uniform(-1, 1, 14))


def test_apply_rigid_identity(rng):
    X = _pose3d(rng)
    root = geo.root_3d(X)
    Y = geo.apply_rigid(X, geo.RigidTransform(np.eye(3), root, 10.0))
    np.testing.assert_allclose(Y, X - root + [0, 0, 10.0], atol=1e-12)
    np.testing.assert_allclose(geo.root_3d(Y), [0, 0, 10.0], atol=1e-12)
    back = geo.invert_rigid(geo.RigidTransform(np.eye(3), root, 10.0))(Y)
    np.testing.assert_allclose(geo.root_3d(back), root, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_rigid_roundtrips_and_distances(seed):
    rng = np.random.default_rng(seed)
    X = _pose3d(rng)
    Q = geo.sample_rotation(rng, root=geo.root_3d(X))
    Y = geo.apply_rigid(X, Q, check=False)
    inv = geo.invert_rigid(Q)
    np.testing.assert_allclose(inv(Y), X, atol=1e-9)
    np.testing.assert_allclose(geo.root_3d(Y), [0, 0, 10.0], atol=1e-9)
    np.testing.assert_allclose(geo.pairwise_distances(Y), geo.pairwise_distances(X), atol=1e-9)
    # other direction
    Y2 = Y + rng.normal(scale=0.1, size=Y.shape)
    np.testing.assert_allclose(geo.apply_rigid(inv(Y2), Q, check=False), Y2, atol=1e-9)


def test_rigid_batched(rng):
    X = np.stack([_pose3d(rng) for _ in range(5)])
    Q = geo.sample_rotation(rng, root=geo.root_3d(X), n=5)
    Y = geo.apply_rigid(X, Q, check=False)
    for i in range(5):
        Qi = geo.RigidTransform(Q.R[i], Q.root[i], 10.0)
        np.testing.assert_allclose(Y[i], geo.apply_rigid(X[i], Qi, check=False), atol=1e-12)


def test_behind_camera_plane(rng):
    X = _pose3d(rng) * 3.0
    Q = geo.RigidTransform(np.eye(3), geo.root_3d(X), c=1.2)
    X[0, 2] = geo.root_3d(X)[2] - 5.0
    with pytest.raises(BehindCameraPlane):
        geo.apply_rigid(X, Q)
    assert geo.apply_rigid(X, Q, check=False)[0, 2] < 1.0


def test_rigid_transform_T_is_exact():
    Q = geo.RigidTransform(np.eye(3), np.zeros(3), c=7.5)
    assert Q.T.tolist() == [0.0, 0.0, 7.5]
