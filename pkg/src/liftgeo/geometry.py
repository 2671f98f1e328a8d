"""Camera model, pose normalization and rigid transforms.

Conventions: unit focal length camera at the origin looking down +Z,
projection ``(X/Z, Y/Z)``. Poses are numpy arrays of shape ``(..., 14, 2)``
or ``(..., 14, 3)``; every function accepts a single pose or a batch.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraPlane, DegeneratePose

N_JOINTS = 14

HEAD = 0
NECK = 1
R_SHOULDER = 2
R_ELBOW = 3
R_WRIST = 4
L_SHOULDER = 5
L_ELBOW = 6
L_WRIST = 7
R_HIP = 8
R_KNEE = 9
R_ANKLE = 10
L_HIP = 11
L_KNEE = 12
L_ANKLE = 13

JOINT_NAMES = (
    "head", "neck",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_hip", "r_knee", "r_ankle",
    "l_hip", "l_knee", "l_ankle",
)


@dataclass(frozen=True)
class JointSchema:
    names: tuple = JOINT_NAMES
    head: int = HEAD
    left_hip: int = L_HIP
    right_hip: int = R_HIP
    # (name, proximal, middle, distal): upper segment proximal->middle, lower middle->distal
    limb_pairs: tuple = (
        ("arm_left", L_SHOULDER, L_ELBOW, L_WRIST),
        ("arm_right", R_SHOULDER, R_ELBOW, R_WRIST),
        ("leg_left", L_HIP, L_KNEE, L_ANKLE),
        ("leg_right", R_HIP, R_KNEE, R_ANKLE),
    )

    def __post_init__(self):
        n = len(self.names)
        if n != N_JOINTS:
            raise ValueError(f"schema must have {N_JOINTS} joints, got {n}")
        idx = (self.head, self.left_hip, self.right_hip)
        if len(set(idx)) != 3 or not all(0 <= i < n for i in idx):
            raise ValueError("head and hip indices must be distinct and in range")


SCHEMA = JointSchema()


@dataclass
class RigidTransform:
    """``Y = R (X - root) + T`` with ``T = [0, 0, c]``.

    ``R`` may be a single ``(3, 3)`` matrix or a batch ``(B, 3, 3)``; ``root``
    broadcasts the same way.
    """

    R: np.ndarray
    root: np.ndarray
    c: float = 10.0
    T: np.ndarray = field(init=False)

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        self.root = np.asarray(self.root, dtype=float)
        self.T = np.array([0.0, 0.0, float(self.c)])


def root_2d(pose, schema=SCHEMA):
    pose = np.asarray(pose)
    return 0.5 * (pose[..., schema.left_hip, :] + pose[..., schema.right_hip, :])


root_3d = root_2d


def normalize_pose2d(raw, schema=SCHEMA, c=10.0):
    """Root-center a 2D pose and rescale it so head-to-root distance is ``1/c``.

    Returns ``(pose, scale, root)`` where ``pose = scale * (raw - root)``.
    """
    raw = np.asarray(raw, dtype=float)
    root = root_2d(raw, schema)
    centered = raw - root[..., None, :]
    dist = np.linalg.norm(centered[..., schema.head, :], axis=-1)
    if not np.all(np.isfinite(dist)) or np.any(dist < 1e-9):
        raise DegeneratePose("head joint coincides with root or is not finite")
    scale = 1.0 / (c * dist)
    return centered * np.asarray(scale)[..., None, None], scale, root


def lift_with_depths(pose, d, c=10.0):
    """Place joint i at depth ``max(1, c + d_i)`` along its viewing ray."""
    pose = np.asarray(pose, dtype=float)
    z = np.maximum(1.0, c + np.asarray(d, dtype=float))
    return np.concatenate([pose * z[..., None], z[..., None]], axis=-1)


def project(pose3d):
    pose3d = np.asarray(pose3d, dtype=float)
    return pose3d[..., :2] / pose3d[..., 2:3]


def rotation_matrix(azimuth, elevation):
    """Elevation (about camera x) applied after azimuth (about camera y)."""
    azimuth = np.asarray(azimuth, dtype=float)
    elevation = np.asarray(elevation, dtype=float)
    ca, sa = np.cos(azimuth), np.sin(azimuth)
    ce, se = np.cos(elevation), np.sin(elevation)
    zero, one = np.zeros_like(ca), np.ones_like(ca)
    r_azim = np.stack([
        np.stack([ca, zero, sa], -1),
        np.stack([zero, one, zero], -1),
        np.stack([-sa, zero, ca], -1),
    ], -2)
    r_elev = np.stack([
        np.stack([one, zero, zero], -1),
        np.stack([zero, ce, -se], -1),
        np.stack([zero, se, ce], -1),
    ], -2)
    return r_elev @ r_azim


def sample_angles(rng, n=None, azimuth_range=(-np.pi, np.pi),
                  elevation_range=(-np.pi / 9, np.pi / 9)):
    az = rng.uniform(azimuth_range[0], azimuth_range[1], size=n)
    el = rng.uniform(elevation_range[0], elevation_range[1], size=n)
    return az, el


def sample_rotation(rng, azimuth_range=(-np.pi, np.pi),
                    elevation_range=(-np.pi / 9, np.pi / 9), root=(0.0, 0.0, 0.0),
                    c=10.0, n=None):
    """Sample a random camera rotation about the skeleton root.

    With ``n`` given, ``R`` has shape ``(n, 3, 3)``.
    """
    az, el = sample_angles(rng, n, azimuth_range, elevation_range)
    return RigidTransform(rotation_matrix(az, el), root, c)


def _rotate(R, v):
    # v: (..., J, 3); R: (3, 3) or (..., 3, 3) matching v's leading dims
    return np.einsum("...ij,...kj->...ki", R, v)


def apply_rigid(pose3d, Q: RigidTransform, check=True):
    pose3d = np.asarray(pose3d, dtype=float)
    out = _rotate(Q.R, pose3d - Q.root[..., None, :]) + Q.T
    if check and np.any(out[..., 2] < 1.0):
        raise BehindCameraPlane("rotated joint is closer than the z=1 plane")
    return out


def invert_rigid(Q: RigidTransform):
    """Return the map ``Y -> R^T (Y - T) + root``."""
    Rt = np.swapaxes(Q.R, -1, -2)

    def inverse(pose3d):
        pose3d = np.asarray(pose3d, dtype=float)
        return _rotate(Rt, pose3d - Q.T) + Q.root[..., None, :]

    return inverse


def pairwise_distances(pose):
    pose = np.asarray(pose, dtype=float)
    diff = pose[..., :, None, :] - pose[..., None, :, :]
    return np.linalg.norm(diff, axis=-1)
