"""The lifter, the pose/temporal/domain discriminators and the 2D domain adapter.

All networks consume flattened 2D poses ``(B, 28)``. The differentiable
geometry helpers here mirror :mod:`liftgeo.geometry` on :class:`Tensor`
inputs so the closure loop can be backpropagated end to end.
"""
from __future__ import annotations

import numpy as np

from . import geometry as geo
from .errors import CheckpointMismatch, ShapeMismatch
from .nn import autograd as ag
from .nn import checkpoint
from .nn.autograd import Tensor
from .nn.layers import Module, ResidualMLP

N = geo.N_JOINTS


class Lifter(Module):
    """G: 2D pose -> per-joint depth offsets from the plane z = c."""

    kind = "lifter"

    def __init__(self, rng, width=1024, n_blocks=4, c=10.0, dtype=np.float64, out_scale=0.01):
        self.net = ResidualMLP(2 * N, N, width, n_blocks, rng, batchnorm=True, act="relu", dtype=dtype)
        # near-planar start: initial depth offsets are a small fraction of the skeleton size
        self.net.output.W.data *= out_scale
        self.c = c
        self.meta = {"width": width, "blocks": n_blocks, "c": c}

    def forward(self, x2d):
        return self.net(x2d)


class _Discriminator(Module):
    def __init__(self, n_in, rng, width, n_blocks, dtype):
        self.net = ResidualMLP(n_in, 1, width, n_blocks, rng, batchnorm=False, act="leaky_relu", dtype=dtype)

    def logits(self, x):
        return self.net(x)

    def forward(self, x):
        return ag.sigmoid(self.net(x))


class PoseDiscriminator(_Discriminator):
    kind = "pose_discriminator"

    def __init__(self, rng, width=1024, n_blocks=3, dtype=np.float64):
        super().__init__(2 * N, rng, width, n_blocks, dtype)
        self.meta = {"width": width, "blocks": n_blocks}


class TemporalDiscriminator(_Discriminator):
    kind = "temporal_discriminator"

    def __init__(self, rng, M=1, width=1024, n_blocks=3, dtype=np.float64):
        if M < 1:
            raise ValueError("M must be >= 1")
        super().__init__(2 * N + 2 * N * M, rng, width, n_blocks, dtype)
        self.M = M
        self.meta = {"width": width, "blocks": n_blocks, "M": M}


class DomainDiscriminator(_Discriminator):
    kind = "domain_discriminator"

    def __init__(self, rng, width=1024, n_blocks=3, dtype=np.float64):
        super().__init__(2 * N, rng, width, n_blocks, dtype)
        self.meta = {"width": width, "blocks": n_blocks}


class DomainAdapter(Module):
    """C: residual correction added to a source-domain 2D pose."""

    kind = "adapter"

    def __init__(self, rng, width=1024, n_blocks=4, c=10.0, dtype=np.float64):
        self.net = ResidualMLP(2 * N, 2 * N, width, n_blocks, rng, batchnorm=True, act="relu", dtype=dtype)
        self.c = c
        self.meta = {"width": width, "blocks": n_blocks, "c": c}

    def forward(self, x2d):
        return self.net(x2d)


# ------------------------------------------------------------ differentiable geometry

def flat(pose):
    pose = ag.as_tensor(pose)
    return pose.reshape(pose.shape[0], -1)


def unflat(x, dim=2):
    return x.reshape(x.shape[0], -1, dim)


def lift_t(pose, d, c):
    """Tensor version of :func:`geometry.lift_with_depths`; pose (B, N, 2), d (B, N)."""
    pose = ag.as_tensor(pose)
    z = ag.clamp_min(d + c, 1.0)
    zz = z.reshape(z.shape[0], z.shape[1], 1)
    return ag.concat([pose * zz, zz], axis=-1)


def project_t(pose3d, min_depth=None):
    z = pose3d[:, :, 2:3]
    if min_depth is not None:
        z = ag.clamp_min(z, min_depth)
    return pose3d[:, :, 0:2] / z


def root_t(pose, schema=geo.SCHEMA):
    return (pose[:, schema.left_hip, :] + pose[:, schema.right_hip, :]) * 0.5


def normalize_t(pose, c, schema=geo.SCHEMA):
    """Tensor version of :func:`geometry.normalize_pose2d` (pose only)."""
    root = root_t(pose, schema)
    centered = pose - root.reshape(root.shape[0], 1, 2)
    head = centered[:, schema.head, :]
    dist = ag.sqrt(ag.sum_(ag.square(head), axis=-1))
    return centered / (dist * c).reshape(dist.shape[0], 1, 1)


def rigid_t(pose3d, R, root, c):
    """``R (X - root) + [0, 0, c]`` with constant per-sample ``R``."""
    centered = pose3d - root.reshape(root.shape[0], 1, 3)
    return ag.rotate(centered, R) + np.array([0.0, 0.0, c], dtype=pose3d.dtype)


def inverse_rigid_t(pose3d, R, root, c):
    Rt = np.swapaxes(R, -1, -2)
    back = ag.rotate(pose3d - np.array([0.0, 0.0, c], dtype=pose3d.dtype), Rt)
    return back + root.reshape(root.shape[0], 1, 3)


# ------------------------------------------------------------------ model operations

def _batch_pose(pose, dtype):
    if isinstance(pose, Tensor):
        return pose
    pose = np.asarray(pose, dtype=dtype)
    if pose.ndim == 2:
        pose = pose[None]
    return Tensor(pose)


def lift(G: Lifter, pose, c=None):
    """Lift normalized 2D poses ``(B, N, 2)`` to 3D; returns a Tensor ``(B, N, 3)``."""
    c = G.c if c is None else c
    pose = _batch_pose(pose, G.net.output.W.dtype)
    return lift_t(pose, G(flat(pose)), c)


def lift_numpy(G: Lifter, poses, batch_size=4096):
    """Inference helper: eval-mode lifting of a pose array, returns float64 ``(B, N, 3)``."""
    was_training = G.training
    G.eval()
    poses = np.asarray(poses)
    out = np.zeros(poses.shape[:-1] + (3,))
    dtype = G.net.output.W.dtype
    for i in range(0, len(poses), batch_size):
        chunk = poses[i:i + batch_size].astype(dtype)
        d = G(Tensor(chunk.reshape(len(chunk), -1))).data.astype(float)
        out[i:i + batch_size] = geo.lift_with_depths(chunk.astype(float), d, G.c)
    G.train(was_training)
    return out


def discriminate(D, pose):
    """Probability that each 2D pose in the batch is real, as a ``(B,)`` Tensor."""
    pose = _batch_pose(pose, D.net.output.W.dtype)
    p = D(flat(pose))
    return p.reshape(p.shape[0])


def temporal_input(pose_t, diffs):
    """Concatenate a pose ``(B, N, 2)`` with ``M`` differences ``(B, M, N, 2)``."""
    pose_t = ag.as_tensor(pose_t)
    diffs = ag.as_tensor(diffs, dtype=pose_t.dtype)
    b = pose_t.shape[0]
    return ag.concat([pose_t.reshape(b, -1), diffs.reshape(b, -1)], axis=-1)


def temporal_discriminate(T: TemporalDiscriminator, pose_t, diffs):
    dtype = T.net.output.W.dtype
    pose_t = _batch_pose(pose_t, dtype)
    if not isinstance(diffs, Tensor):
        diffs = np.asarray(diffs, dtype=dtype)
        if diffs.ndim == 3:
            diffs = diffs[None]
        diffs = Tensor(diffs)
    if diffs.data.ndim != 4 or diffs.shape[1] != T.M:
        raise ShapeMismatch(f"expected {T.M} differences per pose, got shape {diffs.shape}")
    p = T(temporal_input(pose_t, diffs))
    return p.reshape(p.shape[0])


def correction(C: DomainAdapter, pose_s):
    pose_s = _batch_pose(pose_s, C.net.output.W.dtype)
    return unflat(C(flat(pose_s)))


def adapt(C: DomainAdapter, pose_s, renormalize=True):
    """``x_sc = x_s + C(x_s)``, re-normalized to the root/scale convention."""
    pose_s = _batch_pose(pose_s, C.net.output.W.dtype)
    out = pose_s + correction(C, pose_s)
    return normalize_t(out, C.c) if renormalize else out


def adapt_numpy(C: DomainAdapter, poses, batch_size=4096):
    was_training = C.training
    C.eval()
    poses = np.asarray(poses)
    out = np.zeros(poses.shape)
    for i in range(0, len(poses), batch_size):
        out[i:i + batch_size] = adapt(C, poses[i:i + batch_size]).data
    C.train(was_training)
    return out


# ---------------------------------------------------------------------- checkpoints

_KINDS = {cls.kind: cls for cls in
          (Lifter, PoseDiscriminator, TemporalDiscriminator, DomainDiscriminator, DomainAdapter)}


def build(kind, meta, rng=None, dtype=np.float32):
    rng = np.random.default_rng(0) if rng is None else rng
    cls = _KINDS.get(kind)
    if cls is None:
        raise CheckpointMismatch(f"unknown model kind {kind!r}")
    kw = {"width": meta["width"], "n_blocks": meta["blocks"], "dtype": dtype}
    if "c" in meta:
        kw["c"] = meta["c"]
    if "M" in meta:
        kw["M"] = meta["M"]
    return cls(rng, **kw)


def save_model(path, model):
    checkpoint.save(path, model.kind, model.state_dict(), model.meta)


def load_model(path, expect=None, dtype=np.float32):
    kind, meta, entries = checkpoint.load(path)
    if expect is not None and kind != expect:
        raise CheckpointMismatch(f"expected a {expect} checkpoint, found {kind}")
    try:
        model = build(kind, meta, dtype=dtype)
        model.load_state_dict(entries)
    except (KeyError, ShapeMismatch) as exc:
        raise CheckpointMismatch(str(exc)) from exc
    return model
