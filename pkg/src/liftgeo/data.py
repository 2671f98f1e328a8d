"""Pose files, temporal windows and the synthetic articulated-skeleton generator."""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import ConfigInvalid, JointCountError, ParseError

N = geo.N_JOINTS


@dataclass
class PoseRecord:
    seq_id: str
    frame_idx: int
    joints: np.ndarray  # (14, 2) or (14, 3)
    confidence: np.ndarray = None

    def __post_init__(self):
        if self.frame_idx < 0:
            raise ValueError("frame_idx must be >= 0")
        if self.confidence is None:
            self.confidence = np.ones(N)


def pose_header(dim=2, confidence=False):
    axes = "xyz"[:dim]
    cols = ["seq_id", "frame_idx"] + [f"j{j}{a}" for j in range(N) for a in axes]
    if confidence:
        cols += [f"c{j}" for j in range(N)]
    return cols


def _parse_float(text, line):
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", line) from None


def load_poses(path, dim=2):
    """Read a pose CSV into records, in file order.

    2D files may carry 14 trailing confidence columns; missing confidences
    default to 1.0. ``dim=3`` reads the ground-truth variant.
    """
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("missing header", 1)
        n_coord = N * dim
        has_conf = len(header) == 2 + n_coord + N
        if header[:2] != ["seq_id", "frame_idx"] or len(header) not in (2 + n_coord, 2 + n_coord + N):
            raise ParseError(f"unexpected header with {len(header)} columns", 1)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            n_values = len(row) - 2
            if n_values not in (n_coord, n_coord + N) or (n_values == n_coord + N) != has_conf:
                raise JointCountError(
                    f"expected {n_coord} coordinates{' + 14 confidences' if has_conf else ''}, "
                    f"got {n_values} values", line)
            try:
                frame = int(row[1])
            except ValueError:
                raise ParseError(f"bad frame index {row[1]!r}", line) from None
            if frame < 0:
                raise ParseError("negative frame index", line)
            values = np.array([_parse_float(v, line) for v in row[2:]])
            joints = values[:n_coord].reshape(N, dim)
            conf = values[n_coord:] if has_conf else None
            records.append(PoseRecord(row[0], frame, joints, conf))
    return records


def _fmt(v):
    return repr(float(v))


def save_poses(path, records, confidence=False):
    dim = records[0].joints.shape[-1] if records else 2
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(pose_header(dim, confidence))
        for r in records:
            row = [r.seq_id, str(r.frame_idx)] + [_fmt(v) for v in np.ravel(r.joints)]
            if confidence:
                row += [_fmt(v) for v in r.confidence]
            writer.writerow(row)


def records_from_array(poses, seq_ids=None, frame_idx=None):
    poses = np.asarray(poses)
    n = len(poses)
    seq_ids = ["0"] * n if seq_ids is None else seq_ids
    frame_idx = range(n) if frame_idx is None else frame_idx
    return [PoseRecord(str(s), int(f), p) for s, f, p in zip(seq_ids, frame_idx, poses)]


def records_to_array(records):
    if not records:
        return np.zeros((0, N, 2))
    return np.stack([r.joints for r in records])


def filter_complete(records, confidence_threshold=0.0):
    if not 0.0 <= confidence_threshold <= 1.0:
        raise ValueError("confidence threshold must lie in [0, 1]")
    return [r for r in records
            if np.all(np.isfinite(r.joints)) and np.all(r.confidence >= confidence_threshold)]


@dataclass
class TemporalItem:
    seq_id: str
    frames: tuple
    pose_t: np.ndarray
    diffs: np.ndarray  # (M, 14, 2): pose_t - pose_{t+k}, k = 1..M


def _windows(records, M):
    by_seq = defaultdict(list)
    for r in records:
        by_seq[r.seq_id].append(r)
    for seq_id, recs in by_seq.items():
        recs = sorted(recs, key=lambda r: r.frame_idx)
        frames = [r.frame_idx for r in recs]
        for i in range(len(recs) - M):
            if frames[i + M] - frames[i] == M and all(
                    frames[i + k + 1] - frames[i + k] == 1 for k in range(M)):
                yield seq_id, recs[i:i + M + 1]


def make_temporal_pairs(records, M=1):
    """Items for every run of M+1 consecutive frames inside one sequence."""
    items = []
    for seq_id, win in _windows(records, M):
        pose_t = win[0].joints
        diffs = np.stack([pose_t - w.joints for w in win[1:]])
        items.append(TemporalItem(seq_id, tuple(w.frame_idx for w in win), pose_t, diffs))
    return items


def temporal_windows(records, M=1):
    """Array ``(K, M+1, 14, 2)`` of consecutive-frame windows for training."""
    wins = [np.stack([w.joints for w in win]) for _, win in _windows(records, M)]
    if not wins:
        return np.zeros((0, M + 1, N, 2))
    return np.stack(wins)


# ---------------------------------------------------------------- synthetic skeletons

DEFAULT_BONES = {
    "spine": 0.75,
    "head": 0.25,
    "shoulder_half_width": 0.19,
    "upper_arm": 0.30,
    "forearm": 0.27,
    "hip_half_width": 0.12,
    "thigh": 0.45,
    "shin": 0.45,
}

# degrees; (low, high)
DEFAULT_ANGLES = {
    "torso_lean": (-10.0, 30.0),
    "torso_side": (-10.0, 10.0),
    "torso_twist": (-25.0, 25.0),
    "head_flex": (-20.0, 30.0),
    "head_side": (-15.0, 15.0),
    "shoulder_flex": (-40.0, 120.0),
    "shoulder_abd": (0.0, 80.0),
    "shoulder_twist": (-30.0, 60.0),
    "elbow": (0.0, 130.0),
    "hip_flex": (-25.0, 90.0),
    "hip_abd": (0.0, 30.0),
    "knee": (0.0, 120.0),
}

_SIDED = {"shoulder_flex", "shoulder_abd", "shoulder_twist", "elbow", "hip_flex", "hip_abd", "knee"}


@dataclass
class SyntheticSkeletonConfig:
    n_samples: int = 100_000
    c: float = 10.0
    seed: int = 0
    bones: dict = field(default_factory=lambda: dict(DEFAULT_BONES))
    angles: dict = field(default_factory=lambda: dict(DEFAULT_ANGLES))
    azimuth_range: tuple = (-np.pi, np.pi)
    elevation_range: tuple = (-np.pi / 9, np.pi / 9)
    sequence_mode: bool = False
    frames_per_sequence: int = 32
    length_jitter: float = 0.0

    def validate(self):
        if self.n_samples < 0:
            raise ConfigInvalid("n_samples must be >= 0")
        if self.c <= 1:
            raise ConfigInvalid("c must exceed 1")
        if set(self.bones) != set(DEFAULT_BONES) or min(self.bones.values()) <= 0:
            raise ConfigInvalid("bone template needs every bone with positive length")
        if set(self.angles) != set(DEFAULT_ANGLES):
            raise ConfigInvalid("angle ranges must name every joint angle")
        for name, (lo, hi) in self.angles.items():
            if lo > hi or lo < -180 or hi > 180:
                raise ConfigInvalid(f"angle range {name} = {(lo, hi)} is not plausible")
        if self.sequence_mode and self.frames_per_sequence < 2:
            raise ConfigInvalid("sequences need at least 2 frames")
        if not 0 <= self.length_jitter < 0.5:
            raise ConfigInvalid("length_jitter must lie in [0, 0.5)")


@dataclass
class SyntheticDataset:
    poses2d: np.ndarray   # (n, 14, 2) normalized
    poses3d: np.ndarray   # (n, 14, 3) camera-frame ground truth, consistent with poses2d
    rotations: np.ndarray  # (n, 3, 3) body-to-camera orientation
    seq_ids: list
    frame_idx: np.ndarray
    c: float = 10.0

    def __len__(self):
        return len(self.poses2d)

    def oracle_depths(self):
        """Depth offsets that lift ``poses2d`` exactly onto ``poses3d``."""
        return self.poses3d[..., 2] - self.c

    def records2d(self):
        return records_from_array(self.poses2d, self.seq_ids, self.frame_idx)

    def records3d(self):
        return records_from_array(self.poses3d, self.seq_ids, self.frame_idx)

    def subset(self, idx):
        idx = np.asarray(idx)
        return SyntheticDataset(self.poses2d[idx], self.poses3d[idx], self.rotations[idx],
                                [self.seq_ids[i] for i in idx], self.frame_idx[idx], self.c)


def _rot_x(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([o, z, z], -1), np.stack([z, c, -s], -1), np.stack([z, s, c], -1)], -2)


def _rot_y(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, z, s], -1), np.stack([z, o, z], -1), np.stack([-s, z, c], -1)], -2)


def _rot_z(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, -s, z], -1), np.stack([s, c, z], -1), np.stack([z, z, o], -1)], -2)


def _mv(R, v):
    return np.einsum("nij,nj->ni", R, v)


def forward_kinematics(angles, bones):
    """Body-frame joints ``(n, 14, 3)``; x = subject's left, y = up, z = forward.

    ``angles`` maps names to radian arrays of shape ``(n,)`` (sided angles
    carry ``_l``/``_r`` suffixes); ``bones`` maps names to lengths, scalar or
    per-sample.
    """
    n = len(angles["torso_lean"])
    b = {k: np.broadcast_to(np.asarray(v, dtype=float), (n,)) for k, v in bones.items()}
    zero = np.zeros(n)
    down = lambda length: np.stack([zero, -length, zero], -1)  # noqa: E731
    up = lambda length: np.stack([zero, length, zero], -1)  # noqa: E731

    J = np.zeros((n, N, 3))
    R_t = _rot_y(angles["torso_twist"]) @ _rot_z(angles["torso_side"]) @ _rot_x(angles["torso_lean"])
    neck = _mv(R_t, up(b["spine"]))
    J[:, geo.NECK] = neck
    R_h = R_t @ _rot_z(angles["head_side"]) @ _rot_x(angles["head_flex"])
    J[:, geo.HEAD] = neck + _mv(R_h, up(b["head"]))

    for side, sign, (sh, el, wr), (hp, kn, an) in (
            ("l", 1.0, (geo.L_SHOULDER, geo.L_ELBOW, geo.L_WRIST), (geo.L_HIP, geo.L_KNEE, geo.L_ANKLE)),
            ("r", -1.0, (geo.R_SHOULDER, geo.R_ELBOW, geo.R_WRIST), (geo.R_HIP, geo.R_KNEE, geo.R_ANKLE))):
        a = lambda name: angles[f"{name}_{side}"]  # noqa: E731
        J[:, sh] = neck + _mv(R_t, np.stack([sign * b["shoulder_half_width"], zero, zero], -1))
        R_arm = (R_t @ _rot_z(sign * a("shoulder_abd")) @ _rot_x(-a("shoulder_flex"))
                 @ _rot_y(sign * a("shoulder_twist")))
        J[:, el] = J[:, sh] + _mv(R_arm, down(b["upper_arm"]))
        J[:, wr] = J[:, el] + _mv(R_arm @ _rot_x(-a("elbow")), down(b["forearm"]))

        J[:, hp] = np.stack([sign * b["hip_half_width"], zero, zero], -1)
        R_leg = _rot_z(sign * a("hip_abd")) @ _rot_x(-a("hip_flex"))
        J[:, kn] = J[:, hp] + _mv(R_leg, down(b["thigh"]))
        J[:, an] = J[:, kn] + _mv(R_leg @ _rot_x(a("knee")), down(b["shin"]))
    return J


def _sample_angles_uniform(rng, ranges, n):
    out = {}
    for name, (lo, hi) in ranges.items():
        keys = [f"{name}_l", f"{name}_r"] if name in _SIDED else [name]
        for key in keys:
            out[key] = np.deg2rad(rng.uniform(lo, hi, size=n))
    return out


def _sample_angles_smooth(rng, ranges, n_seq, n_frames):
    """Per-sequence sinusoidal angle trajectories that stay inside each range."""
    t = np.arange(n_frames)
    out = {}
    for name, (lo, hi) in ranges.items():
        keys = [f"{name}_l", f"{name}_r"] if name in _SIDED else [name]
        for key in keys:
            mid = rng.uniform(lo, hi, size=(n_seq, 1))
            amp = rng.uniform(0.0, 1.0, size=(n_seq, 1)) * np.minimum(mid - lo, hi - mid)
            period = rng.uniform(16.0, 48.0, size=(n_seq, 1))
            phase = rng.uniform(0, 2 * np.pi, size=(n_seq, 1))
            traj = mid + amp * np.sin(2 * np.pi * t / period + phase)
            out[key] = np.deg2rad(traj.reshape(-1))
    return out


def place_in_camera(body, R, c, schema=geo.SCHEMA, iters=60):
    """Rotate body-frame joints into the camera frame and translate them so the
    projected hip midpoint is the origin and projected head-root distance is 1/c.

    The resulting 2D projection is already normalized, which keeps the
    returned 3D pose exactly consistent with the normalized 2D pose.
    """
    rotated = np.einsum("nij,nkj->nki", R, body)
    depth = np.full(len(body), float(c))
    lh, rh, hd = schema.left_hip, schema.right_hip, schema.head
    for _ in range(iters):
        Z = rotated[..., 2] + depth[:, None]
        wl, wr = 1.0 / Z[:, lh], 1.0 / Z[:, rh]
        # lateral offset putting the midpoint of the projected hips on the optical axis
        shift = -(rotated[:, lh, :2] * wl[:, None] + rotated[:, rh, :2] * wr[:, None]) / (wl + wr)[:, None]
        X = np.concatenate([rotated[..., :2] + shift[:, None], Z[..., None]], -1)
        x = geo.project(X)
        dist = np.linalg.norm(x[:, hd] - 0.5 * (x[:, lh] + x[:, rh]), axis=-1)
        ratio = dist * c
        depth = depth * ratio
        if np.max(np.abs(ratio - 1.0)) < 1e-15:
            break
    return X


def synth_generate(cfg: SyntheticSkeletonConfig) -> SyntheticDataset:
    cfg.validate()
    if cfg.n_samples == 0:
        return SyntheticDataset(np.zeros((0, N, 2)), np.zeros((0, N, 3)), np.zeros((0, 3, 3)),
                                [], np.zeros(0, dtype=int), cfg.c)
    rng = np.random.default_rng(cfg.seed)
    if cfg.sequence_mode:
        n_seq = -(-cfg.n_samples // cfg.frames_per_sequence)
        angles = _sample_angles_smooth(rng, cfg.angles, n_seq, cfg.frames_per_sequence)
        az, el = geo.sample_angles(rng, n_seq, cfg.azimuth_range, cfg.elevation_range)
        az = np.repeat(az, cfg.frames_per_sequence)
        el = np.repeat(el, cfg.frames_per_sequence)
        seq = np.repeat(np.arange(n_seq), cfg.frames_per_sequence)
        frames = np.tile(np.arange(cfg.frames_per_sequence), n_seq)
        n_total = n_seq * cfg.frames_per_sequence
    else:
        n_total = cfg.n_samples
        angles = _sample_angles_uniform(rng, cfg.angles, n_total)
        az, el = geo.sample_angles(rng, n_total, cfg.azimuth_range, cfg.elevation_range)
        seq = np.arange(n_total)
        frames = np.zeros(n_total, dtype=int)

    bones = dict(cfg.bones)
    if cfg.length_jitter > 0:
        n_bodies = int(seq.max()) + 1
        for k in bones:
            jit = 1.0 + rng.uniform(-cfg.length_jitter, cfg.length_jitter, size=n_bodies)
            bones[k] = bones[k] * jit[seq]

    body = forward_kinematics(angles, bones)
    R = geo.rotation_matrix(az, el)
    X = place_in_camera(body, R, cfg.c)
    x, _, _ = geo.normalize_pose2d(geo.project(X), c=cfg.c)

    keep = slice(0, cfg.n_samples)
    return SyntheticDataset(
        poses2d=x[keep], poses3d=X[keep], rotations=R[keep],
        seq_ids=[f"s{int(s)}" for s in seq[keep]], frame_idx=frames[keep].astype(int), c=cfg.c)


def raise_shoulders(poses2d, delta, schema_idx=(geo.L_SHOULDER, geo.R_SHOULDER)):
    """Domain shift used in tests: move both shoulders up by ``delta`` (image y)."""
    out = np.array(poses2d, dtype=float, copy=True)
    for j in schema_idx:
        out[..., j, 1] += delta
    return out
