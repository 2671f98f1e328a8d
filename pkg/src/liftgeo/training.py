"""Losses, the lift-rotate-project-lift closure loop and the training schedules."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import evaluate as ev
from . import geometry as geo
from . import models as mdl
from .errors import ConfigInvalid, DataMissing, NumericFailure, PairMismatch, SequenceRequired
from .nn import autograd as ag
from .nn.autograd import Tensor
from .nn.optim import Adam

log = logging.getLogger(__name__)

LOG_EPS = 1e-7
MAX_RESAMPLES = 8
FLAG_ORDER = ("Adv", "SS", "DA", "TD")
METRIC_COLUMNS = ("epoch", "loss_adv_d", "loss_adv_g", "loss_2d", "loss_3d", "loss_t", "mpjpe", "pck", "auc")


@dataclass
class LossWeights:
    w2d: float = 10.0
    w3d: float = 0.001
    wt: float = 1.0
    lam: float = 0.01

    def __post_init__(self):
        if min(self.w2d, self.w3d, self.wt, self.lam) < 0:
            raise ConfigInvalid("loss weights must be non-negative")


def parse_flags(text):
    """``"Adv+SS+TD"`` -> ``frozenset({"Adv", "SS", "TD"})``."""
    if isinstance(text, (set, frozenset, list, tuple)):
        parts = list(text)
    else:
        parts = [p.strip() for p in str(text).replace(",", "+").split("+") if p.strip()]
    bad = [p for p in parts if p not in FLAG_ORDER]
    if bad:
        raise ConfigInvalid(f"unknown flags {bad}; choose from {FLAG_ORDER}")
    return frozenset(parts)


def flags_name(flags):
    """Canonical ablation label, e.g. ``Adv+SS+DA+TD``."""
    return "+".join(f for f in FLAG_ORDER if f in flags)


@dataclass
class TrainingConfig:
    batch_size: int = 8192
    c: float = 10.0
    w2d: float = 10.0
    w3d: float = 0.001
    wt: float = 1.0
    lam: float = 0.01
    azimuth_range: tuple = (-math.pi, math.pi)
    elevation_range: tuple = (-math.pi / 9, math.pi / 9)
    epochs: int = 1
    seed: int = 0
    flags: frozenset = frozenset({"Adv", "SS"})
    M: int = 1
    width: int = 1024
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    beta1_g: float = 0.9
    beta1_d: float = 0.5
    steps_per_epoch: int = 0      # 0: one pass over the training poses
    eval_size: int = 2000
    renormalize_fake: bool = True
    dtype: str = "float32"
    checkpoint_every: int = 0
    out_dir: str = ""
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        self.flags = parse_flags(self.flags)

    @property
    def weights(self):
        return LossWeights(self.w2d, self.w3d, self.wt, self.lam)

    @property
    def name(self):
        return flags_name(self.flags)

    def validate(self):
        if self.batch_size < 2:
            raise ConfigInvalid("batch_size must be >= 2")
        if self.c <= 1:
            raise ConfigInvalid("c must exceed 1")
        if self.epochs < 0 or self.M < 1 or self.width < 1:
            raise ConfigInvalid("epochs >= 0, M >= 1 and width >= 1 required")
        if not self.flags:
            raise ConfigInvalid("at least one of Adv / SS must be enabled")
        if not self.flags & {"Adv", "SS"}:
            raise ConfigInvalid("training needs Adv or SS")
        if "TD" in self.flags and self.batch_size < 2 * (self.M + 1):
            raise ConfigInvalid("batch too small for temporal windows")
        if self.dtype not in ("float32", "float64"):
            raise ConfigInvalid("dtype must be float32 or float64")
        self.weights  # validates signs
        return self


_CONFIG_ALIASES = {"lambda": "lam", "batch": "batch_size"}


def _coerce(name, raw, default):
    if name == "flags":
        return parse_flags(raw)
    if name in ("azimuth_range", "elevation_range"):
        parts = [p.strip() for p in raw.strip("()[] ").split(",")]
        if len(parts) != 2:
            raise ConfigInvalid(f"{name} needs two comma-separated numbers")
        return tuple(_eval_number(p) for p in parts)
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigInvalid(f"{name}: not a boolean: {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigInvalid(f"{name}: not an integer: {raw!r}") from None
    if isinstance(default, float):
        return _eval_number(raw)
    return raw


def _eval_number(text):
    # accepts plain floats plus "pi" expressions such as -pi/9
    t = text.strip().replace(" ", "")
    try:
        return float(t)
    except ValueError:
        pass
    sign = -1.0 if t.startswith("-") else 1.0
    t = t.lstrip("+-")
    if t.startswith("pi"):
        rest = t[2:]
        if not rest:
            return sign * math.pi
        if rest.startswith("/"):
            return sign * math.pi / float(rest[1:])
        if rest.startswith("*"):
            return sign * math.pi * float(rest[1:])
    raise ConfigInvalid(f"not a number: {text!r}")


def parse_config_text(text, base=None):
    """Parse flat ``key = value`` lines; ``#`` starts a comment.

    Keys prefixed ``path.`` (or ending in ``_path``) land in ``paths``.
    """
    cfg = base if base is not None else TrainingConfig()
    known = {f.name: f for f in fields(TrainingConfig)}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _CONFIG_ALIASES.get(key, key)
        apply_override(cfg, key, value, known)
    return cfg


def apply_override(cfg, key, value, known=None):
    known = known or {f.name: f for f in fields(TrainingConfig)}
    key = _CONFIG_ALIASES.get(key, key)
    if key.startswith("path.") or key.endswith("_path"):
        cfg.paths[key.removeprefix("path.")] = value
        return cfg
    if key not in known or key == "paths":
        raise ConfigInvalid(f"unknown config key {key!r}")
    setattr(cfg, key, _coerce(key, value, getattr(cfg, key)))
    return cfg


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def config_to_text(cfg):
    lines = []
    for f in fields(TrainingConfig):
        v = getattr(cfg, f.name)
        if f.name == "paths":
            lines += [f"path.{k} = {p}" for k, p in sorted(v.items())]
            continue
        if f.name == "flags":
            v = flags_name(v)
        elif isinstance(v, tuple):
            v = ", ".join(repr(float(a)) for a in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------- losses

def _masked_mean(values, mask):
    if mask is None:
        return ag.mean(values)
    w = mask / max(float(mask.sum()), 1.0)
    return ag.sum_(values * w.astype(values.dtype))


def log_clamped(p):
    return ag.log(ag.clamp_min(p, LOG_EPS))


def gan_disc_loss(p_real, p_fake, mask_fake=None):
    """``-[E log D(real) + E log(1 - D(fake))]``."""
    return -(ag.mean(log_clamped(p_real)) + _masked_mean(log_clamped(1.0 - p_fake), mask_fake))


def gan_gen_loss(p_fake, mask=None):
    """Non-saturating generator loss ``-E log D(fake)``."""
    return -_masked_mean(log_clamped(p_fake), mask)


@dataclass
class ClosureBatch:
    x: Tensor
    X: Tensor
    R: np.ndarray
    root: Tensor
    Y: Tensor
    y: Tensor
    Y_tilde: Tensor = None
    X_tilde: Tensor = None
    x_tilde: Tensor = None
    mask: np.ndarray = None


def _as_lifter(lifter):
    if isinstance(lifter, mdl.Lifter):
        return lambda pose: lifter(mdl.flat(pose))
    return lifter


def sample_valid_rotations(rng, X, c, azimuth_range, elevation_range, group=1, schema=geo.SCHEMA):
    """Per-sample rotations keeping every rotated joint at depth >= 1.

    Offending samples are resampled up to ``MAX_RESAMPLES`` times; any still
    behind the plane are flagged in the returned mask (0 = skip). ``group``
    consecutive samples share one rotation.
    """
    n = len(X) // group
    root = geo.root_3d(X, schema)
    R = geo.rotation_matrix(*geo.sample_angles(rng, n, azimuth_range, elevation_range))

    def bad_of(R):
        Rg = np.repeat(R, group, axis=0)
        Y = np.einsum("bij,bkj->bki", Rg, X - root[:, None]) + np.array([0.0, 0.0, c])
        return (Y[..., 2] < 1.0).any(axis=-1).reshape(n, group).any(axis=1)

    bad = bad_of(R)
    for _ in range(MAX_RESAMPLES):
        if not bad.any():
            break
        idx = np.flatnonzero(bad)
        R[idx] = geo.rotation_matrix(*geo.sample_angles(rng, len(idx), azimuth_range, elevation_range))
        bad = bad_of(R)
    return np.repeat(R, group, axis=0), np.repeat(~bad, group).astype(float)


def closure_forward(lifter, x, R, c, second_pass=True, mask=None, schema=geo.SCHEMA):
    """Run ``x -> X -> Y -> y (-> Y~ -> X~ -> x~)`` for per-sample rotations ``R``.

    ``lifter`` is a :class:`Lifter` or any callable mapping a pose Tensor
    ``(B, N, 2)`` to depth offsets ``(B, N)``.
    """
    G = _as_lifter(lifter)
    x = ag.as_tensor(x)
    X = mdl.lift_t(x, G(x), c)
    root = mdl.root_t(X, schema)
    Y = mdl.rigid_t(X, R, root, c)
    y = mdl.project_t(Y, min_depth=1.0)
    batch = ClosureBatch(x=x, X=X, R=R, root=root, Y=Y, y=y, mask=mask)
    if second_pass:
        batch.Y_tilde = mdl.lift_t(y, G(y), c)
        batch.X_tilde = mdl.inverse_rigid_t(batch.Y_tilde, R, root, c)
        batch.x_tilde = mdl.project_t(batch.X_tilde, min_depth=1.0)
    return batch


def closure_losses(batch: ClosureBatch):
    """``(L3D, L2D)``: squared norm of the whole-pose difference, averaged over samples."""
    d3 = ag.sum_(ag.square(batch.Y - batch.Y_tilde), axis=(-2, -1))
    d2 = ag.sum_(ag.square(batch.x - batch.x_tilde), axis=(-2, -1))
    return _masked_mean(d3, batch.mask), _masked_mean(d2, batch.mask)


def adversarial_losses(D, real, fake, mask=None):
    """``(loss_D, loss_G)`` for a pose discriminator on real and fake 2D batches."""
    p_real = mdl.discriminate(D, real)
    p_fake = mdl.discriminate(D, fake)
    return gan_disc_loss(p_real, p_fake, mask), gan_gen_loss(p_fake, mask)


def temporal_windows_input(frames):
    """``(B, M+1, N, 2)`` windows -> (pose_t, diffs) with diffs ``pose_t - pose_{t+k}``."""
    frames = ag.as_tensor(frames)
    m1 = frames.shape[1]
    pose_t = frames[:, 0]
    diffs = [pose_t - frames[:, k] for k in range(1, m1)]
    diffs = ag.stack(diffs, axis=1)
    return pose_t, diffs


def temporal_losses(T, real_windows, fake_windows, mask=None):
    """``(loss_T_disc, loss_T_gen)`` on consecutive-frame windows ``(B, M+1, N, 2)``."""
    if real_windows is None or len(real_windows) == 0:
        raise SequenceRequired("temporal losses need consecutive-frame data")
    rp, rd = temporal_windows_input(real_windows)
    fp, fd = temporal_windows_input(fake_windows)
    p_real = mdl.temporal_discriminate(T, rp, rd)
    p_fake = mdl.temporal_discriminate(T, fp, fd)
    return gan_disc_loss(p_real, p_fake, mask), gan_gen_loss(p_fake, mask)


def domain_adaptation_losses(C, D_D, x_s, x_t, lam):
    """``(loss_DD, loss_C)`` for the 2D domain adapter."""
    corr = mdl.correction(C, x_s)
    x_s = ag.as_tensor(x_s, dtype=corr.dtype) if not isinstance(x_s, Tensor) else x_s
    # D_D sees the raw corrected pose: re-normalizing here would hide any change of
    # scale or root from it, leaving C free to replace the pose outright
    x_sc = x_s + corr
    p_t = mdl.discriminate(D_D, x_t)
    p_sc = mdl.discriminate(D_D, x_sc)
    reg = ag.mean(ag.sum_(ag.square(mdl.flat(corr)), axis=-1))
    return gan_disc_loss(p_t, p_sc), gan_gen_loss(p_sc) + reg * lam


def total_loss(parts, weights: LossWeights):
    """``L_adv + w2d L2D + w3d L3D + wt LT``; missing parts contribute zero."""
    total = 0.0
    for key, w in (("adv", 1.0), ("2d", weights.w2d), ("3d", weights.w3d), ("t", weights.wt)):
        value = parts.get(key)
        if value is not None:
            total = value * w + total if isinstance(value, Tensor) else total + w * value
    return total


def lifter_objective(G, x, R, cfg, D=None, T=None, group=1, mask=None, X=None):
    """The full lifter loss for one batch under fixed rotations ``R``.

    Returns ``(loss, parts, y_disc)`` where ``y_disc`` are the fake 2D poses
    shown to the discriminators. ``group`` consecutive rows form one
    temporal window sharing a rotation. ``X`` may carry an already computed
    first lift of ``x``.
    """
    f = cfg.flags
    x = ag.as_tensor(x)
    if X is None:
        X = mdl.lift_t(x, G(mdl.flat(x)), cfg.c)
    root = mdl.root_t(X)
    Y = mdl.rigid_t(X, R, root, cfg.c)
    y = mdl.project_t(Y, min_depth=1.0)
    parts = {}
    y_disc = mdl.normalize_t(y, cfg.c) if cfg.renormalize_fake else y
    if "Adv" in f:
        parts["adv"] = gan_gen_loss(mdl.discriminate(D, y_disc), mask)
    if "SS" in f:
        batch = ClosureBatch(x=x, X=X, R=R, root=root, Y=Y, y=y, mask=mask)
        batch.Y_tilde = mdl.lift_t(y, G(mdl.flat(y)), cfg.c)
        batch.X_tilde = mdl.inverse_rigid_t(batch.Y_tilde, R, root, cfg.c)
        batch.x_tilde = mdl.project_t(batch.X_tilde, min_depth=1.0)
        parts["3d"], parts["2d"] = closure_losses(batch)
    if "TD" in f:
        fp, fd = temporal_windows_input(y_disc.reshape(-1, group, geo.N_JOINTS, 2))
        wmask = None if mask is None else mask.reshape(-1, group)[:, 0]
        parts["t"] = gan_gen_loss(mdl.temporal_discriminate(T, fp, fd), wmask)
    return total_loss(parts, cfg.weights), parts, y_disc


# --------------------------------------------------------------------------- training

@dataclass
class TrainingData:
    poses: np.ndarray                 # (n, N, 2) normalized real 2D poses
    windows: np.ndarray = None        # (k, M+1, N, 2) consecutive frames, for TD
    adapted: np.ndarray = None        # (m, N, 2) domain-corrected source poses, for DA
    eval2d: np.ndarray = None
    eval3d: np.ndarray = None


@dataclass
class TrainResult:
    G: mdl.Lifter
    D: mdl.PoseDiscriminator = None
    T: mdl.TemporalDiscriminator = None
    log: list = field(default_factory=list)
    config: TrainingConfig = None


def _rngs(seed):
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(5)]


def check_data(config, data):
    if data is None or data.poses is None or len(data.poses) == 0:
        raise DataMissing("no training poses")
    if "TD" in config.flags and (data.windows is None or len(data.windows) == 0):
        raise ConfigInvalid("TD requires sequence data with consecutive frames")
    if "TD" in config.flags and data.windows.shape[1] != config.M + 1:
        raise ConfigInvalid(f"windows carry {data.windows.shape[1] - 1} differences, config M={config.M}")
    if "DA" in config.flags and (data.adapted is None or len(data.adapted) == 0):
        raise ConfigInvalid("DA requires domain-adapted source poses (run the adapter first)")


class Trainer:
    """Alternating lifter / discriminator optimization (one step each)."""

    def __init__(self, config: TrainingConfig, data: TrainingData):
        config.validate()
        check_data(config, data)
        self.cfg = config
        self.data = data
        self.dtype = np.dtype(config.dtype)
        init_rng, self.rng, self.rot_rng, self.eval_rng, _ = _rngs(config.seed)
        f = config.flags
        self.G = mdl.Lifter(init_rng, config.width, 4, config.c, self.dtype)
        self.D = mdl.PoseDiscriminator(init_rng, config.width, 3, self.dtype) if "Adv" in f else None
        self.T = (mdl.TemporalDiscriminator(init_rng, config.M, config.width, 3, self.dtype)
                  if "TD" in f else None)
        self.opt_g = Adam(self.G.parameters(), config.lr_g, config.beta1_g)
        self.opt_d = Adam(self.D.parameters(), config.lr_d, config.beta1_d) if self.D else None
        self.opt_t = Adam(self.T.parameters(), config.lr_d, config.beta1_d) if self.T else None

        pool = data.poses
        if "DA" in f:
            pool = np.concatenate([pool, data.adapted])
        self.pool = pool.astype(self.dtype)
        self.windows = data.windows.astype(self.dtype) if "TD" in f else None
        self.log = []
        self.step_count = 0

    # one optimization step ------------------------------------------------------
    def _sample_inputs(self, B):
        cfg, rng = self.cfg, self.rng
        if self.T is not None:
            nw = B // (cfg.M + 1)
            win = self.windows[rng.integers(0, len(self.windows), nw)]
            return win.reshape(-1, geo.N_JOINTS, 2), cfg.M + 1
        return self.pool[rng.integers(0, len(self.pool), B)], 1

    def step(self):
        cfg = self.cfg
        B = cfg.batch_size
        x_np, group = self._sample_inputs(B)
        x = Tensor(x_np)
        G = self.G
        G.train()
        for net in (self.D, self.T):
            if net is not None:
                net.requires_grad_(False)

        X = mdl.lift_t(x, G(mdl.flat(x)), cfg.c)
        R, mask = sample_valid_rotations(self.rot_rng, X.data.astype(float), cfg.c,
                                         cfg.azimuth_range, cfg.elevation_range, group)
        full_mask = None if mask.all() else mask
        wmask = mask.reshape(-1, group)[:, 0]
        loss, parts, y_disc = lifter_objective(G, x, R.astype(self.dtype), cfg, self.D, self.T,
                                               group, full_mask, X=X)
        logged = {}
        self.opt_g.zero_grad()
        ag.backward(loss)
        self.opt_g.step()
        for k, v in parts.items():
            logged[{"adv": "loss_adv_g", "2d": "loss_2d", "3d": "loss_3d", "t": "loss_t"}[k]] = float(v.data)
        logged["total"] = float(loss.data)

        fake = Tensor(y_disc.data)
        if self.D is not None:
            self.D.requires_grad_(True)
            real = self.pool[self.rng.integers(0, len(self.pool), B)]
            loss_d = gan_disc_loss(mdl.discriminate(self.D, real), mdl.discriminate(self.D, fake), full_mask)
            self.opt_d.zero_grad()
            ag.backward(loss_d)
            self.opt_d.step()
            logged["loss_adv_d"] = float(loss_d.data)
        if self.T is not None:
            self.T.requires_grad_(True)
            real_w = self.windows[self.rng.integers(0, len(self.windows), len(fake.data) // group)]
            fake_w = fake.reshape(-1, group, geo.N_JOINTS, 2)
            loss_t, _ = temporal_losses(self.T, real_w, fake_w, None if wmask.all() else wmask)
            self.opt_t.zero_grad()
            ag.backward(loss_t)
            self.opt_t.step()
            logged["loss_t_disc"] = float(loss_t.data)

        if not all(math.isfinite(v) for v in logged.values()):
            raise NumericFailure(f"non-finite loss at step {self.step_count}: {logged}")
        self.step_count += 1
        return logged

    # epochs ----------------------------------------------------------------------
    def steps_per_epoch(self):
        if self.cfg.steps_per_epoch:
            return self.cfg.steps_per_epoch
        return max(1, len(self.pool) // self.cfg.batch_size)

    def evaluate(self):
        d = self.data
        if d.eval2d is None or d.eval3d is None:
            return {}
        n = min(len(d.eval2d), self.cfg.eval_size) if self.cfg.eval_size else len(d.eval2d)
        pred = mdl.lift_numpy(self.G, d.eval2d[:n])
        out = ev.evaluate_poses(pred, d.eval3d[:n])
        # same viewpoints every epoch so the diagnostic is comparable over training
        rng = np.random.default_rng([self.cfg.seed, 1])
        out["viewpoint"] = viewpoint_invariance(self.G, d.eval3d[:n], rng, self.cfg.c,
                                                self.cfg.azimuth_range, self.cfg.elevation_range)
        return out

    def run_epoch(self, epoch):
        sums, counts = {}, {}
        for _ in range(self.steps_per_epoch()):
            for k, v in self.step().items():
                sums[k] = sums.get(k, 0.0) + v
                counts[k] = counts.get(k, 0) + 1
        means = {k: sums[k] / counts[k] for k in sums}
        # bookkeeping: the logged components must reproduce the optimized total
        recomputed = total_loss({"adv": means.get("loss_adv_g"), "2d": means.get("loss_2d"),
                                 "3d": means.get("loss_3d"), "t": means.get("loss_t")}, self.cfg.weights)
        if not math.isclose(recomputed, means["total"], rel_tol=1e-6, abs_tol=1e-9):
            raise NumericFailure(f"loss bookkeeping mismatch: {recomputed} != {means['total']}")
        row = {"epoch": epoch}
        row.update({k: means[k] for k in METRIC_COLUMNS if k in means})
        row["total"] = means["total"]
        row.update(self.evaluate())
        self.log.append(row)
        log.info("epoch %d %s", epoch, {k: round(v, 5) for k, v in row.items() if k != "epoch"})
        return row

    def fit(self, checkpoint_cb=None):
        for epoch in range(1, self.cfg.epochs + 1):
            self.run_epoch(epoch)
            if checkpoint_cb and self.cfg.checkpoint_every and epoch % self.cfg.checkpoint_every == 0:
                checkpoint_cb(self, epoch)
        self.G.eval()
        return TrainResult(self.G, self.D, self.T, self.log, self.cfg)


def viewpoint_invariance(G, poses3d, rng, c=10.0, azimuth_range=(-math.pi, math.pi),
                         elevation_range=(-math.pi / 9, math.pi / 9)):
    """Aligned MPJPE (mm) between lifts of the same skeletons seen from two random viewpoints."""
    X = np.asarray(poses3d, dtype=float)
    root = geo.root_3d(X)
    lifts = []
    for _ in range(2):
        Q = geo.sample_rotation(rng, azimuth_range, elevation_range, root, c, n=len(X))
        x, _, _ = geo.normalize_pose2d(geo.project(geo.apply_rigid(X, Q, check=False)), c=c)
        lifts.append(mdl.lift_numpy(G, x))
    return ev.mpjpe(ev.align_batch(lifts[0], lifts[1]), lifts[1], ev.MM_PER_UNIT)


def train(config: TrainingConfig, data: TrainingData, checkpoint_cb=None) -> TrainResult:
    return Trainer(config, data).fit(checkpoint_cb)


def write_metrics_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for row in rows:
            w.writerow(["" if row.get(k) is None else repr(row[k]) if k != "epoch" else row[k]
                        for k in METRIC_COLUMNS])


def read_metrics_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "epoch" else float(v)) for k, v in r.items() if v != ""} for r in rows]


# ---------------------------------------------------------------- domain adapter

@dataclass
class AdapterResult:
    C: mdl.DomainAdapter
    D_D: mdl.DomainDiscriminator
    log: list


def train_adapter(source, target, lam=0.01, steps=500, batch_size=512, width=256, seed=0,
                  c=10.0, lr=2e-4, dtype="float32"):
    """Fit the 2D domain adapter C and its discriminator D_D on unpaired pose sets."""
    if len(source) == 0 or len(target) == 0:
        raise DataMissing("adapter training needs non-empty source and target sets")
    if batch_size < 2:
        raise ConfigInvalid("batch_size must be >= 2")
    init_rng, rng, *_ = _rngs(seed)
    dt = np.dtype(dtype)
    C = mdl.DomainAdapter(init_rng, width, 4, c, dt)
    # start from the identity map so the correction grows only as the discriminator demands
    C.net.output.W.data *= 0.0
    D_D = mdl.DomainDiscriminator(init_rng, width, 3, dt)
    opt_c = Adam(C.parameters(), lr, 0.9)
    opt_d = Adam(D_D.parameters(), lr, 0.5)
    source = np.asarray(source, dtype=dt)
    target = np.asarray(target, dtype=dt)
    history = []
    for step in range(steps):
        xs = source[rng.integers(0, len(source), batch_size)]
        xt = target[rng.integers(0, len(target), batch_size)]
        C.train()
        D_D.requires_grad_(False)
        _, loss_c = domain_adaptation_losses(C, D_D, xs, xt, lam)
        opt_c.zero_grad()
        ag.backward(loss_c)
        opt_c.step()
        D_D.requires_grad_(True)
        x_sc = Tensor(mdl.adapt(C, xs, renormalize=False).data)
        loss_dd = gan_disc_loss(mdl.discriminate(D_D, xt), mdl.discriminate(D_D, x_sc))
        opt_d.zero_grad()
        ag.backward(loss_dd)
        opt_d.step()
        history.append({"step": step, "loss_dd": float(loss_dd.data), "loss_c": float(loss_c.data)})
    C.eval()
    return AdapterResult(C, D_D, history)


# ----------------------------------------------------------- supervised fine-tuning

def finetune_supervised(G: mdl.Lifter, x, X_gt, steps=200, batch_size=512, lr=1e-4, seed=0):
    """Minimize ``mean ||lift(G, x) - X_gt||^2`` on paired poses.

    ``X_gt`` must already follow the lifter's convention (camera frame,
    consistent with the normalized 2D input).
    """
    x = np.asarray(x)
    X_gt = np.asarray(X_gt)
    if len(x) != len(X_gt):
        raise PairMismatch(f"{len(x)} 2D poses vs {len(X_gt)} 3D poses")
    if len(x) == 0 or steps == 0:
        return G
    dtype = G.net.output.W.dtype
    rng = np.random.default_rng(seed)
    opt = Adam(G.parameters(), lr, 0.9)
    bs = min(batch_size, len(x))
    if bs < 2:
        raise ConfigInvalid("fine-tuning needs at least 2 pairs for batch normalization")
    G.train()
    for _ in range(steps):
        idx = rng.choice(len(x), bs, replace=False) if bs < len(x) else rng.permutation(len(x))
        pred = mdl.lift(G, x[idx].astype(dtype))
        loss = ag.mean(ag.sum_(ag.square(pred - X_gt[idx].astype(dtype)), axis=-1))
        opt.zero_grad()
        ag.backward(loss)
        opt.step()
    G.eval()
    return G
