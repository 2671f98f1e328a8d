import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from liftgeo import evaluate as ev
from liftgeo import geometry as geo
from liftgeo import models as mdl
from liftgeo.errors import DegenerateTarget, EmptySet, ZeroLimb


def _random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def _brute_mpjpe(pred, gt, unit):
    total, count = 0.0, 0
    for p, g in zip(pred.reshape(-1, 3), gt.reshape(-1, 3)):
        total += np.sqrt(sum((a - b) ** 2 for a, b in zip(p, g)))
        count += 1
    return total / count * unit


def _brute_pck(errors_mm, th):
    hits = sum(1 for e in errors_mm.ravel() if e <= th)
    return 100.0 * hits / errors_mm.size


# --------------------------------------------------------------- procrustes

def test_align_identity(rng):
    gt = rng.normal(size=(14, 3))
    res = ev.procrustes_align(gt, gt)
    assert res.scale == pytest.approx(1.0)
    np.testing.assert_allclose(res.R, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(res.t, 0.0, atol=1e-12)
    assert ev.mpjpe(res.aligned, gt) == pytest.approx(0.0, abs=1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
def test_align_recovers_similarity(seed, s):
    rng = np.random.default_rng(seed)
    gt = rng.normal(size=(14, 3))
    R = _random_rotation(rng)
    t = rng.normal(size=3) * 10
    pred = s * gt @ R.T + t
    res = ev.procrustes_align(pred, gt)
    assert np.max(res.residual) <= 1e-9
    assert res.scale == pytest.approx(1 / s, rel=1e-9)
    np.testing.assert_allclose(res.R @ R, np.eye(3), atol=1e-9)
    # the returned transform reproduces the aligned pose
    np.testing.assert_allclose(res.scale * pred @ res.R.T + res.t, res.aligned, atol=1e-9)


def test_align_rejects_reflection(rng):
    gt = rng.normal(size=(14, 3))
    mirror = gt * np.array([-1.0, 1.0, 1.0])
    res = ev.procrustes_align(mirror, gt)
    assert np.linalg.det(res.R) == pytest.approx(1.0, abs=1e-12)
    assert np.max(res.residual) > 1e-3
    np.testing.assert_allclose(res.R.T @ res.R, np.eye(3), atol=1e-12)


def test_align_batched_matches_single(rng):
    pred = rng.normal(size=(6, 14, 3))
    gt = rng.normal(size=(6, 14, 3))
    batch = ev.align_batch(pred, gt)
    for i in range(6):
        np.testing.assert_allclose(batch[i], ev.procrustes_align(pred[i], gt[i]).aligned, atol=1e-12)


def test_align_degenerate(rng):
    with pytest.raises(DegenerateTarget):
        ev.procrustes_align(rng.normal(size=(14, 3)), np.ones((14, 3)))
    with pytest.raises(ValueError):
        ev.procrustes_align(np.ones((14, 3)), np.ones((13, 3)))


def test_align_is_least_squares(rng):
    # no random similarity does better than the closed form
    gt = rng.normal(size=(14, 3))
    pred = gt + rng.normal(scale=0.3, size=gt.shape)
    best = np.sum(ev.procrustes_align(pred, gt).residual ** 2)
    for _ in range(200):
        R = _random_rotation(rng) if rng.random() < 0.5 else np.eye(3)
        R = R if rng.random() < 0.5 else _small_perturb(rng, ev.procrustes_align(pred, gt).R)
        s = rng.uniform(0.5, 1.5)
        mu = pred.mean(0)
        cand = s * (pred - mu) @ R.T + gt.mean(0)
        assert np.sum((cand - gt) ** 2) >= best - 1e-12


def _small_perturb(rng, R):
    w = rng.normal(scale=0.05, size=3)
    K = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
    Q, _ = np.linalg.qr(np.eye(3) + K)
    return (Q * np.sign(np.diag(np.linalg.qr(np.eye(3) + K)[1]))) @ R


# -------------------------------------------------------------------- mpjpe

def test_mpjpe_examples(rng):
    gt = rng.normal(size=(14, 3))
    assert ev.mpjpe(gt, gt) == 0.0
    pred = gt.copy()
    pred[3, 1] += 0.01
    assert ev.mpjpe(pred, gt, unit_scale=1000) == pytest.approx(0.01 * 1000 / 14, abs=1e-12)
    assert ev.mpjpe(pred, gt, 1000) == pytest.approx(0.714, abs=1e-3)


@given(st.integers(0, 2**32 - 1))
def test_mpjpe_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    gt = rng.normal(size=(5, 14, 3))
    pred = gt + rng.normal(scale=0.1, size=gt.shape)
    assert abs(ev.mpjpe(pred, gt, 500.0) - _brute_mpjpe(pred, gt, 500.0)) <= 1e-12 * 500


@given(st.integers(0, 2**32 - 1))
def test_mpjpe_rigid_invariance(seed):
    rng = np.random.default_rng(seed)
    gt = rng.normal(size=(14, 3))
    pred = gt + rng.normal(scale=0.1, size=gt.shape)
    R, t = _random_rotation(rng), rng.normal(size=3)
    a = ev.mpjpe(pred, gt)
    b = ev.mpjpe(pred @ R.T + t, gt @ R.T + t)
    assert a >= 0 and b == pytest.approx(a, rel=1e-12)


# ---------------------------------------------------------------- pck / auc

def test_pck_all_zero_errors(rng):
    gt = rng.normal(size=(3, 14, 3))
    assert ev.pck_auc(gt, gt) == (100.0, 100.0)


def test_pck_twice_threshold(rng):
    gt = rng.normal(size=(2, 14, 3))
    pred = gt + np.array([300.0, 0.0, 0.0])
    pck, auc = ev.pck_auc(pred, gt, threshold_mm=150.0)
    assert pck == 0.0 and auc == 0.0


@given(st.integers(0, 2**32 - 1), st.floats(10, 300))
def test_pck_auc_brute_force(seed, th):
    rng = np.random.default_rng(seed)
    gt = rng.normal(size=(4, 14, 3))
    pred = gt + rng.normal(scale=0.2, size=gt.shape)
    errors = np.linalg.norm(pred - gt, axis=-1) * 500
    pck, auc = ev.pck_auc(pred, gt, threshold_mm=th, unit_scale=500)
    assert abs(pck - _brute_pck(errors, th)) <= 1e-12
    sweep = [_brute_pck(errors, 150.0 * k / 30) for k in range(31)]
    assert abs(auc - sum(sweep) / 31) <= 1e-12
    assert auc <= ev.pck_auc(pred, gt, threshold_mm=150.0, unit_scale=500)[0] + 1e-12


@given(st.integers(0, 2**32 - 1))
def test_pck_monotone(seed):
    rng = np.random.default_rng(seed)
    gt = rng.normal(size=(3, 14, 3))
    pred = gt + rng.normal(scale=0.2, size=gt.shape)
    values = [ev.pck_auc(pred, gt, threshold_mm=t, unit_scale=500)[0] for t in np.linspace(0, 400, 30)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_pck_empty():
    with pytest.raises(EmptySet):
        ev.pck_auc(np.zeros((0, 14, 3)), np.zeros((0, 14, 3)))


def test_evaluate_poses_keys(rng):
    gt = rng.normal(size=(3, 14, 3))
    out = ev.evaluate_poses(gt * 2 + 1, gt)
    assert set(out) == {"mpjpe", "pck", "auc"}
    assert out["mpjpe"] == pytest.approx(0.0, abs=1e-9) and out["pck"] == 100.0


# -------------------------------------------------------------- limb ratios

def _template_like(n, upper_leg=0.45, lower_leg=0.45, rng=None):
    X = np.zeros((n, 14, 3))
    X[:, geo.L_HIP] = [0.1, 0, 10]
    X[:, geo.R_HIP] = [-0.1, 0, 10]
    X[:, geo.L_KNEE] = X[:, geo.L_HIP] + [0, -upper_leg, 0]
    X[:, geo.R_KNEE] = X[:, geo.R_HIP] + [0, -upper_leg, 0]
    X[:, geo.L_ANKLE] = X[:, geo.L_KNEE] + [0, -lower_leg, 0]
    X[:, geo.R_ANKLE] = X[:, geo.R_KNEE] + [0, -lower_leg, 0]
    for sh, el, wr, sx in ((geo.L_SHOULDER, geo.L_ELBOW, geo.L_WRIST, 0.2),
                           (geo.R_SHOULDER, geo.R_ELBOW, geo.R_WRIST, -0.2)):
        X[:, sh] = [sx, 0.75, 10]
        X[:, el] = X[:, sh] + [0, -0.30, 0]
        X[:, wr] = X[:, el] + [0, -0.27, 0]
    X[:, geo.HEAD] = [0, 1.0, 10]
    X[:, geo.NECK] = [0, 0.75, 10]
    return X


def test_limb_ratio_point_mass():
    h = ev.limb_ratio_histogram(_template_like(50))
    for limb in ("leg_left", "leg_right"):
        assert h.mean[limb] == pytest.approx(1.0) and h.var[limb] == pytest.approx(0.0, abs=1e-20)
        assert h.counts[limb].sum() == 50 and np.count_nonzero(h.counts[limb]) == 1
        k = np.flatnonzero(h.counts[limb])[0]
        assert h.edges[k] <= 1.0 < h.edges[k + 1]
    assert h.mean["arm_left"] == pytest.approx(0.30 / 0.27)


def test_limb_ratio_counts_sum_with_outliers(rng):
    X = _template_like(20) + rng.normal(scale=0.2, size=(20, 14, 3))
    X[0, geo.L_ANKLE] = X[0, geo.L_KNEE] + [0, -1e-4, 0]  # ratio far beyond the last edge
    h = ev.limb_ratio_histogram(X)
    for limb, counts in h.counts.items():
        assert counts.sum() == 20 and h.var[limb] >= 0


def test_limb_ratio_zero_limb():
    X = _template_like(3)
    X[1, geo.R_ANKLE] = X[1, geo.R_KNEE]
    with pytest.raises(ZeroLimb):
        ev.limb_ratio_histogram(X)


def test_histogram_csv(tmp_path):
    h = ev.limb_ratio_histogram(_template_like(4))
    h.to_csv(tmp_path / "h.csv")
    with open(tmp_path / "h.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["limb", "bin_left", "bin_right", "count"]
    assert len(rows) == 1 + 4 * 60
    assert sum(int(r[3]) for r in rows[1:] if r[0] == "leg_left") == 4


def test_planar_lift(rng):
    x = geo.normalize_pose2d(rng.normal(size=(3, 14, 2)))[0]
    X = ev.planar_lift(x)
    np.testing.assert_array_equal(X[..., 2], 10.0)
    np.testing.assert_allclose(geo.project(X), x, atol=1e-15)


@pytest.mark.slow
def test_leg_ratio_symmetry_needs_adversary(benchmark):
    x = benchmark.test.poses2d
    gap = {}
    for flags in ("SS", "Adv+SS"):
        h = ev.limb_ratio_histogram(mdl.lift_numpy(benchmark.runs[flags].result.G, x))
        gap[flags] = abs(h.mean["leg_left"] - h.mean["leg_right"])
    assert gap["SS"] > 0.05 and gap["Adv+SS"] < 0.02
