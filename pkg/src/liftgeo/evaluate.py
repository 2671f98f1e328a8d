"""Similarity-aligned MPJPE, PCK/AUC and limb-ratio statistics."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .errors import DegenerateTarget, EmptySet, ZeroLimb

# synthetic skeletons have head-to-root length 1 unit
MM_PER_UNIT = 500.0


@dataclass
class AlignmentResult:
    scale: float
    R: np.ndarray
    t: np.ndarray
    aligned: np.ndarray
    residual: np.ndarray  # per-joint Euclidean distance after alignment


def _umeyama(pred, gt):
    """Batched least-squares similarity ``s R pred + t ~ gt`` without reflections."""
    mu_p = pred.mean(axis=-2, keepdims=True)
    mu_g = gt.mean(axis=-2, keepdims=True)
    P = pred - mu_p
    G = gt - mu_g
    H = np.swapaxes(P, -1, -2) @ G
    U, S, Vt = np.linalg.svd(H)
    sign = np.sign(np.linalg.det(np.swapaxes(Vt, -1, -2) @ np.swapaxes(U, -1, -2)))
    sign = np.where(sign == 0, 1.0, sign)
    D = np.ones(S.shape)
    D[..., -1] = sign
    R = np.swapaxes(Vt, -1, -2) @ (D[..., :, None] * np.swapaxes(U, -1, -2))
    var_p = np.sum(P * P, axis=(-1, -2))
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(var_p > 0, np.sum(S * D, axis=-1) / var_p, 0.0)
    aligned = s[..., None, None] * (P @ np.swapaxes(R, -1, -2)) + mu_g
    t = mu_g[..., 0, :] - s[..., None] * np.einsum("...ij,...j->...i", R, mu_p[..., 0, :])
    return s, R, t, aligned


def procrustes_align(pred, gt) -> AlignmentResult:
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape or pred.shape[-1] != 3:
        raise ValueError(f"pose shapes differ or are not 3D: {pred.shape} vs {gt.shape}")
    spread = np.sum((gt - gt.mean(axis=-2, keepdims=True)) ** 2, axis=(-1, -2))
    if np.any(spread < 1e-18):
        raise DegenerateTarget("ground-truth joints all coincide")
    s, R, t, aligned = _umeyama(pred, gt)
    return AlignmentResult(s, R, t, aligned, np.linalg.norm(aligned - gt, axis=-1))


def align_batch(preds, gts):
    return procrustes_align(preds, gts).aligned


def joint_errors(aligned, gt):
    return np.linalg.norm(np.asarray(aligned) - np.asarray(gt), axis=-1)


def mpjpe(aligned, gt, unit_scale=1.0):
    """Mean Euclidean joint error, times ``unit_scale`` (mm per unit)."""
    return float(np.mean(joint_errors(aligned, gt)) * unit_scale)


def pck_auc(aligned, gts, threshold_mm=150.0, auc_range=(0.0, 150.0), steps=31, unit_scale=1.0):
    """PCK at ``threshold_mm`` and the mean PCK over an evenly spaced threshold sweep.

    A joint counts as correct when its error is at most the threshold.
    Both values are percentages.
    """
    errors = joint_errors(aligned, gts) * unit_scale
    if errors.size == 0:
        raise EmptySet("no joints to evaluate")
    pck = 100.0 * np.mean(errors <= threshold_mm)
    thresholds = np.linspace(auc_range[0], auc_range[1], steps)
    auc = float(np.mean([100.0 * np.mean(errors <= th) for th in thresholds]))
    return float(pck), auc


def evaluate_poses(preds, gts, unit_scale=MM_PER_UNIT, threshold_mm=150.0):
    """Align every prediction to its ground truth, then report MPJPE / PCK / AUC."""
    aligned = align_batch(preds, gts)
    pck, auc = pck_auc(aligned, gts, threshold_mm=threshold_mm, unit_scale=unit_scale)
    return {"mpjpe": mpjpe(aligned, gts, unit_scale), "pck": pck, "auc": auc}


@dataclass
class RatioHistogram:
    ratios: dict      # limb name -> (n,) upper/lower length ratios
    edges: np.ndarray
    counts: dict      # limb name -> (len(edges) - 1,) counts
    mean: dict
    var: dict

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["limb", "bin_left", "bin_right", "count"])
            for limb, counts in self.counts.items():
                for lo, hi, n in zip(self.edges[:-1], self.edges[1:], counts):
                    w.writerow([limb, repr(float(lo)), repr(float(hi)), int(n)])


def limb_ratios(poses3d, schema=geo.SCHEMA):
    poses3d = np.asarray(poses3d, dtype=float)
    out = {}
    for name, a, b, c in schema.limb_pairs:
        upper = np.linalg.norm(poses3d[..., a, :] - poses3d[..., b, :], axis=-1)
        lower = np.linalg.norm(poses3d[..., b, :] - poses3d[..., c, :], axis=-1)
        if np.any(lower < 1e-12):
            raise ZeroLimb(f"{name}: lower segment has zero length")
        out[name] = upper / lower
    return out


def limb_ratio_histogram(poses3d, schema=geo.SCHEMA, edges=None) -> RatioHistogram:
    ratios = limb_ratios(poses3d, schema)
    edges = np.linspace(0.0, 3.0, 61) if edges is None else np.asarray(edges, dtype=float)
    counts = {}
    for name, r in ratios.items():
        # out-of-range ratios land in the end bins so counts always sum to n
        clipped = np.clip(r, edges[0], edges[-1])
        counts[name], _ = np.histogram(clipped, bins=edges)
    return RatioHistogram(
        ratios=ratios, edges=edges, counts=counts,
        mean={k: float(np.mean(v)) for k, v in ratios.items()},
        var={k: float(np.var(v)) for k, v in ratios.items()},
    )


def planar_lift(poses2d, c=10.0):
    """Constant-depth baseline: every joint on the plane z = c."""
    poses2d = np.asarray(poses2d, dtype=float)
    return geo.lift_with_depths(poses2d, np.zeros(poses2d.shape[:-1]), c)
