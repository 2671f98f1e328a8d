"""Command-line surface: ``liftgeo {synth,adapt,train,lift,eval,report}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import data
from . import evaluate as ev
from . import geometry as geo
from . import models as mdl
from . import training as tr
from .errors import (CheckpointMismatch, ConfigInvalid, DataMissing, DegeneratePose,
                     DegenerateTarget, EmptySet, IdMismatch, NumericFailure, ParseError, ZeroLimb)

log = logging.getLogger("liftgeo")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

_DATA_ERRORS = (DataMissing, ParseError, CheckpointMismatch, IdMismatch, DegeneratePose,
                DegenerateTarget, EmptySet, ZeroLimb, OSError)


def _threads():
    raw = os.environ.get("LIFTGEO_THREADS")
    if not raw:
        return contextlib.nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise ConfigInvalid(f"LIFTGEO_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigInvalid("LIFTGEO_THREADS must be >= 1")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _write_manifest(out_dir, payload):
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _build_config(args):
    """Config file first, then ``--set`` overrides, then dedicated flags."""
    cfg = tr.load_config(args.config) if args.config else tr.TrainingConfig()
    for item in args.set or ():
        if "=" not in item:
            raise ConfigInvalid(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        tr.apply_override(cfg, key.strip(), value.strip())
    for key in ("flags", "epochs", "seed", "batch_size", "width", "lam", "M", "steps_per_epoch"):
        value = getattr(args, key, None)
        if value is not None:
            tr.apply_override(cfg, key, str(value))
    return cfg.validate()


def _load_normalized(path, c, min_confidence=0.0):
    records = data.filter_complete(data.load_poses(path, dim=2), min_confidence)
    if not records:
        return records, np.zeros((0, geo.N_JOINTS, 2))
    poses, _, _ = geo.normalize_pose2d(data.records_to_array(records), c=c)
    for r, p in zip(records, poses):
        r.joints = p
    return records, poses


# ---------------------------------------------------------------------- subcommands

def cmd_synth(args):
    cfg = data.SyntheticSkeletonConfig(
        n_samples=args.count, seed=args.seed, c=args.c, sequence_mode=args.sequences,
        frames_per_sequence=args.frames_per_sequence, length_jitter=args.length_jitter)
    ds = data.synth_generate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data.save_poses(out / "poses2d.csv", ds.records2d())
    records3d = ds.records3d()
    if not records3d:
        with open(out / "poses3d.csv", "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerow(data.pose_header(3))
    else:
        data.save_poses(out / "poses3d.csv", records3d)
    _write_manifest(out, {
        "command": "synth", "seed": args.seed, "count": len(ds), "c": args.c,
        "sequence_mode": args.sequences, "frames_per_sequence": args.frames_per_sequence,
        "length_jitter": args.length_jitter, "files": ["poses2d.csv", "poses3d.csv"]})
    print(f"wrote {len(ds)} poses to {out}")
    return EXIT_OK


def cmd_adapt(args):
    cfg = _build_config(args)
    src_records, source = _load_normalized(args.source, cfg.c)
    _, target = _load_normalized(args.target, cfg.c)
    if len(source) == 0 or len(target) == 0:
        raise DataMissing("source and target pose files must both contain poses")
    res = tr.train_adapter(source, target, lam=cfg.lam, steps=args.steps,
                           batch_size=min(cfg.batch_size, len(source), len(target)),
                           width=cfg.width, seed=cfg.seed, c=cfg.c, lr=cfg.lr_g, dtype=cfg.dtype)
    adapted = mdl.adapt_numpy(res.C, source)
    if not np.all(np.isfinite(adapted)):
        raise NumericFailure("adapter produced non-finite poses")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mdl.save_model(out / "adapter.lgn", res.C)
    data.save_poses(out / "adapted.csv", data.records_from_array(
        adapted, [r.seq_id for r in src_records], [r.frame_idx for r in src_records]))
    corr = np.mean(np.sum((adapted - source) ** 2, axis=(-1, -2)))
    _write_manifest(out, {
        "command": "adapt", "seed": cfg.seed, "lam": cfg.lam, "steps": args.steps,
        "width": cfg.width, "source": str(args.source), "target": str(args.target),
        "mean_correction_sq": float(corr), "final_loss_dd": res.log[-1]["loss_dd"] if res.log else None,
        "files": ["adapter.lgn", "adapted.csv"]})
    print(f"adapter trained for {args.steps} steps; mean squared correction {corr:.6g}")
    return EXIT_OK


def cmd_train(args):
    cfg = _build_config(args)
    paths = dict(cfg.paths)
    for key in ("poses", "sequences", "adapted", "eval2d", "eval3d"):
        value = getattr(args, key, None)
        if value:
            paths[key] = value
    # flag/data consistency is checked before any file is read
    if "TD" in cfg.flags and not paths.get("sequences"):
        raise ConfigInvalid("flags include TD but no --sequences file was given")
    if "DA" in cfg.flags and not paths.get("adapted"):
        raise ConfigInvalid("flags include DA but no --adapted file was given")
    if not paths.get("poses"):
        raise ConfigInvalid("no training poses given (--poses or path.poses)")
    _, poses = _load_normalized(paths["poses"], cfg.c, args.min_confidence)
    td = tr.TrainingData(poses)
    if "TD" in cfg.flags:
        seq_records, _ = _load_normalized(paths["sequences"], cfg.c, args.min_confidence)
        td.windows = data.temporal_windows(seq_records, cfg.M)
    if "DA" in cfg.flags:
        td.adapted = data.records_to_array(data.load_poses(paths["adapted"], dim=2))
    if paths.get("eval2d") and paths.get("eval3d"):
        ev_records, td.eval2d = _load_normalized(paths["eval2d"], cfg.c)
        gt_records = data.load_poses(paths["eval3d"], dim=3)
        _check_ids(ev_records, gt_records)
        td.eval3d = data.records_to_array(gt_records)
    tr.check_data(cfg, td)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.out_dir = str(out)

    def checkpoint_cb(trainer, epoch):
        mdl.save_model(out / f"lifter_epoch{epoch}.lgn", trainer.G)

    res = tr.train(cfg, td, checkpoint_cb)
    mdl.save_model(out / "lifter.lgn", res.G)
    tr.write_metrics_csv(out / "metrics.csv", res.log)
    (out / "config.txt").write_text(tr.config_to_text(cfg), encoding="utf-8")
    _write_manifest(out, {
        "command": "train", "name": cfg.name, "seed": cfg.seed, "epochs": cfg.epochs,
        "n_poses": int(len(poses)), "config": tr.config_to_text(cfg).splitlines(),
        "files": ["lifter.lgn", "metrics.csv", "config.txt"]})
    last = res.log[-1] if res.log else {}
    summary = ", ".join(f"{k}={last[k]:.4g}" for k in ("mpjpe", "pck", "auc") if k in last)
    print(f"{cfg.name}: trained {cfg.epochs} epochs{'; ' + summary if summary else ''}")
    return EXIT_OK


def cmd_lift(args):
    G = mdl.load_model(args.checkpoint, expect="lifter")
    records, poses = _load_normalized(args.poses, G.c)
    pred = mdl.lift_numpy(G, poses) if len(poses) else np.zeros((0, geo.N_JOINTS, 3))
    if not np.all(np.isfinite(pred)):
        raise NumericFailure("lifter produced non-finite joints")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if records:
        data.save_poses(out, data.records_from_array(
            pred, [r.seq_id for r in records], [r.frame_idx for r in records]))
    else:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerow(data.pose_header(3))
    print(f"lifted {len(pred)} poses to {out}")
    return EXIT_OK


def _check_ids(a, b):
    ids_a = [(r.seq_id, r.frame_idx) for r in a]
    ids_b = [(r.seq_id, r.frame_idx) for r in b]
    if len(ids_a) != len(ids_b):
        raise IdMismatch(f"row counts differ: {len(ids_a)} vs {len(ids_b)}")
    for i, (p, q) in enumerate(zip(ids_a, ids_b)):
        if p != q:
            raise IdMismatch(f"row {i + 1}: id {p} does not match {q}")


def cmd_eval(args):
    pred_records = data.load_poses(args.pred, dim=3)
    gt_records = data.load_poses(args.gt, dim=3)
    _check_ids(pred_records, gt_records)
    if not pred_records:
        raise EmptySet("no poses to evaluate")
    pred = data.records_to_array(pred_records)
    gt = data.records_to_array(gt_records)
    metrics = ev.evaluate_poses(pred, gt, unit_scale=args.mm_per_unit, threshold_mm=args.pck_threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mpjpe", "pck", "auc", "n_poses"])
        w.writerow([repr(metrics["mpjpe"]), repr(metrics["pck"]), repr(metrics["auc"]), len(pred)])
    ev.limb_ratio_histogram(pred).to_csv(out / "ratios_pred.csv")
    ev.limb_ratio_histogram(gt).to_csv(out / "ratios_gt.csv")
    print(f"MPJPE {metrics['mpjpe']:.3f} mm  PCK {metrics['pck']:.2f}  AUC {metrics['auc']:.2f}")
    return EXIT_OK


def cmd_report(args):
    """Collect the final row of each training run into one summary table."""
    rows = []
    for run in args.runs:
        run = Path(run)
        manifest = json.loads((run / "manifest.json").read_text(encoding="utf-8"))
        metrics = tr.read_metrics_csv(run / "metrics.csv")
        if not metrics:
            raise DataMissing(f"{run}: metrics.csv has no rows")
        last = metrics[-1]
        rows.append([manifest.get("name", run.name), manifest.get("seed", ""), last.get("epoch", "")]
                    + [repr(last[k]) if k in last else "" for k in ("mpjpe", "pck", "auc")])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "seed", "epochs", "mpjpe", "pck", "auc"])
        w.writerows(rows)
    for r in rows:
        print(",".join(str(v) for v in r))
    return EXIT_OK


# ---------------------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="liftgeo", description="Unsupervised 2D-to-3D pose lifting.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="key = value training config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override (repeatable)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--width", type=int)
        sp.add_argument("--batch-size", dest="batch_size", type=int)

    s = sub.add_parser("synth", help="generate a synthetic 2D/3D pose dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--c", type=float, default=10.0)
    s.add_argument("--sequences", action="store_true", help="emit smooth multi-frame sequences")
    s.add_argument("--frames-per-sequence", type=int, default=32)
    s.add_argument("--length-jitter", type=float, default=0.0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("adapt", help="train the 2D domain adapter and write corrected source poses")
    with_config(s)
    s.add_argument("--source", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--steps", type=int, default=500)
    s.set_defaults(func=cmd_adapt)

    s = sub.add_parser("train", help="train a lifter (ablation via --flags, e.g. Adv+SS)")
    with_config(s)
    s.add_argument("--poses", help="2D training poses CSV")
    s.add_argument("--sequences", help="2D sequence CSV for the temporal discriminator")
    s.add_argument("--adapted", help="domain-corrected source poses CSV (DA)")
    s.add_argument("--eval2d", help="held-out 2D poses for per-epoch evaluation")
    s.add_argument("--eval3d", help="ground-truth 3D poses matching --eval2d")
    s.add_argument("--out", required=True)
    s.add_argument("--flags")
    s.add_argument("--epochs", type=int)
    s.add_argument("--M", type=int)
    s.add_argument("--steps-per-epoch", dest="steps_per_epoch", type=int)
    s.add_argument("--min-confidence", type=float, default=0.0)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("lift", help="lift 2D poses with a trained checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--poses", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_lift)

    s = sub.add_parser("eval", help="aligned MPJPE / PCK / AUC and limb-ratio histograms")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mm-per-unit", type=float, default=ev.MM_PER_UNIT)
    s.add_argument("--pck-threshold", type=float, default=150.0)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="summarize training runs into one CSV")
    s.add_argument("runs", nargs="+", help="training output directories")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        with _threads():
            return args.func(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
