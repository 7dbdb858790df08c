"""Command-line entry points: gen-terrain, gen-dataset, train, plan, eval,
render."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import io as rio
from .barrier import LossConfig, NetworkConfig, TrainConfig, evaluate_certificate, train
from .errors import FormatError, ValidationError
from .experiments import ExperimentConfig, run_benchmark
from .labeling import SafetyThresholds, generate_dataset, split_dataset
from .planner import CbfForm, Outcome, PlannerConfig, navigate
from .render import render
from .terrain import Difficulty, TerrainSpec, generate
from .vehicle import settle_pose


def _parse_pair(text: str, n: int, what: str):
    parts = text.split(",")
    if len(parts) != n:
        raise ValidationError(f"{what} needs {n} comma-separated values, got {text!r}")
    return tuple(float(p) for p in parts)


def _cmd_gen_terrain(args):
    w, l = _parse_pair(args.extent, 2, "--extent") if "," in args.extent else tuple(
        float(v) for v in args.extent.lower().split("x"))
    spec = TerrainSpec(
        seed=args.seed, difficulty=Difficulty(args.difficulty),
        extent=(w, l), resolution=args.resolution, max_height=args.max_height,
        amplitude=args.amplitude, feature_density=args.density,
    )
    hf = generate(spec)
    rio.save_heightfield(hf, args.out)
    print(f"wrote {args.out}: {hf.cols}x{hf.rows} cells, "
          f"height range [{hf.heights.min():.3f}, {hf.heights.max():.3f}] m")


def _thresholds_from_args(args) -> SafetyThresholds:
    kw = {}
    if args.p_thresh is not None:
        kw["p_thresh"] = args.p_thresh
    if args.phi_thresh is not None:
        kw["phi_thresh"] = args.phi_thresh
    if args.delta_thresh is not None:
        kw["delta_thresh"] = args.delta_thresh
    if args.u_thresh is not None:
        kw["u_thresh"] = args.u_thresh
    return SafetyThresholds(**kw)


def _cmd_gen_dataset(args):
    paths = sorted(Path(args.terrains).glob("*.hf1"))
    if not paths:
        raise ValidationError(f"no .hf1 terrain files under {args.terrains}")
    terrains = [rio.load_heightfield(p) for p in paths]
    th = _thresholds_from_args(args)
    samples = generate_dataset(terrains, args.n, th, args.seed)
    rio.save_dataset(samples, th, args.out)
    n_unsafe = sum(1 for s in samples if not s.label.safe)
    print(f"wrote {args.out}: {len(samples)} records "
          f"({len(samples) - n_unsafe} safe / {n_unsafe} unsafe) "
          f"from {len(terrains)} terrains")


def _cmd_train(args):
    samples, th = rio.load_dataset(args.dataset)
    digest = rio.dataset_hash(samples, th)
    train_split, val_split = split_dataset(samples, args.val_fraction, args.seed)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                      learning_rate=args.lr, seed=args.seed)
    net, history = train(train_split, val_split, cfg)
    rio.save_network(net, args.out, train_config={
        "epochs": cfg.epochs, "batch_size": cfg.batch_size,
        "learning_rate": cfg.learning_rate, "seed": cfg.seed,
        "val_fraction": args.val_fraction,
    }, dataset_digest=digest)
    history_path = args.history or str(Path(args.out).with_suffix(".history.csv"))
    with open(history_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "loss", "term1", "term2", "term3", "val_accuracy"])
        for e in history:
            w.writerow([e.epoch, "%.17g" % e.loss, "%.17g" % e.term1,
                        "%.17g" % e.term2, "%.17g" % e.term3,
                        "%.17g" % e.val_accuracy])
    report = evaluate_certificate(net, val_split)
    best = max(e.val_accuracy for e in history)
    print(f"wrote {args.out} (best val accuracy {best:.3f}); history in {history_path}")
    print(f"certificate on validation: safe {report.safe_rate:.3f}, "
          f"unsafe {report.unsafe_rate:.3f}, decrease {report.decrease_rate:.3f}")


def _cmd_plan(args):
    hf = rio.load_heightfield(args.terrain)
    net = None
    if args.model is not None:
        net, _ = rio.load_network(args.model)
    if not args.no_cbf and net is None:
        raise ValidationError("--model is required unless --no-cbf is set")
    sx, sy, syaw = _parse_pair(args.start, 3, "--start")
    gx, gy = _parse_pair(args.goal, 2, "--goal")
    cfg = PlannerConfig(cbf_enabled=not args.no_cbf,
                        cbf_form=CbfForm(args.cbf_form))
    start = settle_pose(hf, sx, sy, syaw)
    traj, outcome = navigate(hf, net, start, (gx, gy), cfg, budget=args.budget)
    rio.save_trajectory_csv(traj, args.out)
    final = traj.states[-1]
    print(f"outcome: {outcome.value} after {len(traj.controls)} steps "
          f"({traj.elapsed:.1f} s); final pose ({final.x:.2f}, {final.y:.2f}); "
          f"trajectory in {args.out}")


def _cmd_eval(args):
    kv = rio.read_manifest(args.config)
    cfg_kw = {}
    if "seed" in kv:
        cfg_kw["seed"] = int(kv["seed"])
    if "difficulties" in kv:
        cfg_kw["difficulties"] = tuple(
            Difficulty(d.strip()) for d in kv["difficulties"].split(","))
    if "trials" in kv:
        cfg_kw["trials"] = int(kv["trials"])
    if "variants" in kv:
        cfg_kw["variants"] = tuple(v.strip() for v in kv["variants"].split(","))
    if "extent" in kv:
        w, l = kv["extent"].lower().split("x")
        cfg_kw["extent"] = (float(w), float(l))
    if "resolution" in kv:
        cfg_kw["resolution"] = float(kv["resolution"])
    if "step_budget" in kv:
        cfg_kw["step_budget"] = int(kv["step_budget"])
    cfg = ExperimentConfig(**cfg_kw)
    net = None
    if "model" in kv:
        net, _ = rio.load_network(kv["model"])
    planner_cfg = PlannerConfig()
    if "cbf_form" in kv:
        planner_cfg = PlannerConfig(cbf_form=CbfForm(kv["cbf_form"]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, records = run_benchmark(cfg, net, planner_cfg, out_dir=out)
    print(f"wrote {out / 'metrics.csv'} ({len(records)} trials)")
    for r in rows:
        print(f"  {r.variant:14s} {r.difficulty:6s} success {r.success_rate:.2f} "
              f"reached {r.reached_rate:.2f} safe {r.safe_rate:.2f}")


def _cmd_render(args):
    hf = rio.load_heightfield(args.terrain)
    traj = rio.load_trajectory_csv(args.trajectory) if args.trajectory else None
    net = None
    if args.model:
        net, _ = rio.load_network(args.model)
    render(hf, traj, net, path=args.out, mask_stride=args.mask_stride)
    print(f"wrote {args.out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roughnav",
                                description="rough-terrain safe navigation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-terrain", help="synthesize a terrain file (HF1)")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--difficulty", choices=[d.value for d in Difficulty],
                   required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--extent", default="3.1x5.0", help="WxL in meters")
    g.add_argument("--resolution", type=float, default=0.05)
    g.add_argument("--max-height", type=float, default=0.6)
    g.add_argument("--amplitude", type=float, default=None)
    g.add_argument("--density", type=float, default=None)
    g.set_defaults(func=_cmd_gen_terrain)

    d = sub.add_parser("gen-dataset", help="label balanced transitions (DS1)")
    d.add_argument("--terrains", required=True, help="directory of .hf1 files")
    d.add_argument("--n", type=int, default=4000)
    d.add_argument("--seed", type=int, required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--p-thresh", type=float, default=None)
    d.add_argument("--phi-thresh", type=float, default=None)
    d.add_argument("--delta-thresh", type=float, default=None)
    d.add_argument("--u-thresh", type=float, default=None)
    d.set_defaults(func=_cmd_gen_dataset)

    t = sub.add_parser("train", help="train the barrier network (NN1)")
    t.add_argument("--dataset", required=True)
    t.add_argument("--epochs", type=int, default=150)
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--val-fraction", type=float, default=0.2)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--history", default=None, help="history CSV path")
    t.set_defaults(func=_cmd_train)

    pl = sub.add_parser("plan", help="navigate a terrain with the planner")
    pl.add_argument("--terrain", required=True)
    pl.add_argument("--model", default=None)
    pl.add_argument("--start", required=True, help="x,y,yaw")
    pl.add_argument("--goal", required=True, help="x,y")
    pl.add_argument("--out", required=True)
    pl.add_argument("--no-cbf", action="store_true")
    pl.add_argument("--cbf-form", choices=[f.value for f in CbfForm],
                    default=CbfForm.STRICT.value)
    pl.add_argument("--budget", type=int, default=600)
    pl.set_defaults(func=_cmd_plan)

    e = sub.add_parser("eval", help="run a benchmark from a key=value config")
    e.add_argument("--config", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=_cmd_eval)

    r = sub.add_parser("render", help="render terrain/trajectory to PPM")
    r.add_argument("--terrain", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--trajectory", default=None)
    r.add_argument("--model", default=None)
    r.add_argument("--mask-stride", type=int, default=5)
    r.set_defaults(func=_cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (ValidationError, FormatError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
