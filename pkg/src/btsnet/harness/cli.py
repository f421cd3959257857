"""Command-line entry point: ``btsnet <subcommand> ...``."""

import argparse
import json
import logging
import sys
from pathlib import Path

import torch

from ..data import DatasetError, DatasetSpec, load_dataset, synthetic_dataset, write_dataset
from ..metrics import evaluate_dataset
from .ablation import SUITES, run_ablation
from .audit import PARTS, audit_params, format_audit
from .config import SyntheticSpec, TrainConfig, load_experiment
from .gradcheck import COMPONENTS, check_component
from .train import Checkpoint, CheckpointMismatchError, infer, train
from .viz import export_heatmaps

GRADCHECK_LIMITS = {"bts": 1e-4, "loss": 1e-5, "network": 1e-3}


def _experiment(args):
    if args.config:
        cfg, spec = load_experiment(args.config)
    else:
        cfg, spec = TrainConfig(), None
    overrides = {}
    for key in ("epochs", "seed", "lr", "batch_size"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = v
    if getattr(args, "scale", None):
        overrides["scale"] = args.scale
    if overrides:
        cfg = cfg.replace(**overrides)
    if getattr(args, "data", None):
        spec = DatasetSpec(args.data, split="train")
    if getattr(args, "synthetic", None):
        spec = SyntheticSpec(n=args.synthetic, seed=cfg.seed)
    if spec is None:
        raise SystemExit("no data: give --data, --synthetic N, or a config with a data section")
    return cfg, spec


def cmd_train(args):
    cfg, spec = _experiment(args)
    ckpt = train(cfg, spec, out_dir=args.out, max_steps=args.max_steps)
    for epoch, loss in enumerate(ckpt.history):
        print(f"epoch {epoch:4d}  lr {cfg.lr_at(epoch):.2e}  loss {loss:.6f}")
    print(f"checkpoint: {Path(args.out) / 'last.pt'}")
    return 0


def cmd_infer(args):
    ckpt = Checkpoint.load(args.checkpoint)
    config = load_experiment(args.config)[0] if args.config else None
    try:
        paths = infer(ckpt, DatasetSpec(args.data, split="test"), args.out, args.all_outputs, config)
    except CheckpointMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(paths)} saliency maps to {args.out}")
    return 0


def cmd_eval(args):
    report = evaluate_dataset(args.pred, args.gt)
    print(report.format_table(args.name))
    if args.out:
        report.save(args.out)
    for e in report.errors:
        print(f"error: {e}", file=sys.stderr)
    return 0 if report.ok else 1


def cmd_ablate(args):
    cfg, spec = _experiment(args)
    eval_spec = DatasetSpec(args.eval_data, split="test") if args.eval_data else None
    report = run_ablation(args.suite, cfg, spec, eval_spec, args.out, args.max_steps)
    print(report.table())
    return 0


def cmd_params(args):
    rows = audit_params(args.scale, args.parts)
    print(format_audit(rows))
    if args.json:
        Path(args.json).write_text(json.dumps(rows, indent=2))
    return 0 if all(r["ok"] is not False for r in rows) else 1


def cmd_gradcheck(args):
    dtype = torch.float64 if args.dtype == "float64" else torch.float32
    names = COMPONENTS if args.component == "all" else [args.component]
    status = 0
    for name in names:
        err = check_component(name, eps=args.eps, dtype=dtype)
        limit = GRADCHECK_LIMITS.get(name, 1e-4)
        ok = err < limit
        status |= not ok
        print(f"{name:18s} max rel err {err:.3e}  (limit {limit:.0e})  {'ok' if ok else 'FAIL'}")
    return int(status)


def cmd_viz(args):
    samples = {s.stem: s for s in load_dataset(DatasetSpec(args.data, split="test"))}
    if args.stem not in samples:
        print(f"error: stem {args.stem!r} not found in {args.data}", file=sys.stderr)
        return 2
    paths = export_heatmaps(args.checkpoint, samples[args.stem], args.levels, args.out)
    for p in paths:
        print(p)
    return 0


def cmd_synth(args):
    samples = synthetic_dataset(args.n, args.seed, (args.size, args.size), args.depth_noise)
    root = write_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples to {root}")
    return 0


def _add_experiment_args(p):
    p.add_argument("--config", help="experiment YAML/JSON file")
    p.add_argument("--data", help="dataset root with RGB/ depth/ GT/ (overrides config)")
    p.add_argument("--synthetic", type=int, metavar="N", help="train on N synthetic scenes")
    p.add_argument("--scale", choices=["full", "tiny"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--max-steps", type=int, help="stop after this many optimiser steps")


def build_parser():
    parser = argparse.ArgumentParser(prog="btsnet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network")
    _add_experiment_args(p)
    p.add_argument("--out", default="runs/train")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="write saliency maps for a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="fail if this config's structure differs from the checkpoint")
    p.add_argument("--all-outputs", action="store_true", help="also write S_r and S_d")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--name", default="dataset")
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run an ablation suite")
    p.add_argument("suite", choices=SUITES)
    _add_experiment_args(p)
    p.add_argument("--eval-data", help="dataset root for evaluation (default: training data)")
    p.add_argument("--out", default="runs/ablation")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("params", help="parameter audit")
    p.add_argument("--scale", choices=["full", "tiny"], default="full")
    p.add_argument("--parts", nargs="+", choices=PARTS, default=list(PARTS))
    p.add_argument("--json", help="write rows as JSON")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--component", choices=list(COMPONENTS) + ["all"], default="all")
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--dtype", choices=["float64", "float32"], default="float64")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("viz", help="export feature heatmaps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--stem", required=True)
    p.add_argument("--levels", nargs="+", default=["r3", "d3"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("synth", help="write a synthetic RGB-D dataset")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--depth-noise", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DatasetError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: no such file", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
