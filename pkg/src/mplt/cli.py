"""Command-line entry points tying all modules into runnable workflows."""

import argparse
import os
import sys
import time

import numpy as np

from . import (accounting, export, fileio, gradchecks, metrics, model, synth,
               tracker, train)
from .boxes import BBox


def _load_run_config(args):
    cfg = fileio.load_config(args.config) if args.config else fileio.RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "no_mvip", False):
        cfg.use_mvip = False
    if getattr(args, "no_sa", False):
        cfg.use_spatial_attn = False
    if getattr(args, "no_ta", False):
        cfg.use_token_attn = False
    if getattr(args, "no_tu", False):
        cfg.use_template_update = False
    if getattr(args, "no_kf", False):
        cfg.use_kalman = False
    return cfg


def _load_model(cfg, checkpoint=None):
    config = cfg.model_config()
    path = checkpoint or cfg.checkpoint
    if path:
        return fileio.load_checkpoint(path, config, seed=cfg.seed), config
    return model.ModelParams(config, seed=cfg.seed), config


def _add_common(p):
    p.add_argument("--config", help="run configuration file (key = value)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="output path")
    p.add_argument("--no-mvip", action="store_true",
                   help="remove all mutual prompters")
    p.add_argument("--no-sa", action="store_true",
                   help="disable spatial attention in prompters")
    p.add_argument("--no-ta", action="store_true",
                   help="disable token attention in prompters")
    p.add_argument("--no-tu", action="store_true",
                   help="disable online template update")
    p.add_argument("--no-kf", action="store_true",
                   help="disable Kalman prediction correction")


def cmd_synth(args):
    cfg = _load_run_config(args)
    out = args.out or "synthetic"
    spec = synth.SynthSpec(num_frames=args.frames,
                           trajectory=args.trajectory)
    if args.attribute:
        spec.segments = [(args.frames // 3, 2 * args.frames // 3,
                          args.attribute)]
    for i in range(args.num_sequences):
        record = synth.synth_sequence(spec, seed=cfg.seed + i,
                                      name=f"seq{i:03d}")
        fileio.write_sequence(record, os.path.join(out, record.name))
    print(f"wrote {args.num_sequences} sequence(s) to {out}")
    return 0


def cmd_train_toy(args):
    cfg = _load_run_config(args)
    params, config = _load_model(cfg)
    spec = synth.SynthSpec(num_frames=1, trajectory="static")
    record = synth.synth_sequence(spec, seed=cfg.seed)
    sample = train.make_training_sample(record, 0, config)
    losses = train.train_steps(params, config, [sample], cfg.train_steps,
                               lr=cfg.learning_rate,
                               weight_decay=cfg.weight_decay, seed=cfg.seed)
    print(f"step 0 loss {losses[0]:.6f} -> step {len(losses) - 1} "
          f"loss {losses[-1]:.6f}")
    if args.out:
        fileio.save_checkpoint(params, args.out)
        print(f"checkpoint saved to {args.out}")
    return 0


def cmd_track(args):
    cfg = _load_run_config(args)
    params, config = _load_model(cfg, args.checkpoint)
    record = fileio.load_sequence(args.sequence)
    frames_rgb = [fileio.normalize_frame(f) for f in record.frames_rgb]
    frames_tir = [fileio.normalize_frame(f) for f in record.frames_tir]
    t0 = time.time()
    boxes = tracker.run_sequence(params, config, frames_rgb, frames_tir,
                                 record.gt[0], thr_a=cfg.thr_a,
                                 thr_b=cfg.thr_b, buffer_n=cfg.buffer_n,
                                 kf_noise=cfg.kf_noise())
    fps = len(boxes) / max(time.time() - t0, 1e-9)
    out = args.out or f"{record.name}_results.txt"
    fileio.write_results(boxes, out)
    print(f"tracked {len(boxes)} frames at {fps:.2f} fps -> {out}")
    return 0


def cmd_eval(args):
    results = {}
    for name in sorted(os.listdir(args.sequences)):
        seq_dir = os.path.join(args.sequences, name)
        if not os.path.isdir(seq_dir):
            continue
        result_path = os.path.join(args.results, f"{name}.txt")
        if not os.path.exists(result_path):
            print(f"warning: no results for sequence '{name}'",
                  file=sys.stderr)
            continue
        record = fileio.load_sequence(seq_dir)
        results[name] = (fileio.read_results(result_path), record.gt)
    if not results:
        print("error: no (results, sequence) pairs found", file=sys.stderr)
        return 1
    report = metrics.evaluate(results)
    print(f"PR@20px: {report.pr:.4f}")
    print(f"SR(AUC): {report.sr:.4f}")
    for name, entry in report.per_sequence.items():
        print(f"  {name}: PR {entry['pr']:.4f}  SR {entry['sr']:.4f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        metrics.write_curve(os.path.join(args.out, "precision_plot.txt"),
                            metrics.precision_thresholds(), report.precision)
        metrics.write_curve(os.path.join(args.out, "success_plot.txt"),
                            metrics.success_thresholds(), report.success)
        print(f"plot data written to {args.out}")
    return 0


def cmd_bench(args):
    cfg = _load_run_config(args)
    config = cfg.model_config()
    params = model.ModelParams(config, seed=cfg.seed)
    total, table = accounting.count_params(params)
    print("parameters:")
    for group, count in sorted(table.items()):
        print(f"  {group:10s} {count:>14,}")
    print(f"  {'total':10s} {total:>14,}")
    for label, single in (("dual-branch", False), ("single-branch", True)):
        counts = accounting.count_flops(config, single_branch=single)
        print(f"{label} forward (MAC convention, reported-FLOPs equivalent):")
        for group, macs in counts["table"].items():
            print(f"  {group:10s} {macs / 1e9:>10.3f} GMAC")
        print(f"  {'total':10s} {counts['macs'] / 1e9:>10.3f} GMAC "
              f"({counts['flops'] / 1e9:.3f} GFLOP at 2 flops/MAC)")
    return 0


def cmd_gradcheck(args):
    results = gradchecks.run_all(seed=args.seed or 0)
    ok = True
    for name, (err, threshold) in results.items():
        passed = err < threshold
        ok = ok and passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: max rel err "
              f"{err:.3e} (threshold {threshold:.0e})")
    return 0 if ok else 1


def cmd_dump_attention(args):
    cfg = _load_run_config(args)
    params, config = _load_model(cfg, args.checkpoint)
    record = fileio.load_sequence(args.sequence)
    sample = train.make_training_sample(record, args.frame, config)
    paths = export.export_attention(
        params, config, sample["template_rgb"], sample["search_rgb"],
        sample["template_tir"], sample["search_tir"], args.layer,
        args.out or "attention")
    for branch, path in paths.items():
        print(f"{branch}: {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mplt",
        description="Dual-branch RGB-T tracker with mutual prompters")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic RGB-T sequences")
    _add_common(p)
    p.add_argument("--num-sequences", type=int, default=1)
    p.add_argument("--frames", type=int, default=40)
    p.add_argument("--trajectory", default="linear",
                   choices=["static", "linear", "sinusoidal"])
    p.add_argument("--attribute", choices=list(synth.KNOWN_ATTRIBUTES),
                   help="degrade the middle third of each sequence")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-toy", help="overfit a toy model synthetically")
    _add_common(p)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("track", help="run the tracker over a sequence dir")
    _add_common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--sequence", required=True)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="compute PR/SR from results + gt")
    _add_common(p)
    p.add_argument("--sequences", required=True,
                   help="directory of sequence directories")
    p.add_argument("--results", required=True,
                   help="directory of <sequence>.txt result files")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="parameter and FLOP tables")
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", help="run the gradient-check suite")
    _add_common(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("dump-attention",
                       help="export template-to-search attention grids")
    _add_common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--sequence", required=True)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--layer", type=int, default=0)
    p.set_defaults(func=cmd_dump_attention)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
