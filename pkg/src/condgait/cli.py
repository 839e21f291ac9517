"""Command-line interface.

Subcommands: train, eval, synth, gradcheck, params, flops, topo-corr,
filter-stats. Exit codes: 0 success, 1 failed check or metric error,
2 usage, 3 unreadable/invalid config, 4 checkpoint mismatch.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .complexity import complexity_table
from .data import Corpus
from .evaluation import extract_embeddings, rank1
from .network import VARIANTS, NetworkConfig
from .skeleton import build_skeleton
from .synthetic import emit_corpus
from .topology import topology_correlation_matrix
from .training import (CheckpointError, RunConfig, Trainer, load_checkpoint)
from .verification import run_gradient_suite

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_CHECKPOINT = 4

PROFILES = {"desk": NetworkConfig.desk, "casia-b": NetworkConfig.casia_b,
            "tiny": NetworkConfig.tiny}


def _load_run_config(args) -> RunConfig:
    if getattr(args, "config", None):
        cfg = RunConfig.from_file(args.config)
    else:
        cfg = RunConfig()
    for key in ("corpus", "out", "epochs", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            if key == "out":
                cfg.out_dir = val
            else:
                setattr(cfg, key, val)
    return cfg


def cmd_train(args) -> int:
    try:
        cfg = _load_run_config(args)
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        corpus = Corpus.load(cfg.corpus, cfg.network.skeleton_spec())
    except (FileNotFoundError, ValueError) as err:
        print(f"corpus error: {err}", file=sys.stderr)
        return EXIT_FAILURE
    trainer = Trainer(cfg, corpus)
    history = trainer.train()
    last = history[-1]
    print(f"trained {len(history)} epochs; final loss {last['loss']:.4f}, "
          f"view acc {last.get('view_acc', float('nan')):.3f}")
    print(f"metrics: {trainer.out_dir / 'metrics.jsonl'}")
    print(f"checkpoint: {trainer.out_dir / 'checkpoint.json'}")
    return EXIT_OK


def _split_records(corpus: Corpus, args):
    if args.gallery_condition:
        gallery = [r for r in corpus.records
                   if r.condition == args.gallery_condition]
        probe_cond = args.probe_condition
        probe = [r for r in corpus.records
                 if (r.condition == probe_cond if probe_cond
                     else r.condition != args.gallery_condition)]
        return gallery, probe
    groups: dict = {}
    for rec in corpus.records:
        groups.setdefault((rec.subject_id, rec.view_label, rec.condition),
                          []).append(rec)
    gallery, probe = [], []
    for key in sorted(groups):
        seqs = groups[key]
        gallery.extend(seqs[:args.gallery_count])
        probe.extend(seqs[args.gallery_count:])
    return gallery, probe


def cmd_eval(args) -> int:
    try:
        model = load_checkpoint(args.checkpoint)
    except CheckpointError as err:
        print(f"checkpoint error: {err}", file=sys.stderr)
        return EXIT_CHECKPOINT
    try:
        corpus = Corpus.load(args.corpus, model.spec)
    except (FileNotFoundError, ValueError) as err:
        print(f"corpus error: {err}", file=sys.stderr)
        return EXIT_FAILURE
    gallery, probe = _split_records(corpus, args)
    if not gallery or not probe:
        print("eval error: empty gallery or probe split", file=sys.stderr)
        return EXIT_FAILURE
    gal_rows = extract_embeddings(model, gallery)
    probe_rows = extract_embeddings(model, probe)
    result = rank1(gal_rows, probe_rows,
                   exclude_identical_view=not args.include_identical_view)
    print(result)
    if args.csv:
        result.write_csv(args.csv)
        print(f"wrote {args.csv}")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = build_skeleton(args.skeleton)
    conditions = [c.strip() for c in args.conditions.split(",") if c.strip()]
    records = emit_corpus(args.out, spec, args.subjects, args.views,
                          args.seqs, t_raw=args.t_raw, seed=args.seed,
                          conditions=conditions)
    print(f"wrote {len(records)} sequence files under {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = run_gradient_suite(tol=args.tol, h=args.step)
    worst = 0.0
    failed = 0
    for name, report in results:
        status = "pass" if report.passed else "FAIL"
        print(f"{status}  {name:38s} max rel err {report.max_rel_error:.3e} "
              f"({report.coords_checked} coords)")
        worst = max(worst, report.max_rel_error)
        failed += not report.passed
    print(f"{len(results) - failed}/{len(results)} checks passed "
          f"(worst {worst:.3e}, tol {args.tol:.1e})")
    return EXIT_OK if failed == 0 else EXIT_FAILURE


def _profile_config(args) -> NetworkConfig:
    if args.config:
        return RunConfig.from_file(args.config).network
    return PROFILES[args.profile]()


def cmd_params(args) -> int:
    try:
        cfg = _profile_config(args)
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{'variant':16s} {'params':>12s} {'params (M)':>11s}")
    for variant, params, _ in complexity_table(cfg):
        if args.variant not in ("all", variant):
            continue
        print(f"{variant:16s} {params:12d} {params / 1e6:11.3f}")
    return EXIT_OK


def cmd_flops(args) -> int:
    try:
        cfg = _profile_config(args)
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    t = args.t_frames
    print(f"{'variant':16s} {'GFLOPs':>10s}   (T={t if t else cfg.t_frames})")
    for variant, _, gflops in complexity_table(cfg, t):
        if args.variant not in ("all", variant):
            continue
        print(f"{variant:16s} {gflops:10.4f}")
    return EXIT_OK


def cmd_topo_corr(args) -> int:
    try:
        model = load_checkpoint(args.checkpoint)
    except CheckpointError as err:
        print(f"checkpoint error: {err}", file=sys.stderr)
        return EXIT_CHECKPOINT
    if model.vatl is None:
        print("this checkpoint's variant has no view-topology module",
              file=sys.stderr)
        return EXIT_FAILURE
    matrix = topology_correlation_matrix(model.vatl)
    labels = [f"view{v}" for v in range(model.vatl.k_v)]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + labels)
        for label, row in zip(labels, matrix):
            writer.writerow([label] + [f"{v:.8f}" for v in row])
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_filter_stats(args) -> int:
    try:
        model = load_checkpoint(args.checkpoint)
    except CheckpointError as err:
        print(f"checkpoint error: {err}", file=sys.stderr)
        return EXIT_CHECKPOINT
    try:
        corpus = Corpus.load(args.corpus, model.spec)
    except (FileNotFoundError, ValueError) as err:
        print(f"corpus error: {err}", file=sys.stderr)
        return EXIT_FAILURE
    model.eval()
    from .data import sample_fixed_length
    from .tensor import no_grad
    stats: dict = {}
    with no_grad():
        for rec in corpus.records[:args.limit]:
            frames = sample_fixed_length(rec, model.cfg.t_frames, "eval")
            for block, stream, f_s, f_t in model.collect_filters(frames):
                for kind, values in (("spatial", f_s), ("temporal", f_t)):
                    per_joint = np.moveaxis(values, -2, 0)
                    for joint in range(per_joint.shape[0]):
                        stats.setdefault((stream, block, kind, joint),
                                         []).append(per_joint[joint].ravel())
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stream", "block", "filter", "joint",
                         "min", "q1", "median", "q3", "max"])
        for key in sorted(stats):
            allv = np.concatenate(stats[key])
            q = np.percentile(allv, [0, 25, 50, 75, 100])
            writer.writerow(list(key) + [f"{v:.6f}" for v in q])
    print(f"wrote {args.out} ({len(stats)} joint rows)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="condgait",
        description="Skeleton gait recognition with adaptive per-joint "
                    "filters and view-adaptive graph topologies.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a sequence corpus")
    p.add_argument("--config", help="JSON or TOML run config")
    p.add_argument("--corpus", help="corpus directory (overrides config)")
    p.add_argument("--out", help="output directory (overrides config)")
    p.add_argument("--epochs", type=int, help="epoch count (overrides config)")
    p.add_argument("--seed", type=int, help="run seed (overrides config)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="rank-1 retrieval evaluation")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--gallery-count", type=int, default=2,
                   help="per (subject,view,condition): first N to gallery")
    p.add_argument("--gallery-condition",
                   help="use this condition as gallery instead of the index split")
    p.add_argument("--probe-condition",
                   help="probe condition (default: all others)")
    p.add_argument("--include-identical-view", action="store_true")
    p.add_argument("--csv", help="export the view matrix as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic walker corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--subjects", type=int, default=8)
    p.add_argument("--views", type=int, default=11)
    p.add_argument("--seqs", type=int, default=4)
    p.add_argument("--t-raw", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skeleton", default="coco17",
                   choices=["coco17", "body18"])
    p.add_argument("--conditions", default="nm",
                   help="comma list from nm,bg,cl,synthetic")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of every op and a tiny network")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--step", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    for name, func in (("params", cmd_params), ("flops", cmd_flops)):
        p = sub.add_parser(name, help=f"report {name} per variant")
        p.add_argument("--profile", default="casia-b", choices=sorted(PROFILES))
        p.add_argument("--config", help="take the network from a run config")
        p.add_argument("--variant", default="all",
                       choices=("all",) + VARIANTS)
        if name == "flops":
            p.add_argument("--t-frames", type=float, default=None)
        p.set_defaults(func=func)

    p = sub.add_parser("topo-corr",
                       help="export the view-topology correlation matrix")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_topo_corr)

    p = sub.add_parser("filter-stats",
                       help="per-joint generated-filter statistics as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--limit", type=int, default=4,
                   help="number of sequences to sample")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_filter_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
