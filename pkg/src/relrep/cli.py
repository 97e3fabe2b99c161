"""Command line entry point: ``relrep {gen,run,eval,analyze}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import analyze, evalreport
from .dataset import Dataset, SyntheticSpec, format_from_path, gen_synthetic, load_dataset, save_dataset
from .embednet import forward, load_checkpoint
from .grouping import calibrate_baseline, extract_groups
from .neighbors import EmbeddedSet, distance_matrix
from .pipeline import PipelineConfig, load_config, run

log = logging.getLogger("relrep")


def _load(path) -> Dataset:
    return load_dataset(path, format_from_path(path))


def cmd_gen(args) -> int:
    spec = SyntheticSpec(args.classes, args.per_class, args.dim, args.std, args.seed)
    ds = gen_synthetic(spec)
    save_dataset(ds, args.out, format_from_path(args.out))
    print(f"wrote {ds.n} x {ds.dim} to {args.out}")
    return 0


def cmd_run(args) -> int:
    ds = _load(args.data)
    cfg = load_config(args.config) if args.config else PipelineConfig()
    res = run(ds, cfg, args.out_dir)
    for m in res.metrics:
        print(f"iteration {m['iteration']}: groups={m['num_groups']} "
              f"coverage={m['coverage_overall']:.3f} correctness={m['group_correctness_mean']:.3f}")
    print(f"checkpoints and metrics.csv in {args.out_dir}")
    return 0


def _groups(emb, p: float, h_max: int, seed: int):
    es = EmbeddedSet(emb)
    dist = distance_matrix(emb)
    base = calibrate_baseline(es, min(h_max, es.n), 1000, p, seed, dist=dist)
    return extract_groups(es, base, dist), dist


def cmd_eval(args) -> int:
    ds = _load(args.data)
    if not ds.has_labels:
        print("error: eval needs a labelled dataset", file=sys.stderr)
        return 2
    emb = forward(load_checkpoint(args.checkpoint), ds.vectors)
    gs, dist = _groups(emb, args.p, args.h_max, args.seed)
    acc = evalreport.knn_accuracy(emb, ds.labels, args.k, dist=dist)
    nmi = evalreport.group_nmi(gs, ds.labels) if len(gs) else float("nan")
    print(f"knn_accuracy={acc:.4f} nmi={nmi:.4f} groups={len(gs)} coverage={gs.coverage():.4f}")
    return 0


def cmd_analyze(args) -> int:
    ds = _load(args.data)
    ckpt = Path(args.checkpoint)
    net = load_checkpoint(ckpt)
    emb = forward(net, ds.vectors)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    queries = analyze._queries(ds.n, args.queries, args.seed)
    _, below = analyze.fig2_ratio(emb, out)
    analyze.fig3_sorted(emb, out, queries)
    analyze.fig4_noise(emb, out, queries, seed=args.seed)
    if ds.has_labels:
        analyze.fig5a_correctness_coverage(emb, ds.labels, out, p=args.p, seed=args.seed)
    else:
        log.warning("unlabelled dataset: skipping fig5a")
    _, score = analyze.fig5b_distances(emb, out, D=args.D, sigma2=args.sigma2, h_max=args.h_max,
                                       p=args.p, seed=args.seed)
    copied = analyze.copy_run_figures(ckpt.parent, out)
    print(f"pairs with ratio < 0.95: {below}; data/target KS = {score:.4f}")
    if not copied:
        print("no run history next to the checkpoint: fig7/fig8 not written")
    print(f"figure data in {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="relrep")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic Gaussian-cluster dataset")
    g.add_argument("--classes", type=int, default=10)
    g.add_argument("--per-class", type=int, default=200)
    g.add_argument("--dim", type=int, default=16)
    g.add_argument("--std", type=float, default=0.3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="*.csv or *.bin (raw_f32)")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="train phi_init and T iterations")
    r.add_argument("--data", required=True)
    r.add_argument("--config", help="key = value file; defaults when omitted")
    r.add_argument("--out-dir", required=True)
    r.set_defaults(func=cmd_run)

    for name, fn, hlp in (("eval", cmd_eval, "kNN accuracy and group NMI of a checkpoint"),
                          ("analyze", cmd_analyze, "figure-data csvs for a checkpoint")):
        e = sub.add_parser(name, help=hlp)
        e.add_argument("--data", required=True)
        e.add_argument("--checkpoint", required=True)
        e.add_argument("--p", type=float, default=3.0)
        e.add_argument("--h-max", type=int, default=32)
        e.add_argument("--seed", type=int, default=0)
        if name == "eval":
            e.add_argument("--k", type=int, default=10)
        else:
            e.add_argument("--out-dir", required=True)
            e.add_argument("--queries", type=int, default=5)
            e.add_argument("--D", type=int, default=32)
            e.add_argument("--sigma2", type=float, default=0.0025)
        e.set_defaults(func=fn)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
