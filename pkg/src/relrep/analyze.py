"""Figure data for a trained representation, written as csv files.

Every writer takes the embedded dataset and returns the rows it wrote so that scripts and
tests can inspect them without re-reading the file.
"""
from __future__ import annotations

import shutil
from pathlib import Path

import numpy as np

from . import evalreport
from .grouping import calibrate_baseline, extract_groups, random_groups
from .neighbors import EmbeddedSet, distance_matrix
from .targets import build_target_space, distance_distribution_match

# noise variances for the rank-stability curve, 0.01 ... 2
NOISE_GRID = tuple(np.round(np.r_[np.arange(1, 10) * 0.01, np.arange(1, 10) * 0.1,
                                  np.arange(10, 21) * 0.1], 2))
FIG5A_SIZES = (2, 3, 4, 6, 8, 12, 16, 24, 32)


def _queries(n: int, count: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=min(count, n), replace=False))


def fig2_ratio(emb, out: Path):
    curve, below = evalreport.nn_ratio_curve(emb)
    rows = [[j + 1, float(v)] for j, v in enumerate(curve)]
    evalreport.write_csv(out / "fig2_ratio.csv", ["rank", "mean_ratio"], rows)
    return rows, below


def fig3_sorted(emb, out: Path, queries):
    rows = []
    for q in queries:
        curve = evalreport.sorted_similarity_curve(emb, int(q))
        rows += [[int(q), r + 1, float(d)] for r, d in enumerate(curve)]
    evalreport.write_csv(out / "fig3_sorted.csv", ["query", "rank", "distance"], rows)
    return rows


def fig4_noise(emb, out: Path, queries, noise_grid=NOISE_GRID, max_rank: int = 100, seed=0):
    rows = []
    for q in queries:
        flips = evalreport.rank_stability_under_noise(emb, int(q), noise_grid, seed=seed)
        rows += [[int(q), r + 1, float(s)] for r, s in enumerate(flips[:max_rank])]
    evalreport.write_csv(out / "fig4_noise.csv", ["query", "rank", "flip_sigma2"], rows)
    return rows


def fig5a_correctness_coverage(emb, labels, out: Path, sizes=FIG5A_SIZES, p: float = 3.0,
                               num_random_groups: int = 1000, seed=0):
    es = EmbeddedSet(emb)
    dist = distance_matrix(emb)
    sizes = [h for h in sizes if 2 <= h <= es.n]
    base = calibrate_baseline(es, max(sizes), num_random_groups, p, seed, dist=dist)
    rows = []
    for h in sizes:
        gs = evalreport.fixed_size_groups(es, base, h, dist)
        rand = evalreport.group_correctness(random_groups(es.n, h, 500, seed), labels)[h]
        if gs:
            cov = np.zeros(es.n, dtype=bool)
            for g in gs:
                cov[list(g.members)] = True
            corr = evalreport.group_correctness(gs, labels)[h]
            rows.append([h, len(gs), corr, float(cov.mean()), rand])
        else:
            rows.append([h, 0, float("nan"), 0.0, rand])
    evalreport.write_csv(out / "fig5a_correctness_coverage.csv",
                         ["h", "num_groups", "correctness", "coverage", "random_correctness"], rows)
    return rows


def fig5b_distances(emb, out: Path, D: int = 32, sigma2: float = 0.0025, h_max: int = 32,
                    p: float = 3.0, n_pairs: int = 10000, seed=0):
    es = EmbeddedSet(emb)
    dist = distance_matrix(emb)
    gs = extract_groups(es, calibrate_baseline(es, min(h_max, es.n), 1000, p, seed, dist=dist), dist)
    if len(gs) == 0:
        raise ValueError("no compact groups in this representation")
    space = build_target_space(gs.groups, D, sigma2, seed)
    score, d_data, d_tgt = distance_distribution_match(es, gs, space, n_pairs, seed,
                                                       return_samples=True)
    rows = [["data", float(v)] for v in d_data] + [["targets", float(v)] for v in d_tgt]
    evalreport.write_csv(out / "fig5b_distances.csv", ["source", "distance"], rows)
    return rows, score


def copy_run_figures(run_dir: Path, out: Path) -> list[str]:
    """fig7/fig8 come from a run's iteration history; copy them when present."""
    copied = []
    for name in ("fig7_correctness.csv", "fig8_coverage.csv"):
        src = run_dir / name
        if src.exists() and src.resolve() != (out / name).resolve():
            shutil.copyfile(src, out / name)
            copied.append(name)
        elif src.exists():
            copied.append(name)
    return copied
