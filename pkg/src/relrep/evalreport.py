"""Label-based evaluation and figure data.

Everything in here may read ground-truth labels; training code never does.
"""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components
from sklearn.metrics import normalized_mutual_info_score

from .grouping import CompactnessBaseline, Group, GroupSet, build_group
from .neighbors import distance_matrix, neighbor_order


@dataclass
class MetricsSnapshot:
    knn_accuracy: float = float("nan")
    nmi: float = float("nan")
    coverage_overall: float = 0.0
    coverage_per_subset: list[float] = field(default_factory=list)
    correctness_by_size: dict[int, float] = field(default_factory=dict)


def _require(labels):
    if labels is None:
        raise ValueError("evaluation needs a labelled dataset")
    return np.asarray(labels, dtype=int)


def knn_accuracy(embeddings, labels, k: int = 10, dist: np.ndarray | None = None) -> float:
    """Leave-one-out majority-vote kNN accuracy; vote ties go to the smaller label id."""
    labels = _require(labels)
    n = labels.size
    if not 1 <= k < n:
        raise ValueError(f"k={k} out of range [1, {n - 1}]")
    if dist is None:
        dist = distance_matrix(embeddings)
    nb = neighbor_order(dist)[:, :k]
    votes = np.zeros((n, labels.max() + 1), dtype=int)
    np.add.at(votes, (np.repeat(np.arange(n), k), labels[nb].ravel()), 1)
    pred = votes.argmax(1)   # argmax returns the first (smallest) id on ties
    return float((pred == labels).mean())


def modal_fraction(members, labels) -> float:
    vals = labels[np.asarray(members)]
    return float(np.bincount(vals).max() / vals.size)


def group_correctness(groups, labels) -> dict[int, float]:
    """Mean share of members carrying the group's modal label, per group size."""
    labels = _require(labels)
    glist = groups.groups if isinstance(groups, GroupSet) else groups
    acc = defaultdict(list)
    for g in glist:
        members = g.members if isinstance(g, Group) else g
        acc[len(members)].append(modal_fraction(members, labels))
    return {h: float(np.mean(v)) for h, v in sorted(acc.items())}


def mean_group_correctness(groups, labels) -> float:
    labels = _require(labels)
    glist = groups.groups if isinstance(groups, GroupSet) else groups
    if not glist:
        return float("nan")
    return float(np.mean([modal_fraction(g.members if isinstance(g, Group) else g, labels)
                          for g in glist]))


def group_nmi(groups: GroupSet, labels, min_jaccard: float = 0.5) -> float:
    """NMI between labels and agglomerated groups, over covered samples only.

    Groups with Jaccard overlap >= ``min_jaccard`` are merged (single linkage). A sample
    takes the most frequent cluster among the groups holding it, ties to the smaller id.
    Many small clusters inflate NMI somewhat, so compare values across checkpoints rather
    than reading them in isolation.
    """
    labels = _require(labels)
    covered = groups.covered()
    if covered.sum() < 2:
        return float("nan")
    c = groups.membership.astype(np.float32)
    shared = c @ c.T
    size = c.sum(1)
    jaccard = shared / (size[:, None] + size[None, :] - shared)
    _, comp = connected_components(jaccard >= min_jaccard, directed=False)
    votes = np.zeros((comp.max() + 1, groups.n_samples), dtype=np.int64)
    np.add.at(votes, comp, groups.membership.astype(np.int64))
    cluster = votes[:, covered].argmax(0)
    return float(normalized_mutual_info_score(labels[covered], cluster))


def nn_ratios(embeddings) -> np.ndarray:
    """Per query, ratios d(q, nn_j) / d(q, nn_{j+1}) of consecutive sorted neighbours.

    Zero denominators give ratio 1.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.shape[0] < 3:
        raise ValueError("need at least 3 points")
    d = np.sort(distance_matrix(x), axis=1)[:, 1:]
    num, den = d[:, :-1], d[:, 1:]
    out = np.ones_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def nn_ratio_curve(embeddings, cut: float = 0.95) -> tuple[np.ndarray, int]:
    r = nn_ratios(embeddings)
    return r.mean(0), int((r < cut).sum())


def sorted_similarity_curve(embeddings, query: int) -> np.ndarray:
    x = np.asarray(embeddings, dtype=np.float64)
    d = np.sqrt(((x - x[query]) ** 2).sum(1))
    return np.sort(np.delete(d, query))


def _ranks(x: np.ndarray, query: int) -> np.ndarray:
    d = np.sqrt(((x - x[query]) ** 2).sum(1))
    order = np.lexsort((np.arange(d.size), d))
    order = order[order != query]
    rank = np.empty(x.shape[0], dtype=int)
    rank[order] = np.arange(order.size)
    return np.delete(rank, query)


def rank_stability_under_noise(embeddings, query: int, noise_grid, trials: int = 20, seed=0
                               ) -> np.ndarray:
    """Smallest noise variance at which each neighbour's rank w.r.t. the query changes.

    Gaussian noise of variance s2 perturbs every embedding; a neighbour "flips" at s2 when
    its rank differs from the clean rank in at least half of ``trials`` draws. Draws come
    in antithetic pairs (eps, -eps). Output follows the clean neighbour order; inf means
    no flip anywhere on the grid.
    """
    grid = list(noise_grid)
    if not grid:
        raise ValueError("empty noise grid")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("noise grid must be ascending")
    x = np.asarray(embeddings, dtype=np.float64)
    rng = np.random.default_rng(seed)
    clean = _ranks(x, query)
    others = np.delete(np.arange(x.shape[0]), query)
    flip_at = np.full(others.size, np.inf)
    for s2 in grid:
        if s2 <= 0:
            continue
        changes = np.zeros(others.size, dtype=int)
        for t in range(trials):
            if t % 2 == 0:
                eps = rng.standard_normal(x.shape) * np.sqrt(s2)
            changes += _ranks(x + (eps if t % 2 == 0 else -eps), query) != clean
        newly = (changes * 2 >= trials) & np.isinf(flip_at)
        flip_at[newly] = s2
    order = np.argsort(clean, kind="stable")
    return flip_at[order]


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return v


def fixed_size_groups(es, baseline, h: int, dist=None) -> list[Group]:
    """Groups grown from every seed but capped at size h; only those reaching h are kept."""
    capped = CompactnessBaseline({s: t for s, t in baseline.thresholds.items() if s <= h},
                                 baseline.num_random_groups, baseline.p)
    if dist is None:
        dist = distance_matrix(es.points)
    order = neighbor_order(dist)
    out, seen = [], set()
    for i in range(es.n):
        g = build_group(es, i, capped, dist, order[i])
        if g is not None and g.size == h and frozenset(g.members) not in seen:
            seen.add(frozenset(g.members))
            out.append(g)
    return out
