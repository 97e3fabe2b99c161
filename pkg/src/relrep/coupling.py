"""Cross-subset transitivity triplets.

For subsets m != n: anchor i lies in m but not n, positive j in n but not m, and some
extracted group holds both i and j. The negative k is a sample of n (not in m) whose
distance from j is in the upper tail of j's distance distribution.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grouping import GroupSet
from .neighbors import EmbeddedSet, distance_matrix
from .partition import Partition


@dataclass(frozen=True)
class Triplet:
    anchor: int
    positive: int
    negative: int
    source: tuple[int, int]


def _subset_masks(groups: GroupSet, partition: Partition) -> np.ndarray:
    n = groups.n_samples
    masks = np.zeros((partition.K, n), dtype=bool)
    for k, idx in enumerate(partition.subsets):
        if idx.size:
            masks[k] = groups.membership[idx].any(axis=0)
    return masks


def _co_membership(groups: GroupSet) -> np.ndarray:
    c = groups.membership.astype(np.float32)   # float for BLAS
    return (c.T @ c) > 0


def mine_triplets(groups: GroupSet, partition: Partition, es: EmbeddedSet, per_anchor_cap: int = 5,
                  dissim_percentile: float = 90.0, seed=0, dist: np.ndarray | None = None
                  ) -> list[list[Triplet]]:
    """Per-subset triplet lists; list m holds the triplets imputed into subset m.

    Each anchor contributes at most ``per_anchor_cap`` distinct triplets, drawn uniformly
    from its (positive, other subset) candidates and then uniformly among the reliable
    negatives of that positive.
    """
    K = partition.K
    out: list[list[Triplet]] = [[] for _ in range(K)]
    if K < 2 or len(groups) == 0:
        return out
    rng = np.random.default_rng(seed)
    if dist is None:
        dist = distance_matrix(es.points)
    n = dist.shape[0]
    masks = _subset_masks(groups, partition)
    linked = _co_membership(groups)
    np.fill_diagonal(linked, False)
    # reliable dissimilarity: distance at or above the given percentile of the row
    rank = max(1, int(np.ceil(dissim_percentile * (n - 1) / 100.0 - 1e-9)))
    others = np.sort(dist + np.diag(np.full(n, -np.inf)), axis=1)[:, 1:]
    cut = others[:, rank - 1]
    far = dist >= cut[:, None]
    np.fill_diagonal(far, False)

    for m in range(K):
        for i in np.flatnonzero(masks[m]):
            cands = []   # (n, positive, negatives)
            for nn in range(K):
                if nn == m or masks[nn, i]:
                    continue
                only_n = masks[nn] & ~masks[m]
                for j in np.flatnonzero(linked[i] & only_n):
                    negs = np.flatnonzero(far[j] & only_n)
                    if negs.size:
                        cands.append((nn, int(j), negs))
            if not cands:
                continue
            picked: dict[tuple[int, int], int] = {}   # (j, k) -> source subset
            attempts = 0
            total = sum(c[2].size for c in cands)
            want = min(per_anchor_cap, total)
            while len(picked) < want and attempts < 20 * per_anchor_cap:
                attempts += 1
                nn, j, negs = cands[rng.integers(len(cands))]
                k = int(negs[rng.integers(negs.size)])
                # the same (j, k) can qualify through several subsets; keep one, the lowest
                picked[(j, k)] = min(nn, picked.get((j, k), nn))
            for (j, k), nn in sorted(picked.items()):
                out[m].append(Triplet(int(i), j, k, (m, nn)))
    return out


def triplet_array(triplets: list[Triplet]) -> np.ndarray:
    if not triplets:
        return np.zeros((0, 3), dtype=int)
    return np.array([(t.anchor, t.positive, t.negative) for t in triplets], dtype=int)


def save_triplets(per_subset: list[list[Triplet]], path) -> None:
    lines = ["i,j,k,m,n"]
    for lst in per_subset:
        lines += [f"{t.anchor},{t.positive},{t.negative},{t.source[0]},{t.source[1]}" for t in lst]
    Path(path).write_text("\n".join(lines) + "\n")


def load_triplets(path, K: int) -> list[list[Triplet]]:
    out: list[list[Triplet]] = [[] for _ in range(K)]
    for line in Path(path).read_text().splitlines()[1:]:
        if not line.strip():
            continue
        i, j, k, m, nn = (int(v) for v in line.split(","))
        out[m].append(Triplet(i, j, k, (m, nn)))
    return out
