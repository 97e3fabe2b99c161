"""Slot-to-target assignment kept as a permutation and improved by random pair swaps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Assignment:
    perm: np.ndarray   # slot -> target index
    cost: float = float("nan")

    def is_bijection(self) -> bool:
        n = self.perm.size
        return bool(np.array_equal(np.sort(self.perm), np.arange(n)))


def assignment_cost(embeddings: np.ndarray, targets: np.ndarray, perm: np.ndarray) -> float:
    return float(np.linalg.norm(embeddings - targets[perm], axis=1).sum())


def init_assignment(num_slots: int, seed=0) -> Assignment:
    if num_slots < 1:
        raise ValueError("num_slots must be >= 1")
    rng = np.random.default_rng(seed)
    return Assignment(rng.permutation(num_slots))


def local_update_pass(embeddings: np.ndarray, targets: np.ndarray, a: Assignment,
                      num_proposals: int | None = None, seed=0) -> Assignment:
    """Propose random slot-pair swaps and keep those that strictly lower the pair's cost.

    Proposals are generated in rounds of disjoint pairs (a random perfect matching of the
    slots), so the swaps inside one round are independent and are evaluated together.
    Each proposal is marginally uniform over unordered slot pairs.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    tg = np.asarray(targets, dtype=np.float64)
    n = a.perm.size
    if emb.shape[0] != n or tg.shape[0] != n:
        raise ValueError(f"size mismatch: {emb.shape[0]} embeddings, {tg.shape[0]} targets, {n} slots")
    if emb.shape[1] != tg.shape[1]:
        raise ValueError("embedding and target dimension differ")
    if num_proposals is None:
        num_proposals = 2 * n
    rng = np.random.default_rng(seed)
    perm = a.perm.copy()
    if n < 2:
        return Assignment(perm, assignment_cost(emb, tg, perm))
    left = num_proposals
    while left > 0:
        order = rng.permutation(n)
        m = min(n // 2, left)
        i, j = order[0:2 * m:2], order[1:2 * m:2]
        cur = (np.linalg.norm(emb[i] - tg[perm[i]], axis=1)
               + np.linalg.norm(emb[j] - tg[perm[j]], axis=1))
        alt = (np.linalg.norm(emb[i] - tg[perm[j]], axis=1)
               + np.linalg.norm(emb[j] - tg[perm[i]], axis=1))
        take = alt < cur
        ti, tj = i[take], j[take]
        perm[ti], perm[tj] = perm[tj], perm[ti].copy()
        left -= m
    return Assignment(perm, assignment_cost(emb, tg, perm))


def hungarian_exact(cost_matrix) -> np.ndarray:
    """Optimal assignment row -> column by shortest augmenting paths (O(n^3)).

    Kept for verification of the stochastic updates; refuses n > 64.
    """
    c = np.asarray(cost_matrix, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("cost matrix must be square")
    n = c.shape[0]
    if n > 64:
        raise ValueError("hungarian_exact is limited to n <= 64")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix must be finite")
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)     # p[j]: row matched to column j (1-based, 0 = free)
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta, j1 = np.inf, 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = c[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta, j1 = minv[j], j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    row_to_col = np.zeros(n, dtype=int)
    for j in range(1, n + 1):
        row_to_col[p[j] - 1] = j - 1
    return row_to_col
