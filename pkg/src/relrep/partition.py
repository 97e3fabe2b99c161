"""Partition compact groups into K subsets of mutually distant groups.

The objective is minimized over binary group-to-subset matrices ``A`` with fixed column
sums. Each group goes to at most one subset; groups left over when ``K`` does not
divide the group count stay unassigned (the "pool").
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .grouping import GroupSet
from .neighbors import EmbeddedSet, distance_matrix


class InfeasiblePartition(ValueError):
    pass


@dataclass
class PartitionInstance:
    S: np.ndarray
    C: np.ndarray
    K: int
    groups_per_subset: int
    lam1: float = 1.0
    lam2: float = 1.0
    norm_exponent: float = 0.5

    def __post_init__(self):
        self.S = np.asarray(self.S, dtype=np.float64)
        self.C = np.asarray(self.C)
        g = self.S.shape[0]
        if self.S.shape != (g, g):
            raise ValueError("S must be square")
        if not (np.all(np.isfinite(self.S)) and np.all(self.S >= 0)):
            raise ValueError("S must be finite and nonnegative")
        if not np.allclose(self.S, self.S.T, rtol=0, atol=1e-9):
            raise ValueError("S must be symmetric")
        if self.C.shape[0] != g:
            raise ValueError("C must have one row per group")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.lam1 < 0 or self.lam2 < 0:
            raise ValueError("lambda weights must be nonnegative")
        if not self.norm_exponent > 0:
            raise ValueError("norm_exponent must be positive")

    @property
    def num_groups(self) -> int:
        return self.S.shape[0]


@dataclass
class Partition:
    A: np.ndarray
    objective: float
    trace: list[float] = field(default_factory=list)

    @property
    def K(self) -> int:
        return self.A.shape[1]

    @property
    def subsets(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.A[:, k]) for k in range(self.A.shape[1])]

    def subset_samples(self, groups: GroupSet) -> list[np.ndarray]:
        """Sorted sample indices covered by each subset."""
        out = []
        for idx in self.subsets:
            if idx.size == 0:
                out.append(np.zeros(0, dtype=int))
            else:
                out.append(np.flatnonzero(groups.membership[idx].any(axis=0)))
        return out


def build_instance(es: EmbeddedSet, groups: GroupSet, K: int, groups_per_subset: int | None = None,
                   lam1: float = 1.0, lam2: float = 1.0, norm_exponent: float = 0.5,
                   dist: np.ndarray | None = None) -> PartitionInstance:
    g = len(groups)
    if g < K:
        raise InfeasiblePartition(f"only {g} groups for K={K} subsets")
    if dist is None:
        dist = distance_matrix(es.points)
    c = groups.membership.astype(np.float64)
    sizes = c.sum(1)
    # mean over the full cross product G_k x G_l
    S = (c @ dist @ c.T) / np.outer(sizes, sizes)
    S = 0.5 * (S + S.T)
    if groups_per_subset is None:
        groups_per_subset = g // K
    return PartitionInstance(S, groups.membership, K, groups_per_subset, lam1, lam2, norm_exponent)


def _check_A(inst: PartitionInstance, A) -> np.ndarray:
    A = np.asarray(A)
    if A.shape != (inst.num_groups, inst.K):
        raise ValueError(f"A has shape {A.shape}, expected {(inst.num_groups, inst.K)}")
    if not np.all((A == 0) | (A == 1)):
        raise ValueError("A must be binary")
    return A.astype(np.float64)


def objective(inst: PartitionInstance, A) -> float:
    """Value to minimize; lower means more distant groups inside subsets and better spread.

    The within-subset distance term enters negated so that minimizing maximizes the
    distance between groups sharing a subset.
    """
    A = _check_A(inst, A)
    S = inst.S
    within = np.trace(A.T @ S @ A) - np.trace(A.T @ np.diag(np.diag(S)) @ A)
    counts = A.T @ inst.C.astype(np.float64)
    pw = inst.norm_exponent
    spread = np.sum(counts ** pw)
    cover = np.sum(counts.sum(0) ** pw)
    return float(-within - inst.lam1 * spread - inst.lam2 * cover)


class _SearchState:
    """Incremental bookkeeping for swap moves; subset index K denotes the unassigned pool."""

    def __init__(self, inst: PartitionInstance, z: np.ndarray):
        self.inst = inst
        self.K = inst.K
        self.S = inst.S
        self.Sdiag = np.diag(inst.S).copy()
        self.Cf = inst.C.astype(np.float64)
        self.C = sp.csr_matrix(self.Cf)
        self.Cd = inst.C.astype(bool)
        self._cache = {}
        self.members = [np.flatnonzero(row) for row in self.Cd]
        self.z = z.copy()
        onehot = np.zeros((inst.num_groups, self.K + 1))
        onehot[np.arange(z.size), z] = 1.0
        self.M = self.S @ onehot[:, : self.K]
        self.cnt = np.asarray(onehot[:, : self.K].T @ inst.C.astype(np.float64))
        self.tot = self.cnt.sum(0)

    def _f(self, x):
        return np.power(x, self.inst.norm_exponent)

    def lam_delta(self, src: int, dst: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-sample objective change when one group containing the sample moves src -> dst,
        and its sum over every group's members. Cached until the next accepted move."""
        key = (src, dst)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        K, f = self.K, self._f
        n = self.tot.size
        spread = np.zeros(n)
        dtot = 0
        if src < K:
            c = self.cnt[src]
            spread += f(np.maximum(c - 1, 0)) - f(c)
            dtot -= 1
        if dst < K:
            c = self.cnt[dst]
            spread += f(c + 1) - f(c)
            dtot += 1
        cover = f(np.maximum(self.tot + dtot, 0)) - f(self.tot) if dtot else 0.0
        d = -self.inst.lam1 * spread - self.inst.lam2 * cover
        out = (d, self.C @ d)
        self._cache[key] = out
        return out

    def swap_deltas(self, g: int, cands: np.ndarray, b: int) -> np.ndarray:
        """Objective change for swapping g (in its subset a) with each candidate h in subset b."""
        a = self.z[g]
        K, S, M = self.K, self.S, self.M
        gain = np.zeros(cands.size)
        if a < K:
            gain += M[cands, a] - S[cands, g] - (M[g, a] - S[g, g])
        if b < K:
            gain += M[g, b] - S[g, cands] - (M[cands, b] - self.Sdiag[cands])
        d_ab, tot_ab = self.lam_delta(a, b)
        d_ba, tot_ba = self.lam_delta(b, a)
        # samples shared by g and h do not change counts at all: remove both contributions
        idx = self.members[g]
        shared = self.Cf[np.ix_(cands, idx)] @ (d_ab[idx] + d_ba[idx])
        lam = tot_ab[g] + tot_ba[cands] - shared
        return -2.0 * gain + lam

    def apply_swap(self, g: int, h: int):
        a, b = self.z[g], self.z[h]
        K = self.K
        if a < K:
            self.M[:, a] += self.S[:, h] - self.S[:, g]
            self.cnt[a] += self.Cd[h].astype(float) - self.Cd[g]
        if b < K:
            self.M[:, b] += self.S[:, g] - self.S[:, h]
            self.cnt[b] += self.Cd[g].astype(float) - self.Cd[h]
        self.tot = self.cnt.sum(0)
        self.z[g], self.z[h] = b, a
        self._cache.clear()

    def add_deltas(self, cands: np.ndarray, k: int) -> np.ndarray:
        """Objective change for moving each pooled candidate into subset k."""
        return -2.0 * self.M[cands, k] + self.lam_delta(self.K, k)[1][cands]

    def apply_add(self, g: int, k: int):
        self.M[:, k] += self.S[:, g]
        self.cnt[k] += self.Cd[g]
        self.tot = self.cnt.sum(0)
        self.z[g] = k
        self._cache.clear()

    def A(self) -> np.ndarray:
        A = np.zeros((self.z.size, self.K), dtype=np.int8)
        mask = self.z < self.K
        A[np.flatnonzero(mask), self.z[mask]] = 1
        return A


def _greedy_init(inst: PartitionInstance) -> np.ndarray:
    g, K, cap = inst.num_groups, inst.K, inst.groups_per_subset
    st = _SearchState(inst, np.full(g, K))
    fill = np.zeros(K, dtype=int)
    for _ in range(cap * K):
        pool = np.flatnonzero(st.z == K)
        best = (np.inf, -1, -1)
        for k in range(K):
            if fill[k] >= cap:
                continue
            d = st.add_deltas(pool, k)
            j = int(np.argmin(d))
            if d[j] < best[0]:
                best = (d[j], int(pool[j]), k)
        _, gi, k = best
        st.apply_add(gi, k)
        fill[k] += 1
    return st.z


def _random_init(inst: PartitionInstance, rng: np.random.Generator) -> np.ndarray:
    g, K, cap = inst.num_groups, inst.K, inst.groups_per_subset
    z = np.full(g, K)
    perm = rng.permutation(g)
    for k in range(K):
        z[perm[k * cap:(k + 1) * cap]] = k
    return z


def _local_search(inst: PartitionInstance, z: np.ndarray, rng: np.random.Generator,
                  tol: float = 1e-9, max_sweeps: int = 200) -> tuple[np.ndarray, list[float]]:
    st = _SearchState(inst, z)
    value = objective(inst, st.A())
    trace = [value]
    K = inst.K
    for _ in range(max_sweeps):
        improved = False
        for g in rng.permutation(inst.num_groups):
            a = st.z[g]
            best = (-tol, -1)
            for b in range(K + 1):
                if b == a or (a == K and b == K):
                    continue
                cands = np.flatnonzero(st.z == b)
                if cands.size == 0:
                    continue
                d = st.swap_deltas(g, cands, b)
                j = int(np.argmin(d))
                if d[j] < best[0]:
                    best = (float(d[j]), int(cands[j]))
            if best[1] >= 0:
                st.apply_swap(g, best[1])
                value += best[0]
                trace.append(value)
                improved = True
        if not improved:
            break
    return st.z, trace


def solve_partition(inst: PartitionInstance, restarts: int = 4, seed: int = 0) -> Partition:
    """Greedy construction plus swap local search, best of ``restarts`` starts.

    Restart 0 starts from the greedy construction, later restarts from uniformly random
    feasible assignments. Moves swap a group with a group of another subset or with an
    unassigned group, so column sums never change.
    """
    g, K, cap = inst.num_groups, inst.K, inst.groups_per_subset
    if cap < 1 or cap * K > g:
        raise InfeasiblePartition(
            f"groups_per_subset={cap} with K={K} needs {cap * K} groups, have {g}")
    rng = np.random.default_rng(seed)
    best = None
    for r in range(max(1, restarts)):
        z0 = _greedy_init(inst) if r == 0 else _random_init(inst, rng)
        z, trace = _local_search(inst, z0, rng)
        A = np.zeros((g, K), dtype=np.int8)
        mask = z < K
        A[np.flatnonzero(mask), z[mask]] = 1
        value = objective(inst, A)
        if best is None or value < best.objective - 1e-12:
            best = Partition(A, value, trace)
    return best


def save_partition(part: Partition, path) -> None:
    Path(path).write_text("\n".join(" ".join(str(i) for i in s) for s in part.subsets) + "\n")


def load_partition(path, num_groups: int) -> list[np.ndarray]:
    lines = Path(path).read_text().splitlines()
    return [np.array([int(t) for t in ln.split()], dtype=int) for ln in lines]
