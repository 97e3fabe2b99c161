"""Compact groups: seed growth under a random-group compactness percentile."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .neighbors import EmbeddedSet, distance_matrix, neighbor_order, percentile

H_MAX_DEFAULT = 32


@dataclass(frozen=True)
class Group:
    seed: int
    members: tuple[int, ...]
    compactness: float

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class GroupSet:
    groups: list[Group]
    n_samples: int
    membership: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        c = np.zeros((len(self.groups), self.n_samples), dtype=np.int8)
        for g, grp in enumerate(self.groups):
            if max(grp.members) >= self.n_samples:
                raise ValueError(f"group {g} references sample >= N={self.n_samples}")
            c[g, list(grp.members)] = 1
        self.membership = c

    def __len__(self):
        return len(self.groups)

    def covered(self) -> np.ndarray:
        """Boolean mask of samples belonging to at least one group."""
        if not self.groups:
            return np.zeros(self.n_samples, dtype=bool)
        return self.membership.any(axis=0)

    def coverage(self) -> float:
        return float(self.covered().mean())

    def sizes(self) -> np.ndarray:
        return np.array([g.size for g in self.groups], dtype=int)


@dataclass(frozen=True)
class CompactnessBaseline:
    thresholds: dict[int, float]
    num_random_groups: int
    p: float

    @property
    def h_max(self) -> int:
        return max(self.thresholds)

    def threshold(self, h: int) -> float:
        return self.thresholds[h]


def compactness(dist: np.ndarray, members) -> float:
    m = np.asarray(members)
    return float(dist[np.ix_(m, m)].max())


def calibrate_baseline(es: EmbeddedSet, h_max: int = H_MAX_DEFAULT, num_random_groups: int = 1000,
                       p: float = 3.0, seed: int = 0, dist: np.ndarray | None = None
                       ) -> CompactnessBaseline:
    n = es.n
    if h_max > n:
        raise ValueError(f"h_max={h_max} exceeds N={n}")
    if h_max < 2:
        raise ValueError("h_max must be >= 2")
    if num_random_groups < 100:
        raise ValueError("num_random_groups must be >= 100")
    if dist is None:
        dist = distance_matrix(es.points)
    rng = np.random.default_rng(seed)
    thresholds = {}
    for h in range(2, h_max + 1):
        # uniform h-subsets: first h entries of independent random permutations
        idx = rng.permuted(np.broadcast_to(np.arange(n), (num_random_groups, n)), axis=1)[:, :h]
        nu = dist[idx[:, :, None], idx[:, None, :]].max(axis=(1, 2))
        thresholds[h] = percentile(nu, p)
    return CompactnessBaseline(thresholds, num_random_groups, p)


def build_group(es: EmbeddedSet, seed_index: int, baseline: CompactnessBaseline,
                dist: np.ndarray | None = None, order: np.ndarray | None = None) -> Group | None:
    """Grow a group from ``seed_index`` by appending its nearest neighbours in order.

    Growth stops at the first neighbour whose addition pushes the compactness above the
    threshold for the new size, or at ``baseline.h_max``. Returns None when even the
    seed's first neighbour fails.
    """
    if dist is None:
        dist = distance_matrix(es.points)
    if order is None:
        row = dist[seed_index]
        order = np.lexsort((np.arange(row.size), row))
        order = order[order != seed_index]
    members = [seed_index]
    nu = 0.0
    for cand in order[: baseline.h_max - 1]:
        new_nu = max(nu, float(dist[cand, members].max()))
        if new_nu > baseline.threshold(len(members) + 1):
            break
        members.append(int(cand))
        nu = new_nu
    if len(members) < 2:
        return None
    return Group(seed_index, tuple(members), nu)


def extract_groups(es: EmbeddedSet, baseline: CompactnessBaseline,
                   dist: np.ndarray | None = None) -> GroupSet:
    n = es.n
    if n < 2:
        return GroupSet([], n)
    if dist is None:
        dist = distance_matrix(es.points)
    order = neighbor_order(dist)
    seen = set()
    groups = []
    for i in range(n):
        g = build_group(es, i, baseline, dist, order[i])
        if g is None:
            continue
        key = frozenset(g.members)
        if key in seen:
            continue
        seen.add(key)
        groups.append(g)
    return GroupSet(groups, n)


def random_groups(n: int, h: int, count: int, seed: int = 0) -> list[tuple[int, ...]]:
    rng = np.random.default_rng(seed)
    return [tuple(int(v) for v in rng.choice(n, size=h, replace=False)) for _ in range(count)]


def save_groupset(gs: GroupSet, path) -> None:
    lines = [f"# N={gs.n_samples}"] + [" ".join(str(m) for m in g.members) for g in gs.groups]
    Path(path).write_text("\n".join(lines) + "\n")


def load_groupset(path, es: EmbeddedSet | None = None) -> GroupSet:
    """Read the one-group-per-line text format; the first member is taken as the seed."""
    n = None
    member_lists = []
    for line in Path(path).read_text().splitlines():
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            if s.startswith("# N="):
                n = int(s[4:])
            continue
        member_lists.append(tuple(int(t) for t in s.split()))
    if n is None:
        n = es.n if es is not None else (max(max(m) for m in member_lists) + 1 if member_lists else 0)
    groups = []
    for members in member_lists:
        nu = compactness(distance_matrix(es.points[list(members)]), range(len(members))) if es is not None else float("nan")
        groups.append(Group(members[0], members, nu))
    return GroupSet(groups, n)
