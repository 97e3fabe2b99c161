"""Target spaces: group centroids uniform on the unit sphere, Gaussian hubs around them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks
from scipy.stats import ks_2samp

from .grouping import Group, GroupSet
from .neighbors import EmbeddedSet


@dataclass(frozen=True)
class TargetSpace:
    centroids: np.ndarray      # one unit vector per group
    targets: np.ndarray        # one row per (group, member) slot
    owner: np.ndarray          # slot -> group position inside the subset
    sigma2: float

    @property
    def D(self) -> int:
        return self.centroids.shape[1]

    @property
    def num_slots(self) -> int:
        return self.targets.shape[0]


def sample_sphere(D: int, count: int, seed=0) -> np.ndarray:
    """``count`` i.i.d. points uniform on the unit sphere in R^D (normalized Gaussians)."""
    if D < 2:
        raise ValueError("D must be >= 2")
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((count, D))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    # a zero draw has probability zero but would divide by zero
    while np.any(norms == 0):
        bad = norms[:, 0] == 0
        v[bad] = rng.standard_normal((int(bad.sum()), D))
        norms = np.linalg.norm(v, axis=1, keepdims=True)
    return v / norms


def build_target_space(subset: list[Group], D: int, sigma2: float, seed=0) -> TargetSpace:
    if not subset:
        raise ValueError("empty subset")
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    rng = np.random.default_rng(seed)
    centroids = sample_sphere(D, len(subset), rng)
    owner = np.repeat(np.arange(len(subset)), [g.size for g in subset])
    noise = rng.standard_normal((owner.size, D)) * np.sqrt(sigma2)
    return TargetSpace(centroids, centroids[owner] + noise, owner, float(sigma2))


def uniform_target_space(subset: list[Group], D: int, seed=0) -> TargetSpace:
    """Data-independent baseline: every slot gets its own uniform sphere point."""
    owner = np.repeat(np.arange(len(subset)), [g.size for g in subset])
    pts = sample_sphere(D, owner.size, seed)
    return TargetSpace(pts, pts, owner, 0.0)


def slot_members(subset: list[Group]) -> np.ndarray:
    """Sample index of every (group, member) slot, in target-space order."""
    return np.concatenate([np.asarray(g.members, dtype=int) for g in subset])


def sample_slot_pairs(owner: np.ndarray, n_pairs: int, rng: np.random.Generator
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Half intra-group slot pairs, half inter-group slot pairs (both drawn uniformly)."""
    n = owner.size
    starts = np.r_[0, np.flatnonzero(np.diff(owner)) + 1]
    sizes = np.diff(np.r_[starts, n])
    half = n_pairs // 2
    # intra: pick a group weighted by its number of pairs, then two distinct members
    weights = sizes * (sizes - 1) / 2.0
    if weights.sum() > 0:
        grp = rng.choice(sizes.size, size=half, p=weights / weights.sum())
        a = rng.integers(0, sizes[grp])
        b = rng.integers(0, sizes[grp] - 1)
        b = b + (b >= a)
        intra = (starts[grp] + a, starts[grp] + b)
    else:
        intra = (np.zeros(0, int), np.zeros(0, int))
    ia, ib = [], []
    need = n_pairs - intra[0].size
    while need > 0 and np.unique(owner).size > 1:
        a = rng.integers(0, n, size=2 * need)
        b = rng.integers(0, n, size=2 * need)
        keep = owner[a] != owner[b]
        ia.append(a[keep][:need])
        ib.append(b[keep][:need])
        need -= ia[-1].size
    inter = (np.concatenate(ia) if ia else np.zeros(0, int),
             np.concatenate(ib) if ib else np.zeros(0, int))
    return np.r_[intra[0], inter[0]], np.r_[intra[1], inter[1]]


def distance_distribution_match(es: EmbeddedSet, groups: GroupSet | list[Group], space: TargetSpace,
                                n_pairs: int = 10000, seed=0, return_samples: bool = False):
    """Kolmogorov-Smirnov distance between data and target pairwise-distance distributions.

    Both sides are evaluated on the same slot pairs (half within a group, half across
    groups) and each distance sample is scaled to unit mean before comparison.
    """
    subset = groups.groups if isinstance(groups, GroupSet) else list(groups)
    if not subset:
        raise ValueError("no groups")
    if space.num_slots < 2:
        raise ValueError("need at least 2 targets")
    members = slot_members(subset)
    if members.size != space.num_slots:
        raise ValueError("target space does not match the groups")
    rng = np.random.default_rng(seed)
    a, b = sample_slot_pairs(space.owner, n_pairs, rng)
    x = es.points
    d_data = np.linalg.norm(x[members[a]] - x[members[b]], axis=1)
    d_tgt = np.linalg.norm(space.targets[a] - space.targets[b], axis=1)
    d_data = d_data / d_data.mean() if d_data.mean() > 0 else d_data
    d_tgt = d_tgt / d_tgt.mean() if d_tgt.mean() > 0 else d_tgt
    score = float(ks_2samp(d_data, d_tgt).statistic)
    if return_samples:
        return score, d_data, d_tgt
    return score


def pairwise_distance_histogram(points: np.ndarray, bins: int = 50, chunk: int = 512
                                ) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of all N(N-1)/2 pairwise distances, accumulated in row chunks."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    sq = (pts * pts).sum(1)

    def rows(lo):
        hi = min(n, lo + chunk)
        d2 = sq[lo:hi, None] + sq[None, :] - 2.0 * pts[lo:hi] @ pts.T
        d = np.sqrt(np.maximum(d2, 0.0))
        mask = np.arange(n)[None, :] > np.arange(lo, hi)[:, None]
        return d[mask]

    top = 0.0
    for lo in range(0, n, chunk):
        r = rows(lo)
        if r.size:
            top = max(top, float(r.max()))
    edges = np.linspace(0.0, top, bins + 1)
    counts = np.zeros(bins, dtype=np.int64)
    for lo in range(0, n, chunk):
        counts += np.histogram(rows(lo), bins=edges)[0]
    return counts, edges


def count_modes(counts: np.ndarray, z: float = 3.0) -> int:
    """Number of histogram peaks that rise above counting noise.

    A peak counts when its prominence exceeds ``z`` Poisson standard deviations of its
    own height, which discards single-count bumps in sparse tails.
    """
    c = np.r_[0, np.asarray(counts, dtype=float), 0]
    peaks, props = find_peaks(c, prominence=0)
    keep = props["prominences"] > z * np.sqrt(c[peaks])
    return int(keep.sum())
