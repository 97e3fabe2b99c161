"""Feed-forward embedding network trained by SGD with momentum.

``local`` loss: squared L2 distance of each slot's embedding to its assigned target.
``transfer`` loss: hinge on plain L2 distances over (anchor, positive, negative) triplets.
"""
from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assign import Assignment, local_update_pass

DEFAULT_MARGIN = 0.2
_EPS = 1e-12


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class EmbedNet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(cls, d_in: int, hidden_sizes, D: int, seed=0) -> "EmbedNet":
        rng = np.random.default_rng(seed)
        sizes = [d_in, *hidden_sizes, D]
        ws, bs = [], []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = 2.0 if i < len(sizes) - 2 else 1.0
            ws.append(rng.standard_normal((a, b)) * np.sqrt(gain / a))
            bs.append(np.zeros(b))
        return cls(ws, bs)

    @classmethod
    def zeros(cls, d_in: int, hidden_sizes, D: int) -> "EmbedNet":
        sizes = [d_in, *hidden_sizes, D]
        return cls([np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(b) for b in sizes[1:]])

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def D(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def shapes(self) -> list[tuple[int, ...]]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w.shape, b.shape]
        return out

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, flat: np.ndarray) -> None:
        pos = 0
        for p in self.params():
            p[...] = flat[pos:pos + p.size].reshape(p.shape)
            pos += p.size

    def copy(self) -> "EmbedNet":
        return copy.deepcopy(self)

    def checkpoint_bytes(self) -> bytes:
        manifest = "RRNET " + " ".join("x".join(str(s) for s in shp) for shp in self.shapes) + "\n"
        return manifest.encode() + b"".join(p.astype("<f4").tobytes() for p in self.params())

    def digest(self) -> str:
        return hashlib.sha256(self.checkpoint_bytes()).hexdigest()


def save_checkpoint(net: EmbedNet, path) -> None:
    Path(path).write_bytes(net.checkpoint_bytes())


def load_checkpoint(path) -> EmbedNet:
    data = Path(path).read_bytes()
    nl = data.index(b"\n")
    head = data[:nl].decode().split()
    if not head or head[0] != "RRNET":
        raise ValueError("not a relrep checkpoint")
    shapes = [tuple(int(v) for v in tok.split("x")) for tok in head[1:]]
    pos = nl + 1
    arrays = []
    for shp in shapes:
        size = int(np.prod(shp))
        arrays.append(np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shp).astype(np.float64))
        pos += 4 * size
    if pos != len(data):
        raise ValueError("checkpoint size does not match its manifest")
    return EmbedNet(arrays[0::2], arrays[1::2])


def _forward_cache(net: EmbedNet, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def _backward(net: EmbedNet, acts: list[np.ndarray], grad_out: np.ndarray) -> list[np.ndarray]:
    grads = [None] * (2 * len(net.weights))
    g = grad_out
    for i in range(len(net.weights) - 1, -1, -1):
        grads[2 * i] = acts[i].T @ g
        grads[2 * i + 1] = g.sum(0)
        if i > 0:
            g = (g @ net.weights[i].T) * (acts[i] > 0)
    return grads


def forward(net: EmbedNet, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None] if single else x
    if xb.shape[1] != net.d_in:
        raise ValueError(f"input dimension {xb.shape[1]} != {net.d_in}")
    out = _forward_cache(net, xb)[-1]
    return out[0] if single else out


def _check_local(x_slots, targets, perm):
    if x_slots.shape[0] != perm.size or targets.shape[0] != perm.size:
        raise ValueError(f"misaligned sizes: {x_slots.shape[0]} slots, {targets.shape[0]} targets, "
                         f"{perm.size} assignments")


def local_loss(net: EmbedNet, x_slots, targets, perm) -> float:
    x_slots = np.asarray(x_slots, dtype=np.float64)
    perm = np.asarray(perm)
    _check_local(x_slots, targets, perm)
    r = forward(net, x_slots) - targets[perm]
    return float((r * r).sum())


def local_loss_grad(net: EmbedNet, x_slots, targets, perm, check: bool = True
                    ) -> tuple[float, list[np.ndarray]]:
    perm = np.asarray(perm)
    if check:
        _check_local(x_slots, targets, perm)
    acts = _forward_cache(net, np.asarray(x_slots, dtype=np.float64))
    r = acts[-1] - targets[perm]
    return float((r * r).sum()), _backward(net, acts, 2.0 * r)


def _triplet_terms(emb_i, emb_j, emb_k, margin):
    dij = np.sqrt(((emb_i - emb_j) ** 2).sum(1))
    dik = np.sqrt(((emb_i - emb_k) ** 2).sum(1))
    return dij, dik, dij - dik + margin


def triplet_loss(net: EmbedNet, x, triplets, margin: float = DEFAULT_MARGIN) -> float:
    tri = np.asarray(triplets, dtype=int).reshape(-1, 3)
    if tri.size == 0:
        return 0.0
    e = forward(net, np.asarray(x, dtype=np.float64)[tri.ravel()]).reshape(len(tri), 3, -1)
    _, _, h = _triplet_terms(e[:, 0], e[:, 1], e[:, 2], margin)
    return float(np.maximum(h, 0.0).sum())


def triplet_loss_grad(net: EmbedNet, x, triplets, margin: float = DEFAULT_MARGIN
                      ) -> tuple[float, list[np.ndarray]]:
    tri = np.asarray(triplets, dtype=int).reshape(-1, 3)
    if tri.size == 0:
        return 0.0, [np.zeros_like(p) for p in net.params()]
    acts = _forward_cache(net, np.asarray(x, dtype=np.float64)[tri.ravel()])
    e = acts[-1].reshape(len(tri), 3, -1)
    dij, dik, h = _triplet_terms(e[:, 0], e[:, 1], e[:, 2], margin)
    active = (h > 0)[:, None]
    uij = (e[:, 0] - e[:, 1]) / np.maximum(dij, _EPS)[:, None]
    uik = (e[:, 0] - e[:, 2]) / np.maximum(dik, _EPS)[:, None]
    g = np.zeros_like(e)
    g[:, 0] = active * (uij - uik)
    g[:, 1] = active * -uij
    g[:, 2] = active * uik
    return float(np.maximum(h, 0.0).sum()), _backward(net, acts, g.reshape(acts[-1].shape))


def refine_loss_grad(net: EmbedNet, x_slots, targets, perm, x, triplets,
                     margin: float = DEFAULT_MARGIN, transfer_weight: float = 1.0):
    l1, g1 = local_loss_grad(net, x_slots, targets, perm)
    l2, g2 = triplet_loss_grad(net, x, triplets, margin)
    return l1 + transfer_weight * l2, [a + transfer_weight * b for a, b in zip(g1, g2)]


@dataclass
class SgdConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs_per_reassign: int = 3
    batch_size: int = 64
    epoch_budget: int = 150
    tol: float = 1e-4
    patience: int = 2

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be nonnegative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.epochs_per_reassign < 1:
            raise ValueError("epochs_per_reassign must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epoch_budget < 0:
            raise ValueError("epoch_budget must be >= 0")


@dataclass
class TrainResult:
    net: EmbedNet
    assignment: Assignment
    epoch_losses: list[float] = field(default_factory=list)
    transfer_losses: list[float] = field(default_factory=list)


def _train(net: EmbedNet, x_slots: np.ndarray, targets: np.ndarray, assignment: Assignment,
           cfg: SgdConfig, seed, x_all: np.ndarray | None = None, triplets=None,
           margin: float = DEFAULT_MARGIN, transfer_weight: float = 1.0) -> TrainResult:
    rng = np.random.default_rng(seed)
    net = net.copy()
    x_slots = np.asarray(x_slots, dtype=np.float64)
    n = x_slots.shape[0]
    _check_local(x_slots, targets, assignment.perm)
    tri = np.zeros((0, 3), dtype=int) if triplets is None else np.asarray(triplets, dtype=int).reshape(-1, 3)
    params = net.params()
    velocity = [np.zeros_like(p) for p in params]
    bs = min(cfg.batch_size, n)
    steps = -(-n // bs)
    tb = -(-len(tri) // steps) if len(tri) else 0
    perm = assignment.perm.copy()
    losses, tlosses = [], []
    epoch = 0
    best_round, stale = np.inf, 0
    while epoch < cfg.epoch_budget:
        if epoch > 0:
            emb = forward(net, x_slots)
            perm = local_update_pass(emb, targets, Assignment(perm), seed=rng).perm
        for _ in range(min(cfg.epochs_per_reassign, cfg.epoch_budget - epoch)):
            order = rng.permutation(n)
            torder = rng.permutation(len(tri)) if len(tri) else None
            total, ttotal = 0.0, 0.0
            for s in range(steps):
                idx = order[s * bs:(s + 1) * bs]
                loss, grads = local_loss_grad(net, x_slots[idx], targets, perm[idx], check=False)
                total += loss
                if tb:
                    tid = torder[s * tb:(s + 1) * tb]
                    if tid.size:
                        tl, tg = triplet_loss_grad(net, x_all, tri[tid], margin)
                        ttotal += tl
                        grads = [g + transfer_weight * t for g, t in zip(grads, tg)]
                scale = cfg.learning_rate / idx.size
                for p, v, g in zip(params, velocity, grads):
                    v *= cfg.momentum
                    v -= scale * g
                    p += v
            if not (np.isfinite(total) and np.isfinite(ttotal)):
                raise TrainingDiverged(f"loss became non-finite at epoch {epoch} "
                                       f"(lr={cfg.learning_rate}, momentum={cfg.momentum})")
            losses.append(total)
            tlosses.append(ttotal)
            epoch += 1
        round_loss = losses[-1] + transfer_weight * tlosses[-1]
        if round_loss < best_round * (1.0 - cfg.tol):
            best_round, stale = round_loss, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    emb = forward(net, x_slots)
    a = Assignment(perm, float(np.linalg.norm(emb - targets[perm], axis=1).sum()))
    return TrainResult(net, a, losses, tlosses)


def train_local(net: EmbedNet, x_slots, targets, assignment: Assignment, cfg: SgdConfig,
                seed=0) -> TrainResult:
    """Alternate ``epochs_per_reassign`` SGD epochs with a stochastic reassignment pass.

    Regression runs first so that a caller-supplied initial assignment is used as given.

    Stops after ``epoch_budget`` epochs or once ``patience`` consecutive rounds fail to
    lower the loss by a relative ``tol``.
    """
    return _train(net, x_slots, targets, assignment, cfg, seed)


def train_refine(net: EmbedNet, x_slots, targets, assignment: Assignment, x_all, triplets,
                 cfg: SgdConfig, seed=0, margin: float = DEFAULT_MARGIN,
                 transfer_weight: float = 1.0) -> TrainResult:
    return _train(net, x_slots, targets, assignment, cfg, seed, x_all, triplets, margin,
                  transfer_weight)
