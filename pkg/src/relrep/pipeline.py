"""Iterative training loop: group, partition, learn local maps, couple, promote."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import evalreport
from .assign import Assignment, init_assignment, local_update_pass
from .coupling import mine_triplets, triplet_array
from .dataset import Dataset
from .embednet import (EmbedNet, SgdConfig, forward, local_loss, save_checkpoint, train_local,
                       train_refine, triplet_loss)
from .grouping import GroupSet, calibrate_baseline, extract_groups
from .neighbors import EmbeddedSet, distance_matrix
from .partition import Partition, build_instance, solve_partition
from .targets import build_target_space, sample_sphere, slot_members

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    T: int = 4
    K: int = 5
    p: float = 3.0
    h_max: int = 32
    num_random_groups: int = 1000
    D: int = 32
    sigma2: float = 0.0025
    lam1: float = 1.0
    lam2: float = 1.0
    norm_exponent: float = 0.5
    groups_per_subset: int = 0          # 0: floor(|groups| / K)
    partition_restarts: int = 2
    margin: float = 0.2
    transfer_weight: float = 1.0
    dissim_percentile: float = 90.0
    per_anchor_cap: int = 5
    hidden_sizes: tuple[int, ...] = (64, 64)
    warm_start: bool = False            # subset nets start from the global net instead of fresh weights
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs_per_reassign: int = 3
    batch_size: int = 64
    epoch_budget: int = 150
    init_epoch_budget: int = 150
    init_assign_passes: int = 10
    tol: float = 1e-4
    patience: int = 2
    seed: int = 0
    eval_k: int = 10

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        checks = [
            (self.T >= 0, "T must be >= 0"),
            (self.K >= 1, "K must be >= 1"),
            (0 < self.p <= 100, "p must lie in (0, 100]"),
            (self.h_max >= 2, "h_max must be >= 2"),
            (self.num_random_groups >= 100, "num_random_groups must be >= 100"),
            (self.D >= 2, "D must be >= 2"),
            (self.sigma2 >= 0, "sigma2 must be >= 0"),
            (self.lam1 >= 0 and self.lam2 >= 0, "lambda weights must be >= 0"),
            (self.norm_exponent > 0, "norm_exponent must be > 0"),
            (self.groups_per_subset >= 0, "groups_per_subset must be >= 0"),
            (self.partition_restarts >= 1, "partition_restarts must be >= 1"),
            (self.margin >= 0, "margin must be >= 0"),
            (self.transfer_weight >= 0, "transfer_weight must be >= 0"),
            (0 < self.dissim_percentile <= 100, "dissim_percentile must lie in (0, 100]"),
            (self.per_anchor_cap >= 0, "per_anchor_cap must be >= 0"),
            (all(h >= 1 for h in self.hidden_sizes), "hidden sizes must be >= 1"),
            (self.init_epoch_budget >= 0, "init_epoch_budget must be >= 0"),
            (self.init_assign_passes >= 0, "init_assign_passes must be >= 0"),
            (self.eval_k >= 1, "eval_k must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)
        self.sgd()   # validates the optimizer fields

    def sgd(self, budget: int | None = None) -> SgdConfig:
        return SgdConfig(self.learning_rate, self.momentum, self.epochs_per_reassign,
                         self.batch_size, self.epoch_budget if budget is None else budget,
                         self.tol, self.patience)


def _parse_value(kind, raw: str):
    if kind is bool:
        if raw.lower() not in ("0", "1", "true", "false", "yes", "no"):
            raise ValueError(f"not a boolean: {raw!r}")
        return raw.lower() in ("1", "true", "yes")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)


_FIELD_KINDS = {"hidden_sizes": tuple}


def _kind(f: dataclasses.Field):
    if f.name in _FIELD_KINDS:
        return _FIELD_KINDS[f.name]
    return {"int": int, "float": float, "bool": bool}[f.type if isinstance(f.type, str) else f.type.__name__]


def load_config(path, **overrides) -> PipelineConfig:
    """Parse flat ``key = value`` lines; '#' starts a comment; unknown keys are errors."""
    fields = {f.name: f for f in dataclasses.fields(PipelineConfig)}
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, raw = (t.strip() for t in s.split("=", 1))
        if key not in fields:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _parse_value(_kind(fields[key]), raw)
    values.update(overrides)
    return PipelineConfig(**values)


def dump_config(cfg: PipelineConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(t) for t in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def _seed(cfg: PipelineConfig, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, *keys]))


STAGE_INIT, STAGE_GROUPS, STAGE_PARTITION, STAGE_LOCAL, STAGE_TRIPLETS, STAGE_REFINE, STAGE_PROMOTE = range(7)


@dataclass
class IterationState:
    iteration: int
    phi: EmbedNet
    groups: GroupSet | None = None
    partition: Partition | None = None
    subset_nets: list[EmbedNet] = field(default_factory=list)
    promoted: int = -1
    metrics: dict = field(default_factory=dict)
    triplets: list = field(default_factory=list)


def _warm_assignment(net: EmbedNet, x_slots: np.ndarray, targets: np.ndarray, passes: int, rng):
    a = init_assignment(len(x_slots), rng)
    if passes:
        emb = forward(net, x_slots)
        for _ in range(passes):
            a = local_update_pass(emb, targets, a, seed=rng)
    return a


def train_init(dataset: Dataset, cfg: PipelineConfig) -> tuple[EmbedNet, float, float]:
    """phi_init: regress one uniform sphere target per sample over the whole dataset.

    Returns the net together with the local loss before and after training.
    """
    x = dataset.vectors
    net = EmbedNet.init(dataset.dim, cfg.hidden_sizes, cfg.D, _seed(cfg, STAGE_INIT, 0))
    targets = sample_sphere(cfg.D, dataset.n, _seed(cfg, STAGE_INIT, 1))
    rng = _seed(cfg, STAGE_INIT, 2)
    a = _warm_assignment(net, x, targets, cfg.init_assign_passes, rng)
    before = local_loss(net, x, targets, a.perm)
    if cfg.init_epoch_budget == 0:
        return net, before, before
    res = train_local(net, x, targets, a, cfg.sgd(cfg.init_epoch_budget), rng)
    return res.net, before, local_loss(res.net, x, targets, res.assignment.perm)


def _aligned(space) -> Assignment:
    """Each slot starts on the target drawn around its own group's centroid."""
    return Assignment(np.arange(space.num_slots))


def _subset_groups(groups: GroupSet, part: Partition) -> list[list]:
    return [[groups.groups[g] for g in idx] for idx in part.subsets]


def run_iteration(state: IterationState, dataset: Dataset, cfg: PipelineConfig) -> IterationState:
    it = state.iteration + 1
    x = dataset.vectors
    emb = forward(state.phi, x)
    es = EmbeddedSet(emb)
    dist = distance_matrix(emb)

    base = calibrate_baseline(es, cfg.h_max, cfg.num_random_groups, cfg.p,
                              _seed(cfg, STAGE_GROUPS, it), dist=dist)
    groups = extract_groups(es, base, dist)
    if len(groups) == 0:
        raise PipelineError(f"iteration {it}: no compact groups found; "
                            "try a larger percentile p or a less noisy dataset")
    if len(groups) < cfg.K:
        raise PipelineError(f"iteration {it}: only {len(groups)} groups for K={cfg.K}; "
                            "try a larger percentile p, a smaller K or a less noisy dataset")
    inst = build_instance(es, groups, cfg.K, cfg.groups_per_subset or None, cfg.lam1, cfg.lam2,
                          cfg.norm_exponent, dist)
    part = solve_partition(inst, cfg.partition_restarts, _seed(cfg, STAGE_PARTITION, it))
    subsets = _subset_groups(groups, part)
    log.info("iteration %d: %d groups, partition objective %.4g", it, len(groups), part.objective)

    local_nets = []
    for k, sub in enumerate(subsets):
        rng = _seed(cfg, STAGE_LOCAL, it, k)
        x_slots = x[slot_members(sub)]
        space = build_target_space(sub, cfg.D, cfg.sigma2, rng)
        start = state.phi if cfg.warm_start else EmbedNet.init(dataset.dim, cfg.hidden_sizes, cfg.D, rng)
        res = train_local(start, x_slots, space.targets, _aligned(space), cfg.sgd(), rng)
        local_nets.append(res.net)

    triplets = mine_triplets(groups, part, es, cfg.per_anchor_cap, cfg.dissim_percentile,
                             _seed(cfg, STAGE_TRIPLETS, it), dist)
    refined, loc, tra = [], [], []
    for k, sub in enumerate(subsets):
        rng = _seed(cfg, STAGE_REFINE, it, k)
        x_slots = x[slot_members(sub)]
        space = build_target_space(sub, cfg.D, cfg.sigma2, rng)
        tri = triplet_array(triplets[k])
        res = train_refine(local_nets[k], x_slots, space.targets, _aligned(space), x, tri, cfg.sgd(),
                           rng, cfg.margin, cfg.transfer_weight)
        refined.append(res.net)
        loc.append(local_loss(res.net, x_slots, space.targets, res.assignment.perm) / len(x_slots))
        tra.append(triplet_loss(res.net, x, tri, cfg.margin) / len(tri) if len(tri) else 0.0)

    k_star = int(_seed(cfg, STAGE_PROMOTE, it).integers(cfg.K))
    covered = part.subset_samples(groups)
    union = np.zeros(dataset.n, dtype=bool)
    for s in covered:
        union[s] = True
    metrics = {
        "iteration": it,
        "num_groups": len(groups),
        "coverage_overall": float(union.mean()),
        "coverage_per_subset": [s.size / dataset.n for s in covered],
        "coverage_per_subset_mean": float(np.mean([s.size / dataset.n for s in covered])),
        "partition_objective": part.objective,
        "loss_local_mean": float(np.mean(loc)),
        "loss_transfer_mean": float(np.mean(tra)),
        "num_triplets": int(sum(len(t) for t in triplets)),
    }
    if dataset.labels is not None:
        metrics["group_correctness_mean"] = evalreport.mean_group_correctness(groups, dataset.labels)
        metrics["correctness_by_size"] = evalreport.group_correctness(groups, dataset.labels)
    else:
        metrics["group_correctness_mean"] = float("nan")
        metrics["correctness_by_size"] = {}
    return IterationState(it, refined[k_star], groups, part, refined, k_star, metrics, triplets)


METRIC_COLUMNS = ["iteration", "coverage_overall", "coverage_per_subset_mean",
                  "group_correctness_mean", "partition_objective", "loss_local_mean",
                  "loss_transfer_mean"]


@dataclass
class RunResult:
    phi: EmbedNet
    phi_init: EmbedNet
    history: list[IterationState]
    init_loss: tuple[float, float]

    @property
    def metrics(self) -> list[dict]:
        return [s.metrics for s in self.history]


def run(dataset: Dataset, cfg: PipelineConfig, out_dir=None) -> RunResult:
    """phi_init followed by ``cfg.T`` iterations; writes checkpoints and csvs if ``out_dir``."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(dump_config(cfg))
    phi_init, l0, l1 = train_init(dataset, cfg)
    log.info("phi_init: local loss %.4g -> %.4g", l0, l1)
    if out is not None:
        save_checkpoint(phi_init, out / "phi_init.ckpt")
    state = IterationState(0, phi_init)
    history = []
    for _ in range(cfg.T):
        state = run_iteration(state, dataset, cfg)
        history.append(state)
        if out is not None:
            save_checkpoint(state.phi, out / f"phi_iter{state.iteration}.ckpt")
            write_metrics(history, out)
    if out is not None:
        save_checkpoint(state.phi, out / "final.ckpt")
        write_metrics(history, out)
        write_eval(dataset, phi_init, history, cfg, out)
    return RunResult(state.phi, phi_init, history, (l0, l1))


def write_metrics(history: list[IterationState], out: Path) -> None:
    rows = [[s.metrics[c] for c in METRIC_COLUMNS] for s in history]
    evalreport.write_csv(out / "metrics.csv", METRIC_COLUMNS, rows)
    evalreport.write_csv(out / "fig8_coverage.csv", ["iteration", "overall", "per_subset_mean"],
                         [[s.iteration, s.metrics["coverage_overall"],
                           s.metrics["coverage_per_subset_mean"]] for s in history])
    rows7 = [[s.iteration, h, c] for s in history
             for h, c in s.metrics["correctness_by_size"].items()]
    evalreport.write_csv(out / "fig7_correctness.csv", ["iteration", "h", "correctness"], rows7)


def write_eval(dataset: Dataset, phi_init: EmbedNet, history: list[IterationState],
               cfg: PipelineConfig, out: Path) -> None:
    if dataset.labels is None:
        return
    nets = [(0, phi_init)] + [(s.iteration, s.phi) for s in history]
    rows = [[it, evalreport.knn_accuracy(forward(net, dataset.vectors), dataset.labels, cfg.eval_k)]
            for it, net in nets]
    evalreport.write_csv(out / "knn_accuracy.csv", ["iteration", "knn_accuracy"], rows)
