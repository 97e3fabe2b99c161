"""End-to-end acceptance checks. Each test records one PASS/FAIL line (see conftest)."""
import itertools
import time
from pathlib import Path

import numpy as np
import pytest

from relrep.assign import assignment_cost, hungarian_exact, init_assignment, local_update_pass
from relrep.dataset import SyntheticSpec, gen_synthetic
from relrep.embednet import (EmbedNet, forward, local_loss, local_loss_grad, refine_loss_grad,
                             triplet_loss, triplet_loss_grad)
from relrep.evalreport import group_correctness, knn_accuracy
from relrep.grouping import Group, GroupSet, calibrate_baseline, extract_groups, random_groups
from relrep.neighbors import EmbeddedSet, distance_matrix
from relrep.partition import build_instance, objective, solve_partition
from relrep.pipeline import load_config, run
from relrep.targets import (build_target_space, count_modes, distance_distribution_match,
                            pairwise_distance_histogram, uniform_target_space)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SEEDS = range(5)


def synthetic(seed):
    return gen_synthetic(SyntheticSpec(10, 200, 16, 0.3, seed=seed))


def test_partition_matches_enumeration(report):
    hits, elapsed = 0, 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(20, 4))
        members = set()
        while len(members) < 6:
            members.add(tuple(sorted(rng.choice(20, int(rng.integers(2, 6)), replace=False).tolist())))
        gs = GroupSet([Group(m[0], m, 0.0) for m in sorted(members)], 20)
        inst = build_instance(EmbeddedSet(x), gs, 2, 3, rng.uniform(0, 2), rng.uniform(0, 2))
        best = np.inf
        for first in itertools.combinations(range(6), 3):
            A = np.zeros((6, 2), dtype=int)
            A[list(first), 0] = 1
            A[[g for g in range(6) if g not in first], 1] = 1
            best = min(best, objective(inst, A))
        t = time.perf_counter()
        part = solve_partition(inst, restarts=8, seed=seed)
        elapsed += time.perf_counter() - t
        hits += part.objective <= best + 1e-9
    ok = hits >= 95 and elapsed < 5.0
    report(1, ok, f"partition optimum on {hits}/100 instances in {elapsed:.2f}s (need >=95, <5s)")
    assert ok


def test_assignment_close_to_hungarian(report):
    within, elapsed = 0, 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        emb, tg = rng.normal(size=(8, 8)), rng.normal(size=(8, 8))
        cost = np.linalg.norm(emb[:, None] - tg[None], axis=-1)
        best = cost[np.arange(8), hungarian_exact(cost)].sum()
        t = time.perf_counter()
        a = init_assignment(8, rng)
        for _ in range(50):
            a = local_update_pass(emb, tg, a, seed=rng)
        elapsed += time.perf_counter() - t
        assert a.cost == pytest.approx(assignment_cost(emb, tg, a.perm))
        within += a.cost <= 1.1 * best
    ok = within >= 90 and elapsed < 5.0
    report(2, ok, f"within 10% of optimum on {within}/100 instances in {elapsed:.2f}s "
                  "(need >=90, <5s)")
    assert ok


def _central_difference(net, fn, idx, eps=1e-6):
    """Central difference and its round-off resolution (about 10 ulp of f, divided by eps)."""
    flat = net.get_flat()
    probe = net.copy()
    up, down = flat.copy(), flat.copy()
    up[idx] += eps
    down[idx] -= eps
    probe.set_flat(up)
    f_up = fn(probe)
    probe.set_flat(down)
    f_down = fn(probe)
    resolution = 10 * np.finfo(float).eps * max(abs(f_up), abs(f_down), 1.0) / eps
    return (f_up - f_down) / (2 * eps), resolution


def relative_error(analytic, numeric, resolution):
    """None when both values are zero at the oracle's precision (e.g. a dead ReLU unit)."""
    scale = max(abs(analytic), abs(numeric))
    if scale <= resolution:
        return None
    return abs(analytic - numeric) / scale


def test_gradients_match_finite_differences(report):
    worst = {"local": 0.0, "transfer": 0.0, "refine": 0.0}
    checked, flat_zero = 0, 0
    for seed in range(10):
        rng = np.random.default_rng(1000 + seed)
        net = EmbedNet.init(6, [10, 8], 5, seed=rng)
        for b in net.biases:
            b += rng.normal(scale=0.1, size=b.shape)
        x = rng.normal(size=(15, 6))
        t = rng.normal(size=(15, 5))
        perm = rng.permutation(15)
        tri = np.array([rng.choice(15, 3, replace=False) for _ in range(10)])
        cases = {
            "local": (local_loss_grad(net, x, t, perm)[1], lambda n: local_loss(n, x, t, perm)),
            "transfer": (triplet_loss_grad(net, x, tri)[1], lambda n: triplet_loss(n, x, tri)),
            "refine": (refine_loss_grad(net, x, t, perm, x, tri)[1],
                       lambda n: local_loss(n, x, t, perm) + triplet_loss(n, x, tri)),
        }
        params = rng.choice(net.get_flat().size, size=10, replace=False)
        for name, (grads, fn) in cases.items():
            g = np.concatenate([a.ravel() for a in grads])
            for idx in params:
                num, res = _central_difference(net, fn, idx)
                err = relative_error(g[idx], num, res)
                if err is None:
                    flat_zero += 1
                    continue
                checked += 1
                worst[name] = max(worst[name], err)
    ok = max(worst.values()) < 1e-4 and checked >= 200
    report(3, ok, "max relative error " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
           + f" over {checked} partials, {flat_zero} zero at round-off (need <1e-4)")
    assert ok


def test_groups_beat_random_groups(report):
    t = time.perf_counter()
    ds = synthetic(0)
    es = EmbeddedSet(ds.vectors)
    dist = distance_matrix(ds.vectors)
    gs = extract_groups(es, calibrate_baseline(es, 32, 1000, 3.0, 0, dist=dist), dist)
    sizes, counts = np.unique(gs.sizes(), return_counts=True)
    ours = group_correctness(gs, ds.labels)
    margins = {}
    for h, c in zip(sizes, counts):
        if c >= 10:
            rand = group_correctness(random_groups(ds.n, int(h), 1000, seed=1), ds.labels)[int(h)]
            margins[int(h)] = ours[int(h)] - rand
    elapsed = time.perf_counter() - t
    ok = bool(margins) and min(margins.values()) >= 0.15 and elapsed < 30
    detail = ", ".join(f"h={h}: +{m:.3f}" for h, m in margins.items())
    report(4, ok, f"correctness over random ({len(gs)} groups) {detail} in {elapsed:.1f}s "
                  "(need >=+0.15 for every h with >=10 groups, <30s)")
    assert ok


@pytest.fixture(scope="module")
def trend_runs(tmp_path_factory):
    """The K=3 and K=1 runs over five seeds shared by the trend criteria."""
    root = tmp_path_factory.mktemp("trend")
    out = {}
    t = time.perf_counter()
    for seed in SEEDS:
        ds = synthetic(seed)
        res = run(ds, load_config(CONFIGS / "synthetic.cfg", seed=seed), root / f"k3_{seed}")
        out[seed] = {"ds": ds, "k3": res, "dir": root / f"k3_{seed}",
                     "init_knn": knn_accuracy(forward(res.phi_init, ds.vectors), ds.labels, 10),
                     "final_knn": knn_accuracy(forward(res.phi, ds.vectors), ds.labels, 10)}
    elapsed = time.perf_counter() - t
    for seed in SEEDS:
        ds = out[seed]["ds"]
        res1 = run(ds, load_config(CONFIGS / "synthetic_k1.cfg", seed=seed))
        out[seed]["k1_knn"] = knn_accuracy(forward(res1.phi, ds.vectors), ds.labels, 10)
    return out, elapsed


def test_iterations_improve_knn(trend_runs, report):
    runs, elapsed = trend_runs
    gains = [runs[s]["final_knn"] - runs[s]["init_knn"] for s in SEEDS]
    good = sum(g >= 0.10 for g in gains)
    ok = good >= 4 and elapsed < 600
    report(5, ok, "kNN gain per seed " + " ".join(f"{100 * g:+.1f}" for g in gains)
           + f" points; {good}/5 >= +10 in {elapsed:.0f}s (need >=4/5, <600s)")
    assert ok


def _metric(run_dir, column):
    lines = (run_dir / "metrics.csv").read_text().splitlines()
    head = lines[0].split(",")
    return [float(r.split(",")[head.index(column)]) for r in lines[1:]]


def test_correctness_grows(trend_runs, report):
    runs, _ = trend_runs
    vals = [_metric(runs[s]["dir"], "group_correctness_mean") for s in SEEDS]
    good = sum(v[2] >= v[0] for v in vals)
    ok = good >= 4
    report(6, ok, "group correctness it1->it3 " + " ".join(f"{v[0]:.3f}->{v[2]:.3f}" for v in vals)
           + f"; {good}/5 nondecreasing (need >=4/5)")
    assert ok


def test_coverage_grows(trend_runs, report):
    runs, _ = trend_runs
    vals = [_metric(runs[s]["dir"], "coverage_overall") for s in SEEDS]
    good = sum(v[2] >= v[0] for v in vals)
    ok = good >= 4
    report(7, ok, "coverage it1->it3 " + " ".join(f"{v[0]:.3f}->{v[2]:.3f}" for v in vals)
           + f"; {good}/5 nondecreasing (need >=4/5)")
    assert ok


def test_decomposition_beats_single_space(trend_runs, report):
    runs, _ = trend_runs
    pairs = [(runs[s]["k1_knn"], runs[s]["final_knn"]) for s in SEEDS]
    good = sum(k1 < k3 for k1, k3 in pairs)
    ok = good >= 4
    report(9, ok, "final kNN K=1 vs K=3 " + " ".join(f"{a:.3f}/{b:.3f}" for a, b in pairs)
           + f"; K=1 lower on {good}/5 (need >=4/5)")
    assert ok


def test_runs_are_byte_identical(trend_runs, tmp_path, report):
    runs, _ = trend_runs
    first = runs[0]["dir"]
    run(runs[0]["ds"], load_config(CONFIGS / "synthetic.cfg", seed=0), tmp_path)
    names = sorted(p.name for p in first.iterdir() if p.suffix in (".csv", ".ckpt"))
    same = [(first / n).read_bytes() == (tmp_path / n).read_bytes() for n in names]
    ok = "metrics.csv" in names and all(same)
    report(10, ok, f"{sum(same)}/{len(names)} files identical across reruns "
                   "(metrics.csv and every checkpoint)")
    assert ok


def test_hub_targets_are_bimodal_and_match_data(trend_runs, report):
    runs, _ = trend_runs
    modes, scores = [], []
    for seed in SEEDS:
        ds = runs[seed]["ds"]
        emb = forward(runs[seed]["k3"].phi, ds.vectors)
        es = EmbeddedSet(emb)
        dist = distance_matrix(emb)
        gs = extract_groups(es, calibrate_baseline(es, 32, 1000, 3.0, seed, dist=dist), dist)
        pick = np.random.default_rng(seed).choice(len(gs), size=min(50, len(gs)), replace=False)
        sub = [gs.groups[i] for i in np.sort(pick)]
        assert len(sub) >= 20
        space = build_target_space(sub, 16, 0.0025, seed)
        modes.append(count_modes(pairwise_distance_histogram(space.targets, bins=50)[0]))
        hub = distance_distribution_match(es, sub, space, 10000, seed)
        flat = distance_distribution_match(es, sub, uniform_target_space(sub, 16, seed), 10000, seed)
        scores.append((hub, flat))
    good = sum(m == 2 and h < f for m, (h, f) in zip(modes, scores))
    ok = good == 5
    report(8, ok, f"histogram modes {modes}; KS hub/uniform "
           + " ".join(f"{h:.3f}/{f:.3f}" for h, f in scores) + f"; {good}/5 (need 5/5)")
    assert ok
