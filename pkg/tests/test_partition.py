import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relrep.grouping import Group, GroupSet
from relrep.neighbors import EmbeddedSet, distance_matrix
from relrep.partition import (InfeasiblePartition, PartitionInstance, build_instance,
                              load_partition, objective, save_partition, solve_partition)


def _gs(member_lists, n):
    return GroupSet([Group(m[0], tuple(m), 0.0) for m in member_lists], n)


def random_instance(rng, g=6, n=12, K=2, cap=3, lam1=None, lam2=None):
    x = rng.normal(size=(n, 3))
    groups = []
    while len(groups) < g:
        m = tuple(sorted(rng.choice(n, size=rng.integers(2, 5), replace=False).tolist()))
        if m not in groups:
            groups.append(m)
    lam1 = rng.uniform(0, 1) if lam1 is None else lam1
    lam2 = rng.uniform(0, 1) if lam2 is None else lam2
    return build_instance(EmbeddedSet(x), _gs(groups, n), K, cap, lam1, lam2)


def enumerate_optimum(inst):
    """Exhaustive search over assignments with exactly `cap` groups per subset."""
    g, K, cap = inst.num_groups, inst.K, inst.groups_per_subset
    best = np.inf
    for labels in itertools.product(range(K + 1), repeat=g):
        lab = np.array(labels)
        if any((lab == k).sum() != cap for k in range(K)):
            continue
        A = np.zeros((g, K), dtype=int)
        A[np.flatnonzero(lab < K), lab[lab < K]] = 1
        best = min(best, objective(inst, A))
    return best


def test_constant_cross_distance():
    # a,b at x=0 and c,d at x=2 on a line: every cross distance is 2
    x = np.array([[0.0], [0.0], [2.0], [2.0]])
    inst = build_instance(EmbeddedSet(x), _gs([(0, 1), (2, 3)], 4), 2, 1)
    assert inst.S[0, 1] == pytest.approx(2.0)


def test_S_is_symmetric(rng):
    inst = random_instance(rng, g=8)
    np.testing.assert_array_equal(inst.S, inst.S.T)


def test_S_matches_double_loop(small_blobs):
    x = small_blobs.vectors
    groups = [(0, 1, 2), (3, 40), (50, 51, 52, 53), (90, 10), (100, 101, 102)]
    inst = build_instance(EmbeddedSet(x), _gs(groups, len(x)), 2, 2)
    for k, gk in enumerate(groups):
        for l, gl in enumerate(groups):
            s = 0.0
            for i in gk:
                for j in gl:
                    s += np.sqrt(((x[i] - x[j]) ** 2).sum())
            assert inst.S[k, l] == pytest.approx(s / (len(gk) * len(gl)), abs=1e-9)


def test_too_few_groups():
    with pytest.raises(InfeasiblePartition):
        build_instance(EmbeddedSet(np.zeros((4, 2))), _gs([(0, 1)], 4), 2)


def test_empty_assignment_without_penalties_is_zero(rng):
    inst = random_instance(rng, lam1=0.0, lam2=0.0)
    assert objective(inst, np.zeros((6, 2))) == 0.0


def test_single_group_single_subset_is_zero(rng):
    x = rng.normal(size=(3, 2))
    inst = build_instance(EmbeddedSet(x), _gs([(0, 1, 2)], 3), 1, 1, 0.0, 0.0)
    assert objective(inst, [[1]]) == 0.0


def test_objective_matches_elementwise_expansion(rng):
    inst = random_instance(rng, g=4, K=2, cap=2)
    A = np.array([[1, 0], [0, 1], [1, 0], [0, 1]])
    S, C, pw = inst.S, inst.C.astype(float), inst.norm_exponent
    within = 0.0
    for k in range(2):
        for a in range(4):
            for b in range(4):
                if a != b:
                    within += A[a, k] * A[b, k] * S[a, b]
    spread = sum(sum(A[g, k] * C[g, i] for g in range(4)) ** pw
                 for k in range(2) for i in range(C.shape[1]))
    cover = sum(sum(A[g, k] * C[g, i] for g in range(4) for k in range(2)) ** pw
                for i in range(C.shape[1]))
    expected = -within - inst.lam1 * spread - inst.lam2 * cover
    assert objective(inst, A) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("A", [np.zeros((6, 3)), np.full((6, 2), 2)])
def test_objective_shape_and_binary_checks(rng, A):
    inst = random_instance(rng)
    with pytest.raises(ValueError):
        objective(inst, A)


def test_near_pairs_are_split():
    # groups 0,1 sit together near x=0 and groups 2,3 near x=10
    x = np.array([[0.0], [0.1], [0.2], [0.3], [10.0], [10.1], [10.2], [10.3]])
    gs = _gs([(0, 1), (2, 3), (4, 5), (6, 7)], 8)
    inst = build_instance(EmbeddedSet(x), gs, 2, 2, 0.0, 0.0)
    part = solve_partition(inst, restarts=1, seed=0)
    for sub in part.subsets:
        assert len(set(sub.tolist()) & {0, 1}) == 1
        assert len(set(sub.tolist()) & {2, 3}) == 1


def test_single_group_forced():
    x = np.array([[0.0], [1.0]])
    inst = build_instance(EmbeddedSet(x), _gs([(0, 1)], 2), 1, 1)
    part = solve_partition(inst, 2, 0)
    np.testing.assert_array_equal(part.A, [[1]])


def test_infeasible_capacity(rng):
    inst = random_instance(rng, g=6, K=2, cap=4)
    with pytest.raises(InfeasiblePartition):
        solve_partition(inst)


def test_matches_enumeration_on_small_instances():
    hits = 0
    for seed in range(20):
        inst = random_instance(np.random.default_rng(seed), g=6, K=2, cap=2)
        part = solve_partition(inst, restarts=8, seed=seed)
        hits += part.objective <= enumerate_optimum(inst) + 1e-9
    assert hits >= 19


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 3), st.integers(1, 3))
def test_constraints_hold_and_trace_strictly_decreases(seed, K, cap):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, g=K * cap + int(rng.integers(0, 3)), n=15, K=K, cap=cap)
    part = solve_partition(inst, restarts=2, seed=seed)
    assert np.all(part.A.sum(0) == cap)
    assert np.all(part.A.sum(1) <= 1)
    assert all(b < a for a, b in zip(part.trace, part.trace[1:]))
    assert part.objective == pytest.approx(objective(inst, part.A), abs=1e-9)


def test_solver_is_deterministic(rng):
    inst = random_instance(rng, g=9, K=3, cap=3)
    a, b = solve_partition(inst, 3, 11), solve_partition(inst, 3, 11)
    np.testing.assert_array_equal(a.A, b.A)


def test_instance_validation():
    with pytest.raises(ValueError):
        PartitionInstance(np.array([[0, 1], [2, 0]]), np.ones((2, 3)), 1, 1)
    with pytest.raises(ValueError):
        PartitionInstance(np.zeros((2, 2)), np.ones((2, 3)), 1, 1, lam1=-1)


def test_partition_text_roundtrip(tmp_path, rng):
    inst = random_instance(rng, g=7, K=2, cap=3)
    part = solve_partition(inst, 1, 0)
    save_partition(part, tmp_path / "p.txt")
    back = load_partition(tmp_path / "p.txt", 7)
    assert [b.tolist() for b in back] == [s.tolist() for s in part.subsets]
