import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import kendalltau

from aerosim.access import (
    AllocationDecision,
    ClusterPlan,
    allocate_power,
    blocking_pairs,
    cluster_kmeans,
    correlation,
    match_slots,
    plan_access,
    sic_order,
    sic_rates,
    sum_rate,
    user_rates,
)
from aerosim.harness.config import default_config
from aerosim.harness.presets import array_config, random_aircraft_channels


def cn(rng, *shape):
    return (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / np.sqrt(2)


# -- correlation and clustering -------------------------------------------------------


def test_correlation_scaled_copy_is_one():
    h = np.array([1.0, 2j, -0.5])
    assert correlation(h, (2 - 3j) * h) == pytest.approx(1.0, abs=1e-12)


def test_correlation_orthogonal_is_zero():
    assert correlation([1, 1j], [1, -1j]) == pytest.approx(0.0, abs=1e-15)


def test_correlation_hand_toy():
    # |(1,1)^H (1,0)| / (sqrt 2 * 1)
    assert correlation([1, 1], [1, 0]) == pytest.approx(1 / np.sqrt(2), abs=1e-12)


def test_cluster_plan_must_partition():
    with pytest.raises(ValueError):
        ClusterPlan([np.array([0, 1]), np.array([1, 2])])


def test_kmeans_two_identical_pairs():
    rng = np.random.default_rng(0)
    a, b = cn(rng, 8), cn(rng, 8)
    H = np.stack([a, 1j * b, -a, 2 * b])
    plan = cluster_kmeans(H, 2, rng_seed=1)
    assert sorted(sorted(g.tolist()) for g in plan.groups) == [[0, 2], [1, 3]]


def test_kmeans_orthogonal_channels_give_singletons():
    H = np.eye(5, dtype=complex)
    plan = cluster_kmeans(H, 5, rng_seed=2)
    assert sorted(len(g) for g in plan.groups) == [1] * 5


def test_kmeans_reseeds_to_keep_every_cluster_nonempty():
    H = np.tile([1.0, 0.5j, 0.2], (4, 1))
    plan = cluster_kmeans(H, 3, rng_seed=3)
    assert len(plan.groups) == 3 and all(len(g) >= 1 for g in plan.groups)
    assert sorted(np.concatenate(plan.groups).tolist()) == [0, 1, 2, 3]


def partition_cost(U, labels):
    # sum over clusters of |G| - largest eigenvalue of the members' Gram matrix
    cost = 0.0
    for m in set(labels):
        X = U[np.asarray(labels) == m]
        cost += len(X) - np.linalg.eigvalsh(X.conj().T @ X)[-1]
    return cost


def exhaustive_best(U, M):
    best = np.inf
    for labels in itertools.product(range(M), repeat=len(U) - 1):
        labels = (0, *labels)
        if len(set(labels)) == M:
            best = min(best, partition_cost(U, labels))
    return best


def test_kmeans_matches_exhaustive_partition_search():
    hits = 0
    for s in range(50):
        rng = np.random.default_rng(s)
        H = cn(rng, 6, 4)
        U = H / np.linalg.norm(H, axis=1, keepdims=True)
        plan = cluster_kmeans(H, 3, rng_seed=s)
        hits += abs(partition_cost(U, plan.labels()) - exhaustive_best(U, 3)) <= 1e-9
    assert hits >= 45


def test_within_cluster_correlation_exceeds_cross_cluster():
    cfg = default_config()
    arrays = array_config(cfg)
    for s in range(20):
        rng = np.random.default_rng(s)
        H = random_aircraft_channels(rng, arrays, 8, cfg)
        eff = np.stack([np.linalg.svd(h)[0][:, 0].conj() @ h for h in H])
        lab = cluster_kmeans(eff, 4, rng_seed=s).labels()
        within, cross = [], []
        for i, j in itertools.combinations(range(8), 2):
            (within if lab[i] == lab[j] else cross).append(correlation(eff[i], eff[j]))
        assert np.mean(within) >= np.mean(cross)


# -- SIC ---------------------------------------------------------------------------------


def test_sic_order_two_users():
    assert sic_order([0, 1], [4.0, 1.0]).tolist() == [1, 0]


def test_sic_order_ties_by_index():
    assert sic_order([5, 2, 9], [1.0, 1.0, 1.0]).tolist() == [2, 5, 9]


@settings(max_examples=50, deadline=None)
@given(st.permutations(range(6)), st.integers(0, 1000))
def test_sic_order_permutation_invariant(perm, seed):
    gains = np.random.default_rng(seed).integers(0, 4, 6).astype(float)
    members = np.arange(6)
    perm = np.array(perm)
    assert np.array_equal(sic_order(members, gains), sic_order(members[perm], gains[perm]))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 4))
def test_more_cancellation_never_hurts(seed, pos):
    rng = np.random.default_rng(seed)
    g, p = rng.uniform(0.1, 10, 6), rng.uniform(0, 2, 6)
    order = rng.permutation(6)
    later = order.copy()
    later[pos], later[pos + 1] = later[pos + 1], later[pos]
    r_here = sic_rates(g[order], p[order], 0.3)[pos]
    r_later = sic_rates(g[later], p[later], 0.3)[pos + 1]
    assert r_later >= r_here - 1e-12


# -- power allocation ----------------------------------------------------------------


def test_single_user_gets_everything():
    a = allocate_power([2.5], 0.5, 3.0)
    assert a.powers.tolist() == [3.0]
    assert a.sum_rate == pytest.approx(np.log2(1 + 2.5 * 3.0 / 0.5), abs=1e-12)


def two_user_grid(g, nv, budget, r):
    p1 = np.linspace(0, budget, 10_000)
    p2 = budget - p1
    r1 = np.log2(1 + g[0] * p1 / (g[0] * p2 + nv))
    r2 = np.log2(1 + g[1] * p2 / nv)
    ok = (r1 >= r) & (r2 >= r)
    return np.max((r1 + r2)[ok]) if ok.any() else None


def test_two_user_allocation_matches_grid_search():
    done = 0
    rng = np.random.default_rng(0)
    while done < 50:
        g = np.sort(rng.uniform(0.1, 10, 2))
        nv, budget, r = 1.0, rng.uniform(1, 10), rng.uniform(0, 1.0)
        best = two_user_grid(g, nv, budget, r)
        a = allocate_power(g, nv, budget, r)
        if best is None:
            assert not a.feasible
            continue
        assert a.feasible
        assert a.sum_rate >= best - 1e-9
        assert a.sum_rate - best <= 1e-3
        assert a.powers.sum() == pytest.approx(budget, rel=1e-9)
        done += 1


def test_zero_min_rate_gives_all_power_to_strongest():
    a = allocate_power([0.5, 3.0], 1.0, 4.0, 0.0)
    assert a.powers == pytest.approx([0.0, 4.0], abs=1e-9)


def test_infeasible_min_rate_reports_max_common_rate():
    g, nv, budget = np.array([0.2, 1.0]), 1.0, 1.0
    a = allocate_power(g, nv, budget, 5.0)
    assert not a.feasible and a.sum_rate == 0.0
    assert allocate_power(g, nv, budget, a.max_min_rate * (1 - 1e-6)).feasible
    assert not allocate_power(g, nv, budget, a.max_min_rate * (1 + 1e-6) + 1e-9).feasible


def test_allocation_requires_decoding_order():
    with pytest.raises(ValueError):
        allocate_power([2.0, 1.0], 1.0, 1.0)


# -- slot matching ---------------------------------------------------------------------


def brute_force_blocking(assign, R, cap):
    """Independent scan: cluster c and slot s block if both strictly gain (ties by index)."""
    n_c, n_s = R.shape
    out = []
    for c in range(n_c):
        for s in range(n_s):
            if assign[c] == s:
                continue
            c_wants = (R[c, s], -s) > (R[c, assign[c]], -assign[c])
            held = [d for d in range(n_c) if assign[d] == s]
            s_wants = len(held) < cap[s] or any((R[c, s], -c) > (R[d, s], -d) for d in held)
            if c_wants and s_wants:
                out.append((c, s))
    return out


def test_single_cluster_single_slot():
    assert match_slots([[1.3]], [1]).tolist() == [0]


def test_aligned_preferences_give_rate_sorted_assignment():
    R = np.outer([3.0, 1.0, 2.0], [1.0, 3.0, 2.0])
    # best cluster (0) takes the best slot (1), next (2) takes slot 2, last (1) takes slot 0
    assert match_slots(R, [1, 1, 1]).tolist() == [1, 0, 2]


def test_matching_is_stable_and_feasible_up_to_six_by_six():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n_c, n_s = rng.integers(1, 7, 2)
        cap = rng.integers(1, 4, n_s)
        while cap.sum() < n_c:
            cap[rng.integers(n_s)] += 1
        R = rng.uniform(0, 5, (n_c, n_s))
        a = match_slots(R, cap)
        assert np.all(np.bincount(a, minlength=n_s) <= cap)
        assert brute_force_blocking(a, R, cap) == []
        assert blocking_pairs(a, R, cap) == []


def test_blocking_pair_detected_on_bad_assignment():
    R = np.array([[2.0, 1.0], [1.0, 2.0]])
    bad = np.array([1, 0])
    assert set(blocking_pairs(bad, R, [1, 1])) == set(brute_force_blocking(bad, R, [1, 1])) == {(0, 0), (1, 1)}


# -- sum rate ------------------------------------------------------------------------------


def orthogonal_two_cluster_case():
    n_gs = 4
    H = np.zeros((4, 1, n_gs), dtype=complex)
    H[0, 0, 0], H[1, 0, 0] = 2.0, 0.7
    H[2, 0, 1], H[3, 0, 1] = 1.5, 0.4j
    plan = ClusterPlan([np.array([0, 1]), np.array([2, 3])], [np.array([1, 0]), np.array([3, 2])])
    W = np.eye(n_gs, dtype=complex)[:2]
    V = np.ones((4, 1), dtype=complex)
    p = np.array([0.3, 0.7, 0.6, 0.4])
    return H, plan, W, V, p


def test_orthogonal_clusters_decouple():
    H, plan, W, V, p = orthogonal_two_cluster_case()
    d = AllocationDecision(plan, W, V, p, np.array([0, 0]))
    nv = 0.1
    iso = sic_rates([0.49, 4.0], p[[1, 0]], nv).sum() + sic_rates([0.16, 2.25], p[[3, 2]], nv).sum()
    assert sum_rate(d, H, nv) == pytest.approx(iso, rel=1e-12)


def test_zero_power_zero_rate():
    H, plan, W, V, _ = orthogonal_two_cluster_case()
    assert sum_rate(AllocationDecision(plan, W, V, np.zeros(4), np.array([0, 0])), H, 0.1) == 0.0


def monte_carlo_rate(d, H, nv, rng, n=20_000):
    """Empirical-SINR rate proxy from simulated Gaussian symbols with perfect SIC."""
    K = len(H)
    x = np.sqrt(d.powers)[:, None] * cn(rng, K, n)
    total = 0.0
    for m, order in enumerate(d.plan.orders):
        for pos, k in enumerate(order):
            v = d.combiners[k]
            y = np.zeros(n, dtype=complex)
            for mm, grp in enumerate(d.plan.groups):
                if d.slots[mm] != d.slots[m]:
                    continue
                y += (v.conj() @ H[k] @ d.gs_beams[mm]) * x[grp].sum(axis=0)
            y += v.conj() @ (np.sqrt(nv) * cn(rng, len(v), n))
            h = v.conj() @ H[k] @ d.gs_beams[m]
            y -= h * x[order[:pos]].sum(axis=0)  # earlier users decoded and cancelled
            sig = h * x[k]
            total += np.log2(1 + np.mean(np.abs(sig) ** 2) / np.mean(np.abs(y - sig) ** 2))
    return total / d.n_slots


def test_sum_rate_ordering_agrees_with_monte_carlo():
    cfg = default_config()
    arrays = array_config(cfg)
    analytic, proxy = [], []
    for s in range(20):
        rng = np.random.default_rng(s)
        H = random_aircraft_channels(rng, arrays, 4, cfg)
        d = plan_access(H, 0.1, n_clusters=2, rng_seed=s)
        analytic.append(sum_rate(d, H, 0.1))
        proxy.append(monte_carlo_rate(d, H, 0.1, rng))
    assert np.allclose(proxy, analytic, rtol=0.05)
    assert kendalltau(analytic, proxy).statistic >= 0.9


def test_plan_access_decision_invariants():
    cfg = default_config()
    H = random_aircraft_channels(np.random.default_rng(4), array_config(cfg), 6, cfg)
    d = plan_access(H, 0.1, budget=2.0, min_rate=0.2, n_slots=2)
    assert np.all(d.powers >= 0)
    for g in d.plan.groups:
        assert d.powers[g].sum() <= 2.0 + 1e-9
    assert np.all(np.bincount(d.slots, minlength=2) <= 2)
    assert np.allclose(np.linalg.norm(d.gs_beams, axis=1), 1.0)
    assert np.all(user_rates(d, H, 0.1) >= 0)
