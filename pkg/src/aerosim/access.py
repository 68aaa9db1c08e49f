"""Joint spatial and power-domain multiple access for several aircraft.

Aircraft with strongly correlated channels share a GS beam and are separated
in the power domain by successive interference cancellation (SIC); different
clusters are separated spatially and by time slots.  The pieces are:

* spherical K-means on channel directions, with similarity ``|h_i^H h_j|^2``
  after normalisation, so the clustering is blind to per-aircraft phase;
* SIC ordering by the equivalent scalar gain through the beams;
* sum-rate power allocation with per-user minimum rates;
* deferred-acceptance matching of clusters to capacity-limited slots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq


def correlation(h_i, h_j) -> float:
    """``|h_i^H h_j| / (||h_i|| ||h_j||)``, in [0, 1]."""
    a = np.asarray(h_i, dtype=complex).ravel()
    b = np.asarray(h_j, dtype=complex).ravel()
    den = np.linalg.norm(a) * np.linalg.norm(b)
    if den == 0:
        raise ValueError("correlation of a zero vector is undefined")
    return float(min(abs(np.vdot(a, b)) / den, 1.0))


def phase_align(H) -> np.ndarray:
    """Unit-normalise each row and rotate its largest-magnitude entry to the positive real axis."""
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    norms = np.linalg.norm(H, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("channels must be nonzero")
    U = H / norms
    ref = U[np.arange(len(U)), np.argmax(np.abs(U), axis=1)]
    return U * (ref.conj() / np.abs(ref))[:, None]


@dataclass
class ClusterPlan:
    groups: list  # list of int arrays, aircraft indices per cluster
    orders: list | None = None  # SIC decoding order per cluster, weakest first

    def __post_init__(self):
        self.groups = [np.asarray(g, dtype=int) for g in self.groups]
        allm = np.concatenate(self.groups) if self.groups else np.zeros(0, int)
        if len(np.unique(allm)) != len(allm):
            raise ValueError("clusters must be disjoint")
        if len(allm) and not np.array_equal(np.sort(allm), np.arange(len(allm))):
            raise ValueError("clusters must cover aircraft 0..K-1")
        if self.orders is not None:
            self.orders = [np.asarray(o, dtype=int) for o in self.orders]
            for g, o in zip(self.groups, self.orders, strict=True):
                if not np.array_equal(np.sort(g), np.sort(o)):
                    raise ValueError("each order must permute its cluster")

    @property
    def n_aircraft(self) -> int:
        return int(sum(len(g) for g in self.groups))

    def labels(self) -> np.ndarray:
        lab = np.empty(self.n_aircraft, dtype=int)
        for m, g in enumerate(self.groups):
            lab[g] = m
        return lab


def _principal(X: np.ndarray) -> tuple[np.ndarray, float]:
    """Leading eigenvector and eigenvalue of ``sum_k x_k x_k^H`` for rows ``x_k``."""
    w, V = np.linalg.eigh(X.T @ X.conj())
    c = V[:, -1]
    i = np.argmax(np.abs(c))
    return c * (abs(c[i]) / c[i]), float(w[-1])


def within_cluster_cost(H, labels) -> float:
    """``sum_m (|G_m| - lambda_max(sum_{k in G_m} u_k u_k^H))`` over unit rows ``u_k``.

    Equals the summed ``1 - |c_m^H u_k|^2`` at the best centroid of every cluster.
    """
    U = phase_align(H)
    labels = np.asarray(labels)
    cost = 0.0
    for m in np.unique(labels):
        X = U[labels == m]
        cost += len(X) - _principal(X)[1]
    return float(cost)


def _refine(U: np.ndarray, labels: np.ndarray, n_clusters: int, max_passes: int = 20) -> np.ndarray:
    """First-variation passes: move single aircraft while the cost strictly drops."""
    labels = labels.copy()
    gain = [_principal(U[labels == m])[1] for m in range(n_clusters)]
    for _ in range(max_passes):
        moved = False
        for k in range(len(U)):
            a = labels[k]
            if np.count_nonzero(labels == a) == 1:
                continue
            rest = _principal(U[(labels == a) & (np.arange(len(U)) != k)])[1]
            for m in range(n_clusters):
                if m == a:
                    continue
                joined = _principal(np.vstack([U[labels == m], U[k]]))[1]
                # cost = sum(|G|) - sum(lambda_max); sizes are conserved by a move
                if rest + joined > gain[a] + gain[m] + 1e-12:
                    labels[k] = m
                    gain[a], gain[m] = rest, joined
                    moved = True
                    break
        if not moved:
            break
    return labels


def cluster_kmeans(H, n_clusters: int, max_iters: int = 100, rng_seed=0, n_init: int = 8) -> ClusterPlan:
    """Group aircraft whose channel directions are strongly correlated.

    Parameters
    ----------
    H : array_like, shape (K, n)
        One effective channel vector per aircraft.
    n_clusters : int
        Number of clusters ``M``, ``1 <= M <= K``.
    n_init : int
        Independent k-means++ seedings; the lowest within-cluster cost wins.

    Each iteration assigns every aircraft to the centroid with the largest
    ``|c^H u|^2`` and replaces each centroid by the principal direction of its
    members, so one iteration costs O(K).  An emptied cluster is re-seeded
    with the aircraft farthest from its own centroid.  Converged labels are
    then polished by single-aircraft moves that lower the within-cluster cost.
    """
    U = phase_align(H)
    K = len(U)
    if not 1 <= n_clusters <= K:
        raise ValueError("need 1 <= n_clusters <= number of aircraft")
    rng = np.random.default_rng(rng_seed)
    best = None
    for _ in range(max(n_init, 1)):
        # k-means++ seeding on the dissimilarity 1 - |c^H u|^2
        C = [U[rng.integers(K)]]
        for _ in range(1, n_clusters):
            d = 1.0 - np.max(np.abs(U.conj() @ np.array(C).T) ** 2, axis=1)
            d = np.clip(d, 0.0, None)
            p = d / d.sum() if d.sum() > 0 else np.full(K, 1.0 / K)
            C.append(U[rng.choice(K, p=p)])
        C = np.array(C)
        labels = np.full(K, -1)
        for _ in range(max_iters):
            sim = np.abs(U.conj() @ C.T) ** 2  # (K, M)
            new = np.argmax(sim, axis=1)
            for m in range(n_clusters):
                if not np.any(new == m):
                    own = sim[np.arange(K), new]
                    # take the worst-served aircraft from a cluster that can spare it
                    counts = np.bincount(new, minlength=n_clusters)
                    cand = np.flatnonzero(counts[new] > 1)
                    j = cand[np.argmin(own[cand])]
                    new[j] = m
                    C[m] = U[j]
            if np.array_equal(new, labels):
                break
            labels = new
            for m in range(n_clusters):
                C[m] = _principal(U[labels == m])[0]
        labels = _refine(U, labels, n_clusters)
        cost = within_cluster_cost(U, labels)
        if best is None or cost < best[0] - 1e-12:
            best = (cost, labels.copy())
    labels = best[1]
    # Canonical cluster numbering: by smallest member index.
    firsts = [np.flatnonzero(labels == m)[0] for m in range(n_clusters)]
    groups = [np.flatnonzero(labels == m) for m in np.argsort(firsts)]
    return ClusterPlan(groups)


def equivalent_gain(H_k, w_gs, w_ac) -> float:
    """``|w_ac^H H_k w_gs|^2`` for one aircraft."""
    return float(abs(np.vdot(np.asarray(w_ac), np.asarray(H_k) @ np.asarray(w_gs))) ** 2)


def sic_order(members, gains) -> np.ndarray:
    """SIC decoding order inside a cluster, weakest equivalent gain first.

    A user decodes and cancels every user ahead of it in this order and
    treats the ones behind it as interference, so the strongest user is
    decoded last and sees no intra-cluster interference.  Equal gains are
    broken by aircraft index (lower index decoded first).
    """
    members = np.asarray(members, dtype=int)
    gains = np.asarray(gains, dtype=float)
    if members.shape != gains.shape:
        raise ValueError("one gain per member")
    return members[np.lexsort((members, gains))]


def sic_rates(gains, powers, noise_var) -> np.ndarray:
    """Per-user rates (bits/s/Hz) with users listed in decoding order.

    User ``i`` sees interference from users ``i+1, ...`` only.  ``noise_var``
    may be a scalar or one value per user.
    """
    g = np.asarray(gains, dtype=float)
    p = np.asarray(powers, dtype=float)
    tail = np.concatenate([np.cumsum(p[::-1])[::-1][1:], [0.0]])
    return np.log2(1.0 + g * p / (g * tail + noise_var))


@dataclass
class PowerAllocation:
    powers: np.ndarray  # in decoding order
    rates: np.ndarray
    feasible: bool
    max_min_rate: float  # largest common minimum rate achievable with the budget

    @property
    def sum_rate(self) -> float:
        return float(np.sum(self.rates)) if self.feasible else 0.0


def _binding_powers(g, noise_var, budget, min_rate):
    """Powers that meet each weaker user's minimum rate exactly, by bisection.

    Returns ``None`` when the budget runs out before the strongest user.
    """
    n = len(g)
    p = np.zeros(n)
    left = budget  # power still to share among users i..n-1
    for i in range(n - 1):

        def short(pi, i=i, left=left):
            return np.log2(1.0 + g[i] * pi / (g[i] * (left - pi) + noise_var)) - min_rate[i]

        if min_rate[i] <= 0:
            continue
        if short(left) < 0:
            return None
        p[i] = brentq(short, 0.0, left, xtol=1e-14 * max(budget, 1.0), rtol=1e-15)
        left -= p[i]
    p[-1] = left
    if np.log2(1.0 + g[-1] * p[-1] / noise_var) < min_rate[-1] - 1e-12:
        return None
    return p


def allocate_power(gains, noise_var: float, budget: float, min_rate=0.0) -> PowerAllocation:
    """Maximise the SIC sum rate of one cluster under per-user minimum rates.

    Parameters
    ----------
    gains : array_like
        Equivalent gains in decoding order (ascending).
    min_rate : float or array_like
        Minimum rate (bits/s/Hz) per user.

    With gains ascending the optimum gives every weaker user exactly the
    power of its minimum rate and the remainder to the strongest user; each
    binding power is found by bisection.
    """
    g = np.asarray(gains, dtype=float)
    if g.ndim != 1 or len(g) == 0:
        raise ValueError("need a non-empty 1-D gain vector")
    if np.any(np.diff(g) < 0):
        raise ValueError("gains must be in decoding order (ascending)")
    if noise_var <= 0 or budget < 0:
        raise ValueError("need noise_var > 0 and budget >= 0")
    r = np.broadcast_to(np.asarray(min_rate, dtype=float), g.shape)
    if np.any(r < 0):
        raise ValueError("min_rate must be nonnegative")

    def common_ok(rate):
        return _binding_powers(g, noise_var, budget, np.full(len(g), rate)) is not None

    # Feasibility of a common minimum rate is monotone in the rate: bisect.
    lo, hi = 0.0, float(np.log2(1.0 + g[-1] * budget / noise_var))
    if common_ok(hi):
        lo = hi
    while hi - lo > 1e-12 * max(hi, 1.0):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if common_ok(mid) else (lo, mid)
    max_common = lo
    p = _binding_powers(g, noise_var, budget, r)
    if p is None:
        return PowerAllocation(np.zeros(len(g)), np.zeros(len(g)), False, float(max_common))
    return PowerAllocation(p, sic_rates(g, p, noise_var), True, float(max_common))


def match_slots(rates, capacities) -> np.ndarray:
    """Cluster-proposing deferred acceptance.

    Parameters
    ----------
    rates : array_like, shape (n_clusters, n_slots)
        Achievable rate of each cluster in each slot.  Clusters prefer higher
        rates; each slot prefers the clusters that would achieve more in it.
        Ties go to the lower index.
    capacities : array_like of int, shape (n_slots,)

    Returns
    -------
    ndarray of int
        Slot of every cluster.  The matching is stable: no cluster and slot
        both prefer each other to what they hold.
    """
    R = np.asarray(rates, dtype=float)
    cap = np.asarray(capacities, dtype=int)
    n_c, n_s = R.shape
    if cap.shape != (n_s,) or np.any(cap < 0):
        raise ValueError("one nonnegative capacity per slot")
    if cap.sum() < n_c:
        raise ValueError("total slot capacity is below the number of clusters")
    prefs = [np.lexsort((np.arange(n_s), -R[c])) for c in range(n_c)]
    nxt = np.zeros(n_c, dtype=int)
    held: list[list[int]] = [[] for _ in range(n_s)]
    free = list(range(n_c))
    while free:
        c = free.pop(0)
        s = prefs[c][nxt[c]]
        nxt[c] += 1
        held[s].append(c)
        if len(held[s]) > cap[s]:
            held[s].sort(key=lambda j: (-R[j, s], j))
            free.append(held[s].pop())
    out = np.empty(n_c, dtype=int)
    for s, cs in enumerate(held):
        out[cs] = s
    return out


def blocking_pairs(assignment, rates, capacities) -> list[tuple[int, int]]:
    """All (cluster, slot) pairs that would rather be matched to each other."""
    R = np.asarray(rates, dtype=float)
    a = np.asarray(assignment, dtype=int)
    cap = np.asarray(capacities, dtype=int)
    n_c, n_s = R.shape

    def c_prefers(c, s, t):  # cluster c prefers slot s over slot t
        return R[c, s] > R[c, t] or (R[c, s] == R[c, t] and s < t)

    def s_prefers(s, c, d):  # slot s prefers cluster c over cluster d
        return R[c, s] > R[d, s] or (R[c, s] == R[d, s] and c < d)

    out = []
    for c in range(n_c):
        for s in range(n_s):
            if s == a[c] or not c_prefers(c, s, a[c]):
                continue
            holders = np.flatnonzero(a == s)
            if len(holders) < cap[s] or any(s_prefers(s, c, d) for d in holders):
                out.append((c, s))
    return out


@dataclass
class AllocationDecision:
    plan: ClusterPlan  # with SIC orders
    gs_beams: np.ndarray  # (n_clusters, n_gs), unit norm
    combiners: np.ndarray  # (K, n_ac)
    powers: np.ndarray  # (K,) per aircraft
    slots: np.ndarray  # (n_clusters,) slot of each cluster
    n_slots: int = 1
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.asarray(self.powers) < 0):
            raise ValueError("powers must be nonnegative")
        if len(self.slots) != len(self.plan.groups):
            raise ValueError("one slot per cluster")


def user_rates(decision: AllocationDecision, channels, noise_var: float, R=None) -> np.ndarray:
    """Per-aircraft rate (bits/s/Hz) within its slot.

    Parameters
    ----------
    channels : array_like, shape (K, n_ac, n_gs)
    R : array_like, shape (K, n_ac, n_ac), optional
        Interference-plus-noise covariance per aircraft; ``noise_var * I``
        when omitted.
    """
    H = np.asarray(channels, dtype=complex)
    K = H.shape[0]
    plan = decision.plan
    if plan.orders is None:
        raise ValueError("decision needs SIC orders")
    W = np.asarray(decision.gs_beams, dtype=complex)
    V = np.asarray(decision.combiners, dtype=complex)
    p = np.asarray(decision.powers, dtype=float)
    # G[k, m] = |v_k^H H_k w_m|^2
    G = np.abs(np.einsum("ka,kag,mg->km", V.conj(), H, W)) ** 2
    cl_power = np.array([p[g].sum() for g in plan.groups])
    rates = np.zeros(K)
    for m, order in enumerate(plan.orders):
        co = np.flatnonzero((decision.slots == decision.slots[m]) & (np.arange(len(plan.groups)) != m))
        for pos, k in enumerate(order):
            if R is None:
                noise = noise_var * np.vdot(V[k], V[k]).real
            else:
                noise = np.vdot(V[k], np.asarray(R[k]) @ V[k]).real
            intra = G[k, m] * p[order[pos + 1 :]].sum()
            inter = float(np.sum(G[k, co] * cl_power[co]))
            rates[k] = np.log2(1.0 + G[k, m] * p[k] / (intra + inter + noise))
    return rates


def sum_rate(decision: AllocationDecision, channels, noise_var: float, R=None) -> float:
    """Frame sum rate (bits/s/Hz): slot rates summed, divided by the number of slots."""
    if not np.any(decision.powers):
        return 0.0
    return float(np.sum(user_rates(decision, channels, noise_var, R)) / decision.n_slots)


def rzf_beams(reps, noise_var: float) -> np.ndarray:
    """Regularised zero-forcing GS beams towards cluster representative channels.

    ``reps`` has one row ``h_m^H`` per cluster (the cluster's effective
    channel as seen at the GS); columns of the result are unit-norm beams
    returned as rows.
    """
    Hm = np.atleast_2d(np.asarray(reps, dtype=complex))
    M = len(Hm)
    W = Hm.conj().T @ np.linalg.inv(Hm @ Hm.conj().T + noise_var * np.eye(M))
    W = W / np.linalg.norm(W, axis=0, keepdims=True)
    return W.T


def matched_combiners(channels) -> np.ndarray:
    """Leading left singular vector of each aircraft's channel matrix."""
    H = np.asarray(channels, dtype=complex)
    return np.stack([np.linalg.svd(h)[0][:, 0] for h in H])


def _representatives(eff: np.ndarray, plan: ClusterPlan) -> np.ndarray:
    """Per cluster, the members' principal direction scaled to their RMS norm, as a row ``h_m^H``."""
    reps = []
    for g in plan.groups:
        c = _principal(phase_align(eff[g].conj()))[0]
        reps.append(c.conj() * np.sqrt(np.mean(np.sum(np.abs(eff[g]) ** 2, axis=1))))
    return np.stack(reps)


def plan_access(
    channels,
    noise_var: float,
    budget: float = 1.0,
    min_rate: float = 0.0,
    n_clusters: int | None = None,
    n_slots: int = 1,
    capacities=None,
    slot_quality=None,
    gs_beams=None,
    rng_seed=0,
) -> AllocationDecision:
    """Cluster, beamform, order, allocate power and match slots.

    Parameters
    ----------
    channels : array_like, shape (K, n_ac, n_gs)
    n_clusters : int, optional
        Defaults to ``ceil(K / 2)``.
    capacities : array_like of int, optional
        Clusters per slot; defaults to an even spread.
    slot_quality : array_like, shape (n_slots, K), optional
        Multiplicative noise factor per slot and aircraft (e.g. DME activity);
        it shapes the rates the slot matching ranks.
    gs_beams : array_like, shape (n_clusters, n_gs), optional
        Fixed GS beams; regularised zero-forcing when omitted.
    """
    H = np.asarray(channels, dtype=complex)
    K = H.shape[0]
    M = int(np.ceil(K / 2)) if n_clusters is None else n_clusters
    V = matched_combiners(H)
    eff = np.einsum("ka,kag->kg", V.conj(), H)  # rows h_k^H
    plan = cluster_kmeans(eff.conj(), M, rng_seed=rng_seed)
    if gs_beams is None:
        W = rzf_beams(_representatives(eff, plan), noise_var)
    else:
        W = np.asarray(gs_beams, dtype=complex)
    orders, powers = [], np.zeros(K)
    for m, grp in enumerate(plan.groups):
        g = np.array([equivalent_gain(H[k], W[m], V[k]) for k in grp])
        order = sic_order(grp, g)
        gains = np.array([equivalent_gain(H[k], W[m], V[k]) for k in order])
        alloc = allocate_power(gains, noise_var, budget, min_rate)
        if not alloc.feasible:
            alloc = allocate_power(gains, noise_var, budget, 0.0)
        powers[order] = alloc.powers
        orders.append(order)
    plan = ClusterPlan(plan.groups, orders)
    if capacities is None:
        capacities = np.full(n_slots, int(np.ceil(M / n_slots)))
    q = np.ones((n_slots, K)) if slot_quality is None else np.asarray(slot_quality, dtype=float)
    rates = np.zeros((M, n_slots))
    for m, order in enumerate(orders):
        gains = np.array([equivalent_gain(H[k], W[m], V[k]) for k in order])
        for s in range(n_slots):
            rates[m, s] = np.sum(sic_rates(gains, powers[order], noise_var * q[s, order]))
    slots = match_slots(rates, capacities)
    return AllocationDecision(plan, W, V, powers, slots, n_slots, {"slot_rates": rates})
