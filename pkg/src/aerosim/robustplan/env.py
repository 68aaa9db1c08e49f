"""Slot-and-beam allocation along a perturbed flight track.

A formation of aircraft flies a planned straight track past the GS.  The GS
points one beam per cluster, with either the full array (narrow, high gain)
or a short sub-array (wide, low gain), plus a pointing offset for the narrow
beam.  Each episode the real track is displaced sideways by a Gaussian
offset.  Until a report with the link up reveals that offset the GS can only
point along the plan, so a narrow beam risks missing and keeping the link
lost, while the wide beam re-acquires reliably.

State: (clustering result, quantised CSI index).  The clustering comes from
K-means on the aircraft channels at the current step; the CSI index is the
quantised median link SNR reported for the previous step, with level 0 meaning
the link was lost.  Action: beam width and pointing offset.  Reward: the
frame sum rate from the access module.

All rewards and transitions are precomputed on a grid of track offsets; an
episode draws its offset from the Gaussian and snaps it to the nearest grid
point.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .. import access as acc
from ..channel import ArrayConfig, FlightTrack, generate_paths, los_geometry, steering


@dataclass(frozen=True)
class TrackScenario:
    arrays: ArrayConfig = field(default_factory=lambda: ArrayConfig(n_gs=32, n_ac=4, n_rf_gs=1))
    track: FlightTrack = field(default_factory=lambda: FlightTrack((-8e3, 8e3, 10e3), (277.78, 0.0, 0.0)))
    spacing: tuple = (0.0, 300.0, 6000.0)  # along-track distance of each aircraft behind the lead (m)
    n_steps: int = 10
    step_dt: float = 2.0  # s between decisions
    noise_var: float = 10.0  # relative to unit-power channel entries
    budget: float = 1.0
    min_rate: float = 0.5  # bits/s/Hz per aircraft when the budget allows
    n_clusters: int = 2
    wide_elements: int = 4
    offsets: tuple = (-1, 0, 1)  # narrow-beam pointing offsets in units of 1/n_gs in sine space
    snr_levels_db: tuple = (-3.0, 6.0, 10.0)  # CSI index boundaries; below the first is "lost"
    rician_db: float = 15.0
    n_scatter: int = 2
    scatter_seed: int = 7
    grid_halfwidth: float = 4.0  # offset grid spans +/- this many sigma
    n_grid: int = 25

    @property
    def actions(self) -> list[tuple[str, int]]:
        return [("wide", 0)] + [("narrow", o) for o in self.offsets]


def _positions(sc: TrackScenario, offset: float, t: float) -> list[FlightTrack]:
    track = sc.track.cross_track_shift(offset)
    v = np.asarray(track.velocity, dtype=float)
    u = v / np.linalg.norm(v)
    return [FlightTrack(tuple(np.asarray(track.start) - d * u), track.velocity) for d in sc.spacing]


def _channels(sc: TrackScenario, offset: float, t: float) -> np.ndarray:
    """Narrowband (DC subcarrier) channel of every aircraft, ``(K, n_ac, n_gs)``."""
    out = []
    for k, tr in enumerate(_positions(sc, offset, t)):
        paths = generate_paths(tr, sc.arrays, t, sc.rician_db, sc.n_scatter, rng_seed=sc.scatter_seed + k)
        a_ac = steering(sc.arrays.n_ac, paths.aoa, sc.arrays.element_spacing)
        a_gs = steering(sc.arrays.n_gs, paths.aod, sc.arrays.element_spacing)
        out.append(np.einsum("l,il,jl->ij", paths.gains, a_ac, a_gs.conj()))
    return np.array(out)


def _beam(sc: TrackScenario, angle: float, kind: str, offset: int) -> np.ndarray:
    n = sc.arrays.n_gs
    s = np.clip(np.sin(angle) + offset / n, -1.0, 1.0)
    if kind == "narrow":
        w = steering(n, np.arcsin(s), sc.arrays.element_spacing)
    else:
        w = np.zeros(n, dtype=complex)
        w[: sc.wide_elements] = steering(sc.wide_elements, np.arcsin(s), sc.arrays.element_spacing)
    return w / np.linalg.norm(w)


def partitions(n_items: int, n_groups: int) -> list[tuple[int, ...]]:
    """Canonical labelings of ``n_items`` into exactly ``n_groups`` nonempty groups."""
    out = []
    for lab in itertools.product(range(n_groups), repeat=n_items):
        seen: list[int] = []
        ok = True
        for x in lab:
            if x not in seen:
                if x != len(seen):
                    ok = False
                    break
                seen.append(x)
        if ok and len(seen) == n_groups:
            out.append(lab)
    return out


@dataclass
class StepTable:
    offsets: np.ndarray  # (G,) track-offset grid (m)
    reward: np.ndarray  # (G, T, A, 2) last axis: planned / tracked pointing
    level: np.ndarray  # (G, T, A, 2) CSI index reported after the step
    cluster: np.ndarray  # (G, T) clustering-result index
    n_levels: int
    n_partitions: int


def _labels_index(plan: acc.ClusterPlan, table: list) -> int:
    m, canon = {}, []
    for x in plan.labels():
        m.setdefault(int(x), len(m))
        canon.append(m[int(x)])
    return table.index(tuple(canon))


def _step_outcome(sc: TrackScenario, H, V, plan, directions, kind: str, o: int) -> tuple[float, int]:
    """Sum rate and CSI index for one beam choice, one slot per cluster."""
    K = len(H)
    W = np.stack([_beam(sc, float(np.mean([directions[k] for k in grp])), kind, o) for grp in plan.groups])
    orders, powers = [], np.zeros(K)
    gain = np.zeros(K)
    for m, grp in enumerate(plan.groups):
        g = np.array([acc.equivalent_gain(H[k], W[m], V[k]) for k in grp])
        gain[grp] = g
        order = acc.sic_order(grp, g)
        alloc = acc.allocate_power(gain[order], sc.noise_var, sc.budget, sc.min_rate)
        if not alloc.feasible:
            alloc = acc.allocate_power(gain[order], sc.noise_var, sc.budget, 0.0)
        powers[order] = alloc.powers
        orders.append(order)
    M = len(plan.groups)
    dec = acc.AllocationDecision(acc.ClusterPlan(plan.groups, orders), W, V, powers, np.arange(M), M)
    snr_db = 10 * np.log10(np.maximum(gain * sc.budget / sc.noise_var, 1e-30))
    return acc.sum_rate(dec, H, sc.noise_var), int(np.searchsorted(sc.snr_levels_db, np.median(snr_db), side="right"))


def build_table(sc: TrackScenario, sigma: float) -> StepTable:
    """Rewards and CSI indices on the offset grid, for planned and for tracked pointing."""
    grid = np.zeros(1) if sigma == 0 else np.linspace(-sc.grid_halfwidth, sc.grid_halfwidth, sc.n_grid) * sigma
    parts = partitions(len(sc.spacing), sc.n_clusters)
    G, T, A = len(grid), sc.n_steps, len(sc.actions)
    reward = np.zeros((G, T, A, 2))
    level = np.zeros((G, T, A, 2), dtype=int)
    cluster = np.zeros((G, T), dtype=int)
    for t in range(T):
        tt = t * sc.step_dt
        planned = [los_geometry(tr, tt)["aod"] for tr in _positions(sc, 0.0, tt)]
        for g, off in enumerate(grid):
            H = _channels(sc, off, tt)
            V = acc.matched_combiners(H)
            eff = np.einsum("ka,kag->kg", V.conj(), H)
            plan = acc.cluster_kmeans(eff.conj(), sc.n_clusters, rng_seed=0)
            cluster[g, t] = _labels_index(plan, parts)
            actual = [los_geometry(tr, tt)["aod"] for tr in _positions(sc, off, tt)]
            for a, (kind, o) in enumerate(sc.actions):
                for src, dirs in enumerate((planned, actual)):
                    reward[g, t, a, src], level[g, t, a, src] = _step_outcome(sc, H, V, plan, dirs, kind, o)
    return StepTable(grid, reward, level, cluster, len(sc.snr_levels_db) + 1, len(parts))


@lru_cache(maxsize=16)
def _cached_table(sc: TrackScenario, sigma: float) -> StepTable:
    return build_table(sc, sigma)


class PerturbedTrackEnv:
    """Episodic environment over a track displaced by ``N(0, sigma^2)`` metres each episode.

    Beams are pointed along the planned track until a report with the link
    up (CSI index above 0) reveals the offset; from then on they follow the
    actual track, until a lost report sends pointing back to the plan.
    Episodes start with no report.
    """

    def __init__(self, scenario: TrackScenario | None = None, sigma: float = 1500.0):
        self.scenario = TrackScenario() if scenario is None else scenario
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        self.sigma = float(sigma)
        self.table = _cached_table(self.scenario, self.sigma)
        self.n_actions = len(self.scenario.actions)
        self.n_states = self.table.n_partitions * self.table.n_levels
        self._g = 0
        self._t = 0
        self._level = 0

    def state_index(self, cluster: int, level: int) -> int:
        return cluster * self.table.n_levels + level

    def draw_offset_index(self, rng: np.random.Generator) -> int:
        if self.sigma == 0:
            return 0
        return int(np.argmin(np.abs(self.table.offsets - rng.normal(0.0, self.sigma))))

    def reset(self, rng: np.random.Generator) -> int:
        self._g = self.draw_offset_index(rng)
        self._t = 0
        self._level = 0
        return self.state_index(int(self.table.cluster[self._g, 0]), 0)

    def step(self, action: int) -> tuple[int, float, bool]:
        g, t = self._g, self._t
        src = int(self._level > 0)
        r = float(self.table.reward[g, t, action, src])
        self._level = int(self.table.level[g, t, action, src])
        self._t += 1
        done = self._t >= self.scenario.n_steps
        nt = min(self._t, self.scenario.n_steps - 1)
        return self.state_index(int(self.table.cluster[g, nt]), self._level), r, done


def perturbed_env(scenario: TrackScenario | None = None, sigma: float = 1500.0, seed=None) -> PerturbedTrackEnv:
    """Environment whose episodes displace the planned track by a Gaussian cross-track offset.

    ``seed`` is accepted for interface symmetry; episode randomness comes from
    the generator passed to ``reset``.
    """
    del seed
    return PerturbedTrackEnv(scenario, sigma)
