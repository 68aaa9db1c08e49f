"""Acceptance criteria 1-10.

Every test prints one ``CRITERION <n> PASS|FAIL`` line straight to the
terminal (bypassing capture) with the measured numbers, then asserts.
"""

import itertools
import time

import numpy as np
import pytest
from scipy.stats import binomtest

from aerosim.access import allocate_power, match_slots
from aerosim.beamsteer import optimize_ao, sinr
from aerosim.channel import (
    ArrayConfig,
    FlightTrack,
    PathSet,
    apply,
    closest_approach_time,
    doppler_of_path,
    evaluate,
    overhead_pass_doppler,
    steering,
)
from aerosim.estimation import pipeline as pl
from aerosim.harness.config import default_config
from aerosim.harness.presets import ber_vs_snr, estimation_scenario, nmse_vs_pilot, task_seed
from aerosim.robustplan import (
    UncertaintySet,
    adversarial_bellman,
    perturbed_env,
    random_mdp,
    robust_policy_evaluation,
    run_variance_study,
    standard_backup,
    standard_evaluation,
    worst_case,
)
from aerosim.waveform import FrameSpec, OfdmParams, demodulate_symbol, modulate_frame, random_qpsk, used_values

CFG = default_config().replace(run__threads=1)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, f"criterion {n}: {detail}"

    return emit


# -- 1, 2, 3: estimation ------------------------------------------------------------------


def test_criterion_01_gmmv_beats_lmmse(report):
    t0 = time.perf_counter()
    rows = nmse_vs_pilot(CFG, seed=0)
    elapsed = time.perf_counter() - t0
    margins = [lm - gm for _, gm, lm, _ in rows]
    n_seeds = rows[0][3]
    ok = n_seeds >= 100 and all(m > 0 for m in margins) and sum(m >= 3.0 for m in margins) >= 3 and elapsed <= 600
    table = ", ".join(f"{p:g}%: {gm:.1f}/{lm:.1f} dB" for p, gm, lm, _ in rows)
    report(1, ok, f"GMMV/LMMSE NMSE {table}; min margin {min(margins):.1f} dB; {n_seeds} seeds; {elapsed:.0f} s")


def test_criterion_02_excision_ablation(report):
    t0 = time.perf_counter()
    sc = estimation_scenario(CFG, 20.0)
    wins = losses = 0
    for i in range(100):
        obs = pl.simulate_frame(sc, task_seed(0, i))
        with_ex = pl.nmse_gmmv(obs, sc, excision=True)
        without = pl.nmse_gmmv(obs, sc, excision=False)
        wins += with_ex < without
        losses += with_ex > without
    elapsed = time.perf_counter() - t0
    p = binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue
    ok = p < 0.01 and elapsed <= 300
    report(2, ok, f"excision better in {wins}, worse in {losses} of 100 paired frames; sign test p = {p:.2e}; {elapsed:.0f} s")


def test_criterion_03_cfo_with_dme(report):
    p = OfdmParams()
    spec = FrameSpec.default(p, n_short_syms=16, n_pilot_syms=8)
    sc = pl.EstimationScenario(spec=spec, snr_db=10.0, sir_db=-3.8, cfo_hz=1000.0)
    err = [abs(pl.receive(pl.simulate_frame(sc, s), sc).cfo.f_hat - 1000.0) for s in range(100)]
    p95 = float(np.percentile(err, 95))
    report(3, p95 <= 20.0, f"95th percentile |CFO error| {p95:.1f} Hz over 100 seeds (n_short_syms 16, SIR -3.8 dB)")


# -- 4, 5: beams -------------------------------------------------------------------------------


def test_criterion_04_ber_ordering(report):
    t0 = time.perf_counter()
    rows = ber_vs_snr(CFG, seed=0)
    elapsed = time.perf_counter() - t0
    snr = [r[0] for r in rows]
    ao, pgd, ss = (np.array([r[i] for r in rows]) for i in (1, 2, 3))
    bits = rows[0][4]
    order = bool(np.all(ao <= pgd) and np.all(pgd <= ss))
    mid = [i for i, s in enumerate(snr) if 0 < i < len(snr) - 1]
    close = bool(np.all(pgd[mid] <= 2 * ao[mid]))
    ok = order and close and bits >= 100_000 and elapsed <= 900
    table = "; ".join(f"{s:g} dB {a:.2e}/{b:.2e}/{c:.2e}" for s, a, b, c in zip(snr, ao, pgd, ss))
    report(4, ok, f"BER AO/PGD/SS-HB {table}; {bits} bits/point; {elapsed:.0f} s")


def random_instance(seed, n_ac=4, n_gs=16, n_paths=3):
    rng = np.random.default_rng(seed)
    g = (rng.normal(size=n_paths) + 1j * rng.normal(size=n_paths)) / np.sqrt(2)
    H = sum(g[i] * np.outer(steering(n_ac, rng.uniform(-1, 1)), steering(n_gs, rng.uniform(-1, 1)).conj()) for i in range(n_paths))
    a = steering(n_ac, rng.uniform(-1.4, 1.4))
    return H, 10 ** rng.uniform(0, 2) * np.outer(a, a.conj()) + 0.1 * np.eye(n_ac)


def test_criterion_05_ao_sanity(report):
    nv = 0.05
    H = 0.8 * np.outer(steering(4, 0.3), steering(32, -0.2).conj())
    beams, _ = optimize_ao(H, nv * np.eye(4), n_rf=4)
    gap = abs(sinr(beams, H, nv * np.eye(4)) - 10 * np.log10(np.linalg.norm(H) ** 2 / nv))
    monotone = 0
    for s in range(50):
        Hs, R = random_instance(s)
        _, trace = optimize_ao(Hs, R, n_rf=2, rng_seed=s)
        monotone += bool(np.all(np.diff(trace) >= 0))
    report(5, gap <= 0.1 and monotone == 50, f"rank-1 gap {gap:.4f} dB; non-decreasing traces {monotone}/50")


# -- 6, 7: robust planning ---------------------------------------------------------------------


def kl_rows(P, pi):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sum(np.where(P > 0, P * np.log(P / pi), 0.0), axis=-1)


def brute_force_min(pi, q, eps):
    """Direct search over the simplex intersected with the KL ball, independent of the dual."""
    pi, q = np.asarray(pi), np.asarray(q)
    if len(pi) == 2:
        p = np.linspace(0.0, 1.0, 1_000_001)
        P = np.stack([p, 1 - p], axis=1)
        best = (P @ q)[kl_rows(P, pi) <= eps].min()
        # zoom around the grid optimum for sub-grid resolution
        centre, half = P[np.argmin(np.where(kl_rows(P, pi) <= eps, P @ q, np.inf)), 0], 1e-6
        for _ in range(6):
            p = np.clip(np.linspace(centre - half, centre + half, 2001), 0, 1)
            P = np.stack([p, 1 - p], axis=1)
            val = np.where(kl_rows(P, pi) <= eps, P @ q, np.inf)
            centre, half = p[np.argmin(val)], half / 100
            best = min(best, val.min())
        return best
    # Three actions: scan p0 densely; for fixed p0 the objective is linear in p1 and the
    # KL-feasible p1 form an interval, so the optimum sits at the endpoint found by bisection.
    p0 = np.linspace(0.0, 1.0, 1_000_001)
    m = 1.0 - p0
    split = pi[1] / (pi[1] + pi[2])

    def kl3(p1):
        return kl_rows(np.stack([p0, p1, m - p1], axis=1), pi)

    mid = m * split  # KL-minimising p1 for this p0
    feasible = kl3(mid) <= eps
    edge = np.zeros_like(p0) if q[1] > q[2] else m.copy()
    inside = kl3(edge) <= eps
    lo, hi = np.where(inside, edge, mid), np.where(inside, edge, edge)
    for _ in range(80):
        c = 0.5 * (lo + hi)
        ok = kl3(c) <= eps
        lo, hi = np.where(ok, c, lo), np.where(ok, hi, c)
    val = q[0] * p0 + q[1] * lo + q[2] * (m - lo)
    return val[feasible].min()


def test_criterion_06_robust_operator(report):
    rng = np.random.default_rng(0)
    worst_dev = 0.0
    for k in range(20):
        n_a = 2 + k % 2
        pi = rng.dirichlet(np.ones(n_a) * 2)
        q = rng.uniform(-1, 1, n_a)
        eps = rng.uniform(0.01, 0.5)
        worst_dev = max(worst_dev, abs(worst_case(pi, q, eps).value - brute_force_min(pi, q, eps)))
    backup_dev = eval_dev = 0.0
    below = 0
    for k in range(20):
        S, A = int(rng.integers(2, 9)), int(rng.integers(2, 4))
        mdp = random_mdp(rng, S, A)
        pi = rng.dirichlet(np.ones(A), size=S)
        v = rng.normal(size=S)
        backup_dev = max(backup_dev, np.max(np.abs(adversarial_bellman(v, UncertaintySet(pi, 0.0), mdp) - standard_backup(v, pi, mdp))))
        v_std = standard_evaluation(pi, mdp)
        eval_dev = max(eval_dev, np.max(np.abs(robust_policy_evaluation(pi, 0.0, mdp, tol=1e-15, max_iter=2000).v - v_std)))
        below += bool(np.all(robust_policy_evaluation(pi, rng.uniform(0, 0.5, S), mdp).v <= v_std + 1e-9))
    ok = worst_dev <= 1e-6 and backup_dev <= 1e-12 and eval_dev <= 1e-12 and below == 20
    report(
        6,
        ok,
        f"max |operator - brute force| {worst_dev:.1e} on 20 states; eps=0 backup dev {backup_dev:.1e}, "
        f"evaluation dev {eval_dev:.1e}; v_robust <= v_standard on {below}/20 MDPs",
    )


def test_criterion_07_variance_ordering(report):
    t0 = time.perf_counter()
    env = perturbed_env(sigma=1500.0)
    wins, detail = 0, []
    for rep in range(5):
        _, rows = run_variance_study(env, 800, [800], n_seeds=5, seed=1000 + rep, eps=1.0, tau=1.0, n_eval=50)
        var = {r["algorithm"]: r["variance"] for r in rows}
        win = var["robust"] < var["q"] and var["robust"] < var["soft"]
        wins += win
        detail.append(f"{var['robust']:.2f}/{var['q']:.2f}/{var['soft']:.2f}")
    elapsed = time.perf_counter() - t0
    report(7, wins >= 4 and elapsed <= 600, f"robust/Q/soft variance per repetition {', '.join(detail)}; robust lowest in {wins}/5; {elapsed:.0f} s")


# -- 8, 9: access --------------------------------------------------------------------------------


def blocking(assign, R, cap):
    n_c, n_s = R.shape
    count = 0
    for c, s in itertools.product(range(n_c), range(n_s)):
        if assign[c] == s:
            continue
        c_wants = (R[c, s], -s) > (R[c, assign[c]], -assign[c])
        held = [d for d in range(n_c) if assign[d] == s]
        s_wants = len(held) < cap[s] or any((R[c, s], -c) > (R[d, s], -d) for d in held)
        count += c_wants and s_wants
    return count


def test_criterion_08_matching_stability(report):
    rng = np.random.default_rng(0)
    total = n = 0
    for n_c, n_s in itertools.product(range(1, 7), range(1, 7)):
        for _ in range(100):
            cap = rng.integers(1, 4, n_s)
            while cap.sum() < n_c:
                cap[rng.integers(n_s)] += 1
            R = rng.uniform(0, 5, (n_c, n_s))
            a = match_slots(R, cap)
            total += blocking(a, R, cap) + int(np.any(np.bincount(a, minlength=n_s) > cap))
            n += 1
    report(8, total == 0, f"{total} blocking pairs or capacity violations over {n} instances (1..6 x 1..6, 100 draws each)")


def test_criterion_09_power_allocation(report):
    rng = np.random.default_rng(1)
    worst, done = 0.0, 0
    while done < 50:
        g = np.sort(rng.uniform(0.1, 10, 2))
        budget, r = rng.uniform(1, 10), rng.uniform(0, 1.0)
        p1 = np.linspace(0, budget, 10_000)
        p2 = budget - p1
        r1 = np.log2(1 + g[0] * p1 / (g[0] * p2 + 1.0))
        r2 = np.log2(1 + g[1] * p2)
        ok = (r1 >= r) & (r2 >= r)
        if not ok.any():
            continue
        worst = max(worst, abs(allocate_power(g, 1.0, budget, r).sum_rate - np.max((r1 + r2)[ok])))
        done += 1
    report(9, worst <= 1e-3, f"max |allocator - grid optimum| {worst:.2e} bits/s/Hz over 50 instances")


# -- 10: physics oracles ------------------------------------------------------------------------


def test_criterion_10_physics_oracles(report):
    parts = {}
    f = doppler_of_path(277.78, 1.08e9, 0.0)
    parts["doppler"] = (abs(f - 1000.2) <= 0.1, f"Doppler {f:.2f} Hz vs stated 1000.2 Hz")

    track = FlightTrack((-30e3, 2e3, 10e3), (277.78, 0.0, 0.0))
    t, fd = overhead_pass_doppler(track)
    flips = np.flatnonzero(np.diff(np.sign(fd)) != 0)
    t_ca = closest_approach_time(track)
    polarity = len(flips) == 1 and t[flips[0]] <= t_ca <= t[flips[0] + 1]
    _, fs = overhead_pass_doppler(track, times=t_ca + np.linspace(-100, 100, 2001))
    odd = float(np.max(np.abs(fs + fs[::-1])))
    parts["pass"] = (polarity and odd <= 1e-9, f"one polarity flip at closest approach {polarity}, odd-symmetry dev {odd:.1e}")

    p = OfdmParams()
    spec = FrameSpec.default(p, n_pilot_syms=3, n_data_syms=2)
    rng = np.random.default_rng(0)
    pil = random_qpsk(rng, (3, len(spec.pilot_subcarrier_idx)))
    dat = random_qpsk(rng, (2, len(spec.data_subcarrier_idx(p))))
    buf = modulate_frame(p, spec, pil, dat)
    rt = max(
        np.linalg.norm(used_values(demodulate_symbol(buf, p, o), p, spec.pilot_subcarrier_idx) - pil[i]) / np.linalg.norm(pil[i])
        for i, o in enumerate(spec.pilot_offsets(p))
    )
    parts["round trip"] = (rt <= 1e-9, f"OFDM round trip {rt:.1e}")

    arr = ArrayConfig(n_gs=4, n_ac=2)
    spec5 = FrameSpec.default(p, n_pilot_syms=5)
    pil5 = random_qpsk(rng, (5, len(spec5.pilot_subcarrier_idx)))
    tx = modulate_frame(p, spec5, pil5, np.zeros((0, len(spec5.data_subcarrier_idx(p)))))
    paths = PathSet(rng.normal(size=3) + 1j * rng.normal(size=3), np.array([0, 5, 11]) / p.sample_rate, rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3), np.zeros(3))
    w = steering(4, 0.25) / 2
    y = apply(tx, paths, arr, w)
    Hk = np.einsum("kij,j->ik", evaluate(paths, arr, p), w)
    eq = max(
        np.linalg.norm(demodulate_symbol(y, p, o) - Hk * demodulate_symbol(tx, p, o)) / np.linalg.norm(Hk * demodulate_symbol(tx, p, o))
        for o in spec5.pilot_offsets(p)[1:]
    )
    parts["equivalence"] = (eq <= 1e-6, f"time/frequency equivalence {eq:.1e} (sample-grid delays)")

    ok = all(v[0] for v in parts.values())
    report(10, ok, "; ".join(f"{k} {'ok' if v[0] else 'FAILED'} ({v[1]})" for k, v in parts.items()))
