"""Experiment presets writing CSV tables.

Every preset fans out independent tasks, each with its own seed derived from
the root seed and the task index (:func:`task_seed`), and aggregates results
in task order, so the output does not depend on the number of workers.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable

import numpy as np

from .. import __version__
from .. import access as acc
from .. import interference as itf
from ..beamsteer import BeamScenario, simulate_ber
from ..channel import ArrayConfig, FlightTrack, closest_approach_time, generate_paths, los_geometry, overhead_pass_doppler, steering
from ..estimation import pipeline as pl
from ..robustplan import TrackScenario, perturbed_env, run_variance_study
from ..waveform import FrameSpec, OfdmParams
from .config import Config, format_config

PRESETS = ("nmse-vs-pilot", "ber-vs-snr", "track-pass", "sumrate-access", "robust-rl")

COLUMNS = {
    "nmse-vs-pilot": ("pilot_overhead_pct", "nmse_db_gmmv", "nmse_db_lmmse", "seeds"),
    "ber-vs-snr": ("snr_db", "ber_ao", "ber_pgd", "ber_sshb", "bits"),
    "track-pass": ("time_s", "range_km", "aod_deg", "doppler_hz", "planned_doppler_hz", "residual_hz"),
    "sumrate-access": ("snr_db", "sumrate_proposed", "sumrate_sdma", "sumrate_oma", "draws"),
    "robust-rl": ("episode", "var_dqn", "var_sac", "var_drsac"),
}


def task_seed(root: int, index: int) -> int:
    """64-bit seed of task ``index``: the pair (root, index) hashed by ``SeedSequence``."""
    ss = np.random.SeedSequence(int(root), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def worker_count(cfg: Config, n_tasks: int) -> int:
    n = cfg["run.threads"] or os.cpu_count() or 1
    cap = os.environ.get("AEROSIM_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, min(n, n_tasks))


def run_tasks(fn: Callable, tasks: list, cfg: Config) -> list:
    """``[fn(t) for t in tasks]``, in a process pool when more than one worker is allowed."""
    n = worker_count(cfg, len(tasks))
    if n == 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, tasks))


# -- scenario builders -----------------------------------------------------------


def ofdm_params(cfg: Config) -> OfdmParams:
    return OfdmParams(cfg["ofdm.subcarrier_spacing"], cfg["ofdm.fft_size"], cfg["ofdm.cp_len"], cfg["ofdm.used_subcarriers"])


def array_config(cfg: Config) -> ArrayConfig:
    return ArrayConfig(cfg["channel.n_gs"], cfg["channel.n_ac"], cfg["channel.element_spacing"], cfg["channel.n_rf_gs"])


def dme_params(cfg: Config) -> itf.DmeParams:
    return itf.DmeParams(cfg["dme.mode"], cfg["dme.pulse_half_amp_width"], cfg["dme.arrival_rate"], cfg["dme.channel_offset"])


def frame_spec(cfg: Config, n_pilot_syms: int) -> FrameSpec:
    return FrameSpec.default(
        ofdm_params(cfg),
        n_nulls=cfg["ofdm.n_nulls"],
        n_pilot_syms=n_pilot_syms,
        n_short_syms=cfg["ofdm.n_short_syms"],
        short_decimation=cfg["ofdm.short_decimation"],
    )


def estimation_scenario(cfg: Config, overhead_pct: float) -> pl.EstimationScenario:
    n_pilot = pl.pilot_symbols_for_overhead(overhead_pct, cfg["ofdm.frame_syms"])
    return pl.EstimationScenario(
        params=ofdm_params(cfg),
        spec=frame_spec(cfg, n_pilot),
        arrays=array_config(cfg),
        snr_db=cfg["estimation.snr_db"],
        sir_db=cfg["dme.sir_db"],
        dme=dme_params(cfg),
        rician_db=cfg["channel.rician_db"],
        n_scatter=cfg["channel.n_scatter"],
        beamwidth=np.deg2rad(cfg["channel.beamwidth_deg"]),
        speed=cfg["channel.speed"],
        dme_budget=cfg["estimation.dme_budget"],
        max_support=cfg["estimation.max_support"],
        dict_oversample=cfg["estimation.dict_oversample"],
    )


def beam_scenario(cfg: Config) -> BeamScenario:
    return BeamScenario(
        params=ofdm_params(cfg),
        arrays=array_config(cfg),
        n_pilot_syms=cfg["beams.n_pilot_syms"],
        n_train_syms=cfg["beams.n_train_syms"],
        n_data_syms=cfg["beams.n_data_syms"],
        sir_db=cfg["beams.data_sir_db"],
        est_snr_db=cfg["estimation.snr_db"],
        est_sir_db=cfg["dme.sir_db"],
        dme=dme_params(cfg),
        rician_db=cfg["channel.rician_db"],
        n_scatter=cfg["channel.n_scatter"],
        distance_range=(cfg["beams.min_range_m"], cfg["beams.max_range_m"]),
        frames_per_flight=cfg["beams.frames_per_flight"],
        frame_interval=cfg["beams.frame_interval"],
        forgetting=cfg["beams.forgetting"],
        pgd_step=cfg["beams.pgd_step"],
        pgd_iters=cfg["beams.pgd_iters"],
        ao_max_outer=cfg["beams.ao_max_outer"],
    )


def checkpoints(cfg: Config) -> list[int]:
    n, e = cfg["rl.n_checkpoints"], cfg["rl.episodes"]
    return sorted({int(round(e * (i + 1) / n)) for i in range(n)})


# -- presets -----------------------------------------------------------------------


def _nmse_task(args) -> tuple[float, float]:
    cfg, pct, seed = args
    sc = estimation_scenario(cfg, pct)
    obs = pl.simulate_frame(sc, seed)
    return pl.nmse_gmmv(obs, sc, excision=True), pl.nmse_lmmse(obs, sc)


def _db_of_mean(nmse_db) -> float:
    """Average NMSE in linear scale, reported in dB."""
    return float(10 * np.log10(np.mean(10 ** (np.asarray(nmse_db) / 10))))


def nmse_vs_pilot(cfg: Config, seed: int) -> list[tuple]:
    grid = cfg["estimation.pilot_overhead_pct"]
    n = cfg["estimation.n_seeds"]
    # Frame seeds are shared across overhead points, so the curves are paired.
    seeds = [task_seed(seed, i) for i in range(n)]
    out = run_tasks(_nmse_task, [(cfg, p, s) for p in grid for s in seeds], cfg)
    rows = []
    for i, p in enumerate(grid):
        chunk = np.array(out[i * n : (i + 1) * n])
        rows.append((p, _db_of_mean(chunk[:, 0]), _db_of_mean(chunk[:, 1]), n))
    return rows


def ber_vs_snr(cfg: Config, seed: int) -> list[tuple]:
    res = simulate_ber(snr_grid=cfg["beams.snr_grid_db"], scenario=beam_scenario(cfg), n_bits=cfg["beams.n_bits"], seed=task_seed(seed, 0))
    return [(s, res.ber["ao"][i], res.ber["pgd"][i], res.ber["sshb"][i], res.bits) for i, s in enumerate(res.snr_db)]


def pass_tracks(cfg: Config) -> tuple[FlightTrack, FlightTrack]:
    """Planned pass along +x at the configured miss distance, and the actual pass displaced cross-track."""
    v = cfg["channel.speed"]
    plan = FlightTrack((0.0, cfg["channel.pass_lateral_m"], cfg["channel.pass_altitude_m"]), (v, 0.0, 0.0))
    return plan, plan.cross_track_shift(cfg["channel.plan_offset_m"])


def track_pass(cfg: Config, seed: int) -> list[tuple]:
    del seed  # deterministic geometry
    plan, actual = pass_tracks(cfg)
    half = cfg["channel.pass_halfspan_s"]
    t = closest_approach_time(actual) + np.linspace(-half, half, cfg["channel.pass_points"])
    _, f_act = overhead_pass_doppler(actual, times=t)
    _, f_plan = overhead_pass_doppler(plan, times=t)
    rows = []
    for i, ti in enumerate(t):
        g = los_geometry(actual, ti)
        rows.append((ti, g["distance"] / 1e3, np.rad2deg(g["aod"]), f_act[i], f_plan[i], f_act[i] - f_plan[i]))
    return rows


def random_aircraft_channels(rng: np.random.Generator, arrays: ArrayConfig, n_aircraft: int, cfg: Config) -> np.ndarray:
    """Narrowband channels ``(K, n_ac, n_gs)`` of aircraft flying in pairs along shared airways.

    Each airway has a uniform bearing in +/-60 deg; its aircraft sit within
    ``access.airway_spread_deg`` of it at random ranges, so channels on the
    same airway are strongly correlated.
    """
    spread = np.deg2rad(cfg["access.airway_spread_deg"])
    centres = rng.uniform(np.deg2rad(-60.0), np.deg2rad(60.0), int(np.ceil(n_aircraft / 2)))
    H = []
    for k in range(n_aircraft):
        c = centres[k // 2]
        track = pl.random_geometry(rng, (c - spread / 2, c + spread / 2), cfg["channel.speed"])
        paths = generate_paths(
            track,
            arrays,
            0.0,
            cfg["channel.rician_db"],
            cfg["channel.n_scatter"],
            np.deg2rad(cfg["channel.beamwidth_deg"]),
            rng_seed=int(rng.integers(2**63)),
        )
        a_ac = steering(arrays.n_ac, paths.aoa, arrays.element_spacing)
        a_gs = steering(arrays.n_gs, paths.aod, arrays.element_spacing)
        H.append(np.einsum("l,il,jl->ij", paths.gains, a_ac, a_gs.conj()))
    return np.array(H)


def _sumrate_task(args) -> tuple[float, float, float]:
    cfg, snr_db, seed = args
    rng = np.random.default_rng(seed)
    arrays = array_config(cfg)
    K = cfg["access.n_aircraft"]
    H = random_aircraft_channels(rng, arrays, K, cfg)
    noise = 10 ** (-snr_db / 10)
    budget, rmin, n_slots = cfg["access.budget"], cfg["access.min_rate"], cfg["access.n_slots"]
    M = cfg["access.n_clusters"] or None
    proposed = acc.plan_access(H, noise, budget, rmin, n_clusters=M, n_slots=n_slots, rng_seed=seed)
    r_prop = acc.sum_rate(proposed, H, noise)
    # Pure SDMA: one aircraft per beam, zero-forcing across all of them.
    sdma = acc.plan_access(H, noise, budget, rmin, n_clusters=K, n_slots=n_slots, rng_seed=seed)
    r_sdma = acc.sum_rate(sdma, H, noise)
    # Orthogonal access: every aircraft alone in its own slot on a matched beam.
    V = acc.matched_combiners(H)
    W = np.stack([np.linalg.svd(h)[2][0].conj() for h in H])
    plan = acc.ClusterPlan([np.array([k]) for k in range(K)], [np.array([k]) for k in range(K)])
    oma = acc.AllocationDecision(plan, W, V, np.full(K, budget), np.arange(K), K)
    return r_prop, r_sdma, acc.sum_rate(oma, H, noise)


def sumrate_access(cfg: Config, seed: int) -> list[tuple]:
    grid = cfg["access.snr_grid_db"]
    n = cfg["access.n_draws"]
    seeds = [task_seed(seed, i) for i in range(n)]
    out = run_tasks(_sumrate_task, [(cfg, s, d) for s in grid for d in seeds], cfg)
    rows = []
    for i, s in enumerate(grid):
        chunk = np.array(out[i * n : (i + 1) * n])
        rows.append((s, *chunk.mean(axis=0), n))
    return rows


def robust_rl(cfg: Config, seed: int) -> list[tuple]:
    env = perturbed_env(TrackScenario(), cfg["rl.sigma_m"])
    ck = checkpoints(cfg)
    curves, _ = run_variance_study(
        env,
        cfg["rl.episodes"],
        ck,
        n_seeds=cfg["rl.n_seeds"],
        seed=task_seed(seed, 0),
        eps=cfg["rl.eps"],
        tau=cfg["rl.tau"],
        alpha=cfg["rl.alpha"],
        gamma=cfg["rl.gamma"],
        explore=cfg["rl.explore"],
        n_eval=cfg["rl.n_eval"],
    )
    var = {k: np.var(v, axis=0, ddof=1) for k, v in curves.items()}
    return [(c, var["q"][i], var["soft"][i], var["robust"][i]) for i, c in enumerate(ck)]


_RUNNERS = {
    "nmse-vs-pilot": nmse_vs_pilot,
    "ber-vs-snr": ber_vs_snr,
    "track-pass": track_pass,
    "sumrate-access": sumrate_access,
    "robust-rl": robust_rl,
}


def _cell(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".10g")


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def run_preset(name: str, cfg: Config, seed: int, out_dir) -> tuple[Path, Path]:
    """Run one preset and write ``<name>.csv`` and ``<name>.meta`` into ``out_dir``."""
    if name not in _RUNNERS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = _RUNNERS[name](cfg, int(seed))
    csv_path = out / f"{name}.csv"
    meta_path = out / f"{name}.meta"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv(COLUMNS[name], rows))
    with open(meta_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# preset = {name}\n# seed = {int(seed)}\n# version = {__version__}\n")
        fh.write(format_config(cfg))
    return csv_path, meta_path
