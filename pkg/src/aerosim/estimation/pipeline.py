"""End-to-end estimation frame: transmit, propagate, interfere, and receive.

The receiver follows the two-step order: excise DME from the short section,
estimate and remove the frequency offset, excise DME from the pilot symbols,
then recover the channel.  ``excision=False`` runs the same chain with every
excision step skipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import interference as itf
from ..channel import ArrayConfig, FlightTrack, PathSet, apply, dft_dictionary, evaluate, generate_paths, los_geometry, steering
from ..waveform import FrameSpec, OfdmParams, SignalBuffer, modulate_frame, random_qpsk, short_section
from .cfo import CfoEstimate, compensate_cfo, estimate_cfo, short_train
from .dme import reconstruct_dme
from .gmmv import estimate_channel_gmmv
from .lmmse import angular_covariance, estimate_channel_lmmse, kron_covariance
from .metrics import nmse


@dataclass
class EstimationScenario:
    params: OfdmParams = field(default_factory=OfdmParams)
    spec: FrameSpec | None = None
    arrays: ArrayConfig = field(default_factory=ArrayConfig)
    snr_db: float = 15.0
    sir_db: float | None = -3.8
    dme: itf.DmeParams = field(default_factory=itf.DmeParams)
    rician_db: float = 15.0
    n_scatter: int = 4
    beamwidth: float = np.deg2rad(3.5)
    aod_range: tuple = (np.deg2rad(-60.0), np.deg2rad(60.0))
    speed: float = 277.78
    cfo_hz: float | None = None  # override the geometric LoS Doppler
    dme_budget: int = 16
    max_support: int = 10
    dict_oversample: int = 2
    gmmv_gain: float | None = 2.0

    def __post_init__(self):
        if self.spec is None:
            self.spec = FrameSpec.default(self.params, n_pilot_syms=8)
        self.spec.validate(self.params)

    @property
    def noise_var(self) -> float:
        return 10 ** (-self.snr_db / 10)


@dataclass
class FrameObservation:
    rx: SignalBuffer  # (n_ac, T) received, DME and noise included
    paths: PathSet
    X: np.ndarray  # (n_sub, n_gs, M) pilot training vectors
    dme_buffer: SignalBuffer | None
    dme_direction: float
    cfo: float  # LoS Doppler, the offset to remove
    noise_var: float
    dme_bin_power: float  # average DME power per bin per antenna


def pilot_symbols_for_overhead(overhead_pct: float, frame_syms: int = 40) -> int:
    """Pilot symbols taking ``overhead_pct`` percent of a ``frame_syms``-symbol frame (at least one)."""
    if not 0 < overhead_pct < 100:
        raise ValueError("overhead_pct must be in (0, 100)")
    return max(1, int(round(overhead_pct / 100.0 * frame_syms)))


def random_geometry(rng: np.random.Generator, aod_range, speed: float, distance_range=(40e3, 150e3)) -> FlightTrack:
    """A track whose aircraft at t=0 sits at a uniformly drawn GS departure angle and slant range."""
    theta = rng.uniform(*aod_range)
    dist = rng.uniform(*distance_range)
    alt = 10e3
    sin_e = alt / dist
    horiz = np.sqrt(max(1.0 - np.sin(theta) ** 2 - sin_e**2, 0.0))
    pos = dist * np.array([np.sin(theta), horiz, sin_e])
    heading = rng.uniform(0, 2 * np.pi)
    vel = speed * np.array([np.cos(heading), np.sin(heading), 0.0])
    return FlightTrack(tuple(pos), tuple(vel))


def training_vectors(rng: np.random.Generator, arrays: ArrayConfig, n_sub: int, n_sym: int) -> np.ndarray:
    """Hybrid training: one random-phase analog network per pilot symbol, random digital pilots per subcarrier."""
    F = np.exp(2j * np.pi * rng.uniform(size=(n_sym, arrays.n_gs, arrays.n_rf_gs)))
    s = random_qpsk(rng, (n_sub, n_sym, arrays.n_rf_gs))
    X = np.einsum("mgr,kmr->kgm", F, s)
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def simulate_frame(
    sc: EstimationScenario,
    seed,
    track: FlightTrack | None = None,
    t: float = 0.0,
    dme_direction: float | None = None,
    scatter_seed=None,
) -> FrameObservation:
    """One estimation frame through channel, DME and noise.

    By default the geometry, scatterers and DME direction are drawn from
    ``seed``.  A fixed ``track`` evaluated at time ``t`` with a fixed
    ``scatter_seed`` and ``dme_direction`` gives successive frames of one
    flight, with fresh pilots, DME pulses and noise from ``seed``.
    """
    rng = np.random.default_rng(seed)
    p, spec, arr = sc.params, sc.spec, sc.arrays
    if track is None:
        track = random_geometry(rng, sc.aod_range, sc.speed)
    paths = generate_paths(
        track, arr, t, sc.rician_db, sc.n_scatter, sc.beamwidth, rng_seed=rng if scatter_seed is None else scatter_seed
    )
    geo = los_geometry(track, t)
    if sc.cfo_hz is not None:
        paths = paths.with_doppler(paths.doppler - paths.doppler[0] + sc.cfo_hz)
    cfo = float(paths.doppler[0])

    n_pil = len(spec.pilot_subcarrier_idx)
    X = training_vectors(rng, arr, n_pil, spec.n_pilot_syms)
    pilot_values = np.transpose(X, (1, 2, 0))  # (n_gs, M, n_sub)
    data = np.zeros((arr.n_gs, spec.n_data_syms, len(spec.data_subcarrier_idx(p))))
    tx = modulate_frame(p, spec, pilot_values, data, short_values=np.zeros(len(spec.short_index(p))))
    # Short section goes out on the flight-plan beam toward the predicted LoS.
    w_plan = steering(arr.n_gs, geo["aod"], arr.element_spacing) / np.sqrt(arr.n_gs)
    n_short = spec.short_section_len(p)
    tx.samples[:, :n_short] = np.outer(w_plan, short_section(p, spec))

    desired = apply(tx, paths, arr)
    n = desired.samples.shape[-1]
    noise_var = sc.noise_var
    noise = np.sqrt(noise_var / 2) * (rng.standard_normal((arr.n_ac, n)) + 1j * rng.standard_normal((arr.n_ac, n)))

    dme_dir = rng.uniform(-np.pi / 2, np.pi / 2) if dme_direction is None else dme_direction
    dme_buf = None
    dme_bin_power = 0.0
    total = desired.samples + noise
    if sc.sir_db is not None and sc.dme.arrival_rate > 0:
        real = itf.realize(itf.dme_channels(sc.dme), n / p.sample_rate, p.sample_rate, rng)
        if real.buffer.power() > 0:
            a = steering(arr.n_ac, dme_dir, arr.element_spacing)
            d = SignalBuffer(np.outer(a, real.buffer.samples), p.sample_rate)
            # SIR is an element-level figure: reference it to the frame sent
            # without transmit beam gain.
            ref_tx = tx.with_samples(tx.samples.copy())
            ref_tx.samples[:, :n_short] = np.outer(X[0, :, 0], short_section(p, spec))
            d, _ = itf.calibrate_sir(d, apply(ref_tx, paths, arr), sc.sir_db)
            dme_buf = d
            dme_bin_power = d.power()
            total = total + d.samples
    rx = SignalBuffer(total, p.sample_rate)
    return FrameObservation(rx, paths, X, dme_buf, dme_dir, cfo, noise_var, dme_bin_power)


def short_window_bins(params: OfdmParams, spec: FrameSpec, reps: int) -> tuple[int, np.ndarray]:
    """Window length and empty bins for ``reps`` contiguous short repetitions."""
    w = reps * spec.short_len(params)
    sig = np.mod(reps * spec.short_index(params), w)
    return w, np.setdiff1d(np.arange(w), sig)


def excise_short(
    train: np.ndarray,
    params: OfdmParams,
    spec: FrameSpec,
    noise_var: float,
    budget: int,
    max_offset: float = 0.0,
) -> np.ndarray:
    """Window the short train into comb-spectrum blocks and subtract the DME from each.

    An uncompensated offset leaks comb energy into the empty bins.  ``max_offset``
    (Hz) raises the stopping level by the worst-case leakage so the pursuit
    does not fit, and then subtract, the signal's own spreading.
    """
    ls = spec.short_len(params)
    per_window = spec.short_decimation
    out = np.array(train, dtype=complex, copy=True)
    start = 0
    total = spec.n_short_syms
    while start < total:
        reps = min(per_window, total - start)
        w, obs = short_window_bins(params, spec, reps)
        seg = out[..., start * ls : start * ls + w]
        full = np.fft.fft(seg, axis=-1, norm="ortho")
        Y = full[..., obs]
        floor = noise_var
        if max_offset > 0:
            eps = max_offset * w / params.sample_rate
            comb = np.setdiff1d(np.arange(w), obs)
            comb_power = np.mean(np.abs(full[..., comb]) ** 2)
            floor += (np.pi * eps) ** 2 / 3 * comb_power * len(comb) / len(obs)
        est = reconstruct_dme(Y, obs, w, min(budget, len(obs) // 2), floor)
        out[..., start * ls : start * ls + w] = seg - est.samples
        start += reps
    return out


def observation_bins(params: OfdmParams, spec: FrameSpec) -> np.ndarray:
    """Empty bins of a long symbol: designated nulls plus DC/guard bins."""
    return np.union1d(params.bins(spec.null_subcarrier_idx), params.unused_bins)


def excise_long(
    grids: np.ndarray, params: OfdmParams, spec: FrameSpec, noise_var: float, budget: int
) -> tuple[np.ndarray, np.ndarray]:
    """Remove DME from full FFT grids ``(n_ac, n_sym, fft_size)``.

    Returns the cleaned grids and, per symbol, the estimated leftover DME power
    per bin.  A window whose pursuit exhausted its budget or needed more than a
    third of the observed bins is beyond what the observations identify: it is
    left unchanged and its reconstructed energy is counted as leftover.
    Subtracting such a reconstruction adds energy about as often as it removes
    it.  Identifiable windows are excised and count as clean.
    """
    obs = observation_bins(params, spec)
    n = params.fft_size
    out = np.array(grids, copy=True)
    F = np.exp(-2j * np.pi * np.outer(np.arange(n), np.arange(n)) / n) / np.sqrt(n)
    leftover = np.zeros(grids.shape[1])
    for m in range(grids.shape[1]):
        est = reconstruct_dme(grids[:, m, obs], obs, n, budget, noise_var)
        if est.budget_exhausted or len(est.support) > len(obs) // 3:
            leftover[m] = np.sum(np.abs(est.samples) ** 2) / est.samples.size
        else:
            out[:, m, :] -= est.samples @ F.T
    return out, leftover


@dataclass
class ReceiverOutput:
    cfo: CfoEstimate
    Y: np.ndarray  # (n_sub, n_ac, M)
    grids: np.ndarray  # (n_ac, M, fft_size) after excision
    disturbance: np.ndarray  # (M,) noise plus expected leftover DME per bin
    removed: np.ndarray  # (n_ac, M, fft_size) DME taken out of the pilot grids


def receive(
    obs: FrameObservation,
    sc: EstimationScenario,
    excision: bool = True,
    cfo_passes: int = 3,
    max_offset: float = 1.2e3,
) -> ReceiverOutput:
    p, spec = sc.params, sc.spec
    rx = obs.rx
    f_total = 0.0
    est = None
    for i in range(max(cfo_passes, 1) if excision else 1):
        cur = compensate_cfo(rx, f_total)
        train = short_train(cur.samples, p, spec)
        if excision:
            train = excise_short(train, p, spec, obs.noise_var, sc.dme_budget, max_offset if i == 0 else 0.0)
        est = estimate_cfo(train, p, spec)
        f_total += est.f_hat
    est = CfoEstimate(f_total, est.confidence, est.low_confidence)
    cur = compensate_cfo(rx, f_total)

    offs = spec.pilot_offsets(p)
    n = p.fft_size
    grids = np.stack(
        [np.fft.fft(cur.samples[:, o + p.cp_len : o + p.cp_len + n], axis=-1, norm="ortho") for o in offs], axis=1
    )
    raw = grids
    if excision:
        grids, leftover = excise_long(grids, p, spec, obs.noise_var, sc.dme_budget)
        disturbance = obs.noise_var + leftover
    else:
        disturbance = np.full(len(offs), obs.noise_var + obs.dme_bin_power)
    pil_bins = p.bins(spec.pilot_subcarrier_idx)
    Y = np.transpose(grids[:, :, pil_bins], (2, 0, 1))
    return ReceiverOutput(est, Y, grids, disturbance, raw - grids)


def pilot_time(sc: EstimationScenario) -> float:
    p, spec = sc.params, sc.spec
    mid = spec.pilot_offsets(p).mean() + p.cp_len + p.fft_size / 2
    return float(mid / p.sample_rate)


def true_channel(obs: FrameObservation, sc: EstimationScenario) -> np.ndarray:
    """Pilot-subcarrier channel with the LoS Doppler removed, at the pilot-section centre."""
    paths = obs.paths.with_doppler(obs.paths.doppler - obs.cfo)
    return evaluate(paths, sc.arrays, sc.params, pilot_time(sc), sc.spec.pilot_subcarrier_idx)


def dictionaries(sc: EstimationScenario) -> tuple[np.ndarray, np.ndarray]:
    a_gs, _ = dft_dictionary(sc.arrays.n_gs, sc.dict_oversample, sc.arrays.element_spacing)
    a_ac, _ = dft_dictionary(sc.arrays.n_ac, sc.dict_oversample, sc.arrays.element_spacing)
    return a_gs, a_ac


def prior_covariance(sc: EstimationScenario) -> np.ndarray:
    """Ensemble covariance of vec(H): GS angle uniform over the coverage sector, AoA over +/-90 deg."""
    R_gs = angular_covariance(sc.arrays.n_gs, sc.aod_range, sc.arrays.element_spacing)
    R_ac = angular_covariance(sc.arrays.n_ac, (-np.pi / 2, np.pi / 2), sc.arrays.element_spacing)
    return kron_covariance(R_ac, R_gs)


def run_gmmv(obs: FrameObservation, sc: EstimationScenario, excision: bool = True):
    """Whiten each pilot symbol by its disturbance level, then run the joint pursuit."""
    out = receive(obs, sc, excision)
    a_gs, a_ac = dictionaries(sc)
    scale = 1.0 / np.sqrt(out.disturbance)
    Y = out.Y * scale
    X = obs.X * scale
    n_meas = Y.size
    stop = n_meas * (1.0 + 3.0 / np.sqrt(n_meas))
    gain = None if sc.gmmv_gain is None else sc.gmmv_gain * (1.0 + 3.0 / np.sqrt(Y.shape[0]))
    est = estimate_channel_gmmv(Y, X, a_gs, a_ac, sc.max_support, stop, gain_factor=gain)
    return est, out


def nmse_gmmv(obs: FrameObservation, sc: EstimationScenario, excision: bool = True) -> float:
    est, _ = run_gmmv(obs, sc, excision)
    return nmse(est.H_hat, true_channel(obs, sc))


def nmse_lmmse(obs: FrameObservation, sc: EstimationScenario, R_h=None) -> float:
    out = receive(obs, sc, excision=False)
    R_h = prior_covariance(sc) if R_h is None else R_h
    H = estimate_channel_lmmse(out.Y, obs.X, R_h, obs.noise_var + obs.dme_bin_power)
    return nmse(H, true_channel(obs, sc))
