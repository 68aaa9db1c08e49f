"""Link-level BER of the beam-management schemes along a flight.

Each frame of a flight runs the estimation frame (DME excision, offset
compensation, joint-sparse channel recovery), designs the beams from the
estimate, then sends a short training section and QPSK data through them.
Directional DME reaches the aircraft array throughout.  The schemes see the
same channel, DME pulses, noise and data bits, so their BERs are compared on
common random numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import interference as itf
from ..channel import ArrayConfig, FlightTrack, dft_dictionary, evaluate, los_geometry, steering
from ..estimation import pipeline as pl
from ..estimation.tracking import track_low_dim
from ..waveform import FrameSpec, OfdmParams, qpsk, qpsk_hard
from .beams import (
    BeamformerSet,
    beam_track_pgd,
    covariance_feedback_update,
    covariance_init,
    optimize_ao,
    ss_hb,
)

SCHEMES = ("ao", "pgd", "sshb")


@dataclass
class BeamScenario:
    params: OfdmParams = field(default_factory=OfdmParams)
    arrays: ArrayConfig = field(default_factory=ArrayConfig)
    n_pilot_syms: int = 8
    n_train_syms: int = 2
    n_data_syms: int = 29
    sir_db: float = -15.0  # data phase, per antenna, against the matched-beam signal
    est_snr_db: float = 15.0  # estimation frame operating point
    est_sir_db: float = -3.8
    dme: itf.DmeParams = field(default_factory=itf.DmeParams)
    min_dme_separation: float = np.deg2rad(20.0)  # from the LoS arrival angle
    rician_db: float = 15.0
    n_scatter: int = 4
    distance_range: tuple = (5e3, 20e3)  # initial slant range (m)
    frames_per_flight: int = 10
    frame_interval: float = 0.5  # time between beam updates (s)
    forgetting: float = 0.5
    erasure_radius: float = 0.5
    pgd_step: float = 0.05
    pgd_iters: int = 5
    ao_max_outer: int = 20

    def estimation(self) -> pl.EstimationScenario:
        spec = FrameSpec.default(self.params, n_pilot_syms=self.n_pilot_syms)
        return pl.EstimationScenario(
            params=self.params,
            spec=spec,
            arrays=self.arrays,
            snr_db=self.est_snr_db,
            sir_db=self.est_sir_db,
            dme=self.dme,
            rician_db=self.rician_db,
            n_scatter=self.n_scatter,
        )

    @property
    def bits_per_frame(self) -> int:
        spec = FrameSpec.default(self.params)
        return 2 * self.n_data_syms * len(spec.data_subcarrier_idx(self.params))


@dataclass
class BerResult:
    snr_db: np.ndarray
    ber: dict  # scheme -> (n_snr,) bit error rate
    bits: int  # bits per SNR point
    sinr_db: dict  # scheme -> (n_snr,) mean SINR of the chosen beams on the true channel
    frame_sinr_db: dict  # scheme -> (n_frames, n_snr) the same, per frame


def _dme_grid(sc: BeamScenario, rng, n_sym: int, direction: float, power: float) -> np.ndarray:
    """Directional DME seen at the aircraft, per symbol window: (n_sym, n_ac, fft_size)."""
    p = sc.params
    n = n_sym * p.symbol_len
    real = itf.realize(itf.dme_channels(sc.dme), n / p.sample_rate, p.sample_rate, rng)
    x = real.buffer.samples
    px = np.mean(np.abs(x) ** 2)
    if px > 0:
        x = x * np.sqrt(power / px)
    a = steering(sc.arrays.n_ac, direction, sc.arrays.element_spacing)
    win = np.stack([x[m * p.symbol_len + p.cp_len : (m + 1) * p.symbol_len] for m in range(n_sym)])
    fd = np.fft.fft(win, axis=-1, norm="ortho")  # (n_sym, fft)
    return a[None, :, None] * fd[:, None, :]


def _flight(rng: np.random.Generator, sc: BeamScenario) -> tuple[FlightTrack, float, int]:
    """A random flight, a DME direction away from the LoS arrival, a scatterer seed."""
    track = pl.random_geometry(rng, (np.deg2rad(-60), np.deg2rad(60)), 277.78, sc.distance_range)
    aoa = los_geometry(track, 0.0)["aoa"]
    while True:
        d = rng.uniform(-np.pi / 2, np.pi / 2)
        if abs(d - aoa) >= sc.min_dme_separation:
            return track, d, int(rng.integers(2**31))


def _detect(z, h):
    """Equalised symbols and the nearest QPSK points."""
    s = z / h
    return s, (np.sign(s.real) + 1j * np.sign(s.imag)) / np.sqrt(2)


def simulate_ber(
    schemes=SCHEMES,
    snr_grid=(0.0, 3.0, 6.0, 9.0, 12.0),
    scenario: BeamScenario | None = None,
    n_bits: int = 100_000,
    seed: int = 0,
) -> BerResult:
    """QPSK BER per SNR point for each beam-management scheme.

    Parameters
    ----------
    schemes : iterable of {"ao", "pgd", "sshb"}
    snr_grid : iterable of float
        Link SNR (dB): the interference-free SNR of ideal matched transceiver
        beams, ``mean_k sigma_max(H_k)^2 * P / noise_var``.  DME power per
        aircraft antenna is set ``sir_db`` below the per-antenna signal power
        under those beams.
    n_bits : int
        Minimum number of data bits per SNR point; whole flights are simulated
        until it is reached.

    Returns
    -------
    BerResult
    """
    sc = BeamScenario() if scenario is None else scenario
    schemes = tuple(schemes)
    for s in schemes:
        if s not in SCHEMES:
            raise ValueError(f"unknown scheme {s!r}")
    p, arr = sc.params, sc.arrays
    snr_grid = np.asarray(snr_grid, dtype=float)
    n_snr = len(snr_grid)
    n_frames = int(np.ceil(n_bits / sc.bits_per_frame))
    n_flights = int(np.ceil(n_frames / sc.frames_per_flight))
    a_gs, _ = dft_dictionary(arr.n_gs, 2, arr.element_spacing)
    errors = {s: np.zeros(n_snr) for s in schemes}
    sinrs = {s: [] for s in schemes}
    n_frames_run = 0

    est_sc = sc.estimation()
    data_idx = est_sc.spec.data_subcarrier_idx(p)
    data_bins = p.bins(data_idx)
    K = len(data_idx)
    n_sym = sc.n_train_syms + sc.n_data_syms
    ntr = sc.n_train_syms
    frame_dur = est_sc.spec.frame_len(p) / p.sample_rate
    t_rel = frame_dur + (np.arange(n_sym) * p.symbol_len + p.cp_len + p.fft_size / 2) / p.sample_rate

    for fs in np.random.SeedSequence(seed).spawn(n_flights):
        frng = np.random.default_rng(fs)
        track, dme_dir, scatter_seed = _flight(frng, sc)
        state = [dict() for _ in range(n_snr)]
        for fr in range(sc.frames_per_flight):
            t = fr * sc.frame_interval
            obs = pl.simulate_frame(est_sc, frng, track=track, t=t, dme_direction=dme_dir, scatter_seed=scatter_seed)
            est, out = pl.run_gmmv(obs, est_sc, excision=True)
            H_design = est.H_hat.mean(axis=0)
            snaps = out.removed.transpose(0, 2, 1).reshape(arr.n_ac, -1)
            snaps = snaps[:, np.any(np.abs(snaps) > 0, axis=0)]

            # Data phase: LoS Doppler removed by an ideal RF shifter.
            paths = obs.paths.with_doppler(obs.paths.doppler - obs.cfo)
            Hk = np.stack([evaluate(paths, arr, p, tt, data_idx) for tt in t_rel])  # (n_sym, K, n_ac, n_gs)
            ref_gain = np.mean(np.linalg.norm(Hk[0], ord=2, axis=(1, 2)) ** 2)
            dme_power = ref_gain / arr.n_ac * 10 ** (-sc.sir_db / 10)
            D = _dme_grid(sc, frng, n_sym, dme_dir, dme_power)[:, :, data_bins]
            W = (frng.standard_normal((n_sym, arr.n_ac, K)) + 1j * frng.standard_normal((n_sym, arr.n_ac, K))) / np.sqrt(2)
            bits = frng.integers(0, 2, size=(n_sym, K, 2))
            sym = qpsk(bits.reshape(n_sym, -1)).reshape(n_sym, K)
            a_dme = steering(arr.n_ac, dme_dir, arr.element_spacing)

            for s in schemes:
                sinrs[s].append(np.zeros(n_snr))
            for i_snr, snr in enumerate(snr_grid):
                noise_var = ref_gain * 10 ** (-snr / 10)
                Rtrue = dme_power * np.outer(a_dme, a_dme.conj()) + noise_var * np.eye(arr.n_ac)
                for s in schemes:
                    beams = _design(s, state[i_snr], H_design, snaps, noise_var, a_gs, sc)
                    g = np.einsum("mkag,g->mka", Hk, beams.w_gs)  # (n_sym, K, n_ac)
                    Y = g.transpose(0, 2, 1) * sym[:, None, :] + D + np.sqrt(noise_var) * W  # (n_sym, n_ac, K)
                    z = np.einsum("a,mak->mk", beams.w_ac.conj(), Y)
                    low = track_low_dim(
                        Y[:ntr].transpose(2, 1, 0), sym[:ntr].T, beams.w_ac, data_idx, p.fft_size, p.cp_len
                    )
                    soft, hard = _detect(z[ntr:], low.h_hat[None, :])
                    errors[s][i_snr] += np.count_nonzero(qpsk_hard(soft) != bits[ntr:].ravel())
                    h_eff = np.einsum("a,mka->mk", beams.w_ac.conj(), g)
                    sinrs[s][-1][i_snr] = 10 * np.log10(
                        np.mean(np.abs(h_eff) ** 2) / np.vdot(beams.w_ac, Rtrue @ beams.w_ac).real
                    )
                    if s in ("ao", "pgd"):
                        _feedback(state[i_snr], s, Y, sym, hard, soft, ntr, sc)
            n_frames_run += 1
    bits_per_point = n_frames_run * 2 * sc.n_data_syms * K
    ber = {s: errors[s] / bits_per_point for s in schemes}
    frame_sinr = {s: np.array(sinrs[s]) for s in schemes}
    return BerResult(snr_grid, ber, bits_per_point, {s: v.mean(axis=0) for s, v in frame_sinr.items()}, frame_sinr)


def _design(scheme, state, H_design, snaps, noise_var, a_gs, sc: BeamScenario) -> BeamformerSet:
    if scheme == "sshb":
        return ss_hb(H_design, a_gs, sc.arrays.n_rf_gs)
    key = f"R_{scheme}"
    if key not in state:
        state[key] = covariance_init(snaps, noise_var, sc.arrays.n_ac)
    R = state[key].R
    if scheme == "ao" or "beams_pgd" not in state:
        beams, _ = optimize_ao(H_design, R, max_outer=sc.ao_max_outer, n_rf=sc.arrays.n_rf_gs)
        if scheme == "pgd":
            state["beams_pgd"] = beams
        return beams
    beams = beam_track_pgd(state["beams_pgd"], H_design, R, sc.pgd_step, sc.pgd_iters)
    state["beams_pgd"] = beams
    return beams


def _feedback(state, scheme, Y, sym, hard, soft, ntr, sc: BeamScenario) -> None:
    """Refresh the scheme's covariance from training symbols and data decisions."""
    decided = np.concatenate([sym[:ntr], hard], axis=0)  # (n_sym, K)
    erased = np.concatenate([np.zeros_like(sym[:ntr], dtype=bool), np.abs(soft - hard) > sc.erasure_radius], axis=0)
    # Per-antenna channel through the GS beam, fitted on the decisions.
    keep = ~erased
    num = np.einsum("mak,mk->ak", Y, np.where(keep, decided.conj(), 0))
    den = np.sum(np.where(keep, np.abs(decided) ** 2, 0), axis=0)
    g = num / np.maximum(den, 1e-12)  # (n_ac, K)
    n_ac = Y.shape[1]
    rx = Y.transpose(1, 0, 2).reshape(n_ac, -1)
    ch = np.broadcast_to(g[:, None, :], (n_ac,) + decided.shape).reshape(n_ac, -1)
    key = f"R_{scheme}"
    state[key] = covariance_feedback_update(
        state[key], decided.ravel(), rx, ch, sc.forgetting, erasures=erased.ravel()
    )
