"""DME pulse-pair interference: Poisson arrivals, pulse synthesis, SIR calibration.

A DME reply is a pair of Gaussian pulses (12 us apart in X mode, 30 us in Y
mode).  Pair emission instants form a homogeneous Poisson process.  Each
interfering DME channel sits 0.5 MHz or more away from the OFDM carrier; at
the link's 625 kHz sample rate that offset folds into the band, which is how
the sampled receiver sees the out-of-band leakage.  The folding keeps the
pulse envelope (and hence the time-domain sparsity) intact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .waveform import SignalBuffer

PAIR_SPACING = {"X": 12e-6, "Y": 30e-6}


@dataclass(frozen=True)
class DmeParams:
    mode: str = "X"
    pulse_half_amp_width: float = 3.5e-6
    arrival_rate: float = 3600.0
    channel_offset: float = 0.5e6

    def __post_init__(self):
        if self.mode not in PAIR_SPACING:
            raise ValueError(f"mode must be 'X' or 'Y', got {self.mode!r}")
        if self.arrival_rate < 0:
            raise ValueError("arrival_rate must be nonnegative")
        if abs(self.channel_offset) < 0.5e6:
            raise ValueError("|channel_offset| must be at least 0.5 MHz")
        if self.pulse_half_amp_width <= 0:
            raise ValueError("pulse_half_amp_width must be positive")

    @property
    def pair_spacing(self) -> float:
        return PAIR_SPACING[self.mode]

    @property
    def sigma(self) -> float:
        """Standard deviation of the Gaussian amplitude envelope."""
        return self.pulse_half_amp_width / (2.0 * np.sqrt(2.0 * np.log(2.0)))


@dataclass
class DmeRealization:
    arrival_times: np.ndarray
    buffer: SignalBuffer
    achieved_sir_db: float = np.nan


def sample_arrivals(rate: float, duration: float, rng_seed=None) -> np.ndarray:
    """Homogeneous Poisson process on ``[0, duration)``; sorted arrival times."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    rng = np.random.default_rng(rng_seed)
    n = rng.poisson(rate * duration)
    return np.sort(rng.uniform(0.0, duration, size=n))


def envelope(params: DmeParams, arrivals, t: np.ndarray) -> np.ndarray:
    """Real pulse-pair envelope (peak amplitude 1 per pulse) at times ``t``."""
    arrivals = np.asarray(arrivals, dtype=float)
    env = np.zeros_like(t, dtype=float)
    if arrivals.size == 0:
        return env
    s = params.sigma
    reach = 8.0 * s
    for a in arrivals:
        for c in (a, a + params.pair_spacing):
            lo, hi = np.searchsorted(t, [c - reach, c + reach])
            if hi > lo:
                env[lo:hi] += np.exp(-((t[lo:hi] - c) ** 2) / (2.0 * s * s))
    return env


def synthesize(params: DmeParams, arrivals, duration: float, sample_rate: float, t0: float = 0.0) -> SignalBuffer:
    """Sample the DME waveform: pulse pairs at each arrival, mixed to the channel offset.

    Pulses that cross either end of the buffer are simply truncated.  The result
    is a deterministic function of its arguments.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    n = max(int(round(duration * sample_rate)), 1)
    t = t0 + np.arange(n) / sample_rate
    env = envelope(params, arrivals, t)
    return SignalBuffer(env * np.exp(2j * np.pi * params.channel_offset * t), sample_rate, t0)


def dme_channels(base: DmeParams | None = None, offsets=(0.5e6, -0.5e6)) -> list[DmeParams]:
    """The default interference environment: one DME channel either side of the carrier."""
    base = base or DmeParams()
    return [DmeParams(base.mode, base.pulse_half_amp_width, base.arrival_rate, off) for off in offsets]


def realize(channels, duration: float, sample_rate: float, rng_seed=None, t0: float = 0.0) -> DmeRealization:
    """Sum of independent DME channels over ``duration`` seconds."""
    rng = np.random.default_rng(rng_seed)
    total = np.zeros(max(int(round(duration * sample_rate)), 1), dtype=complex)
    all_arrivals = []
    for ch in channels:
        # Start early so pairs already in flight at t0 are included.
        lead = ch.pair_spacing + 8 * ch.sigma
        arr = sample_arrivals(ch.arrival_rate, duration + lead, rng) - lead
        total += synthesize(ch, arr, duration, sample_rate, t0).samples * np.exp(2j * np.pi * rng.uniform())
        all_arrivals.append(arr)
    arrivals = np.sort(np.concatenate(all_arrivals)) if all_arrivals else np.empty(0)
    return DmeRealization(arrivals, SignalBuffer(total, sample_rate, t0))


def measured_sir_db(signal: SignalBuffer, dme: SignalBuffer) -> float:
    return float(10 * np.log10(signal.power() / dme.power()))


def calibrate_sir(dme: SignalBuffer, signal: SignalBuffer, target_sir_db: float) -> tuple[SignalBuffer, float]:
    """Scale ``dme`` so that mean signal power over mean DME power equals the target.

    Returns the scaled buffer and the amplitude scale factor.
    """
    p_d = dme.power()
    p_s = signal.power()
    if p_d == 0 or p_s == 0:
        raise ValueError("both buffers need nonzero power to calibrate SIR")
    scale = float(np.sqrt(p_s / (p_d * 10 ** (target_sir_db / 10))))
    return dme.with_samples(dme.samples * scale), scale


def duty_cycle(params: DmeParams, arrivals, duration: float, sample_rate: float, threshold: float = 0.01) -> float:
    """Fraction of samples whose envelope exceeds ``threshold`` of the peak."""
    t = np.arange(max(int(round(duration * sample_rate)), 1)) / sample_rate
    env = envelope(params, arrivals, t)
    peak = env.max() if env.size else 0.0
    if peak == 0:
        return 0.0
    return float(np.mean(env > threshold * peak))
