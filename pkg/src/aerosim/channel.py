"""Geometric sparse air-to-ground MIMO channel.

Ground station (GS) at the origin with a uniform linear array along the x
axis; the aircraft carries a short ULA along its direction of flight.  A path
``l`` contributes

    H[k, t] += g_l exp(j 2 pi f_d,l t) exp(-j 2 pi k df tau_l) a_ac(phi_l) a_gs(theta_l)^H

with unit-modulus steering entries, so with sum |g_l|^2 = 1 every entry of H
has unit average power.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .waveform import OfdmParams, SignalBuffer

C_LIGHT = 299_792_458.0
CARRIER = 1.08e9


@dataclass(frozen=True)
class ArrayConfig:
    n_gs: int = 32
    n_ac: int = 4
    element_spacing: float = 0.5
    n_rf_gs: int = 4

    def __post_init__(self):
        if self.n_ac < 1 or self.n_gs < 1:
            raise ValueError("arrays need at least one element")
        if not 1 <= self.n_rf_gs <= self.n_gs:
            raise ValueError("n_rf_gs must be in [1, n_gs]")


def steering(n: int, angle, spacing: float = 0.5) -> np.ndarray:
    """ULA response with unit-modulus entries; ``angle`` from broadside (rad).

    A vector of angles gives an ``(n, len(angle))`` matrix.
    """
    angle = np.asarray(angle, dtype=float)
    m = np.arange(n).reshape((n,) + (1,) * angle.ndim)
    return np.exp(2j * np.pi * spacing * m * np.sin(angle))


def dft_dictionary(n: int, oversample: int = 2, spacing: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Steering dictionary on a uniform sin-angle grid.

    Returns ``(atoms, angles)`` with atoms of shape ``(n, oversample * n)``.
    For half-wavelength spacing the grid is exactly the oversampled DFT grid.
    """
    g = oversample * n
    u = -1.0 + 2.0 * np.arange(g) / g
    u = u / (2 * spacing)
    angles = np.arcsin(np.clip(u, -1, 1))
    return steering(n, angles, spacing), angles


@dataclass(frozen=True)
class FlightTrack:
    """Straight flight at constant velocity; ``position(t) = start + velocity * t``."""

    start: tuple = (-20e3, 30e3, 10e3)
    velocity: tuple = (277.78, 0.0, 0.0)

    def position(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.asarray(self.start) + np.multiply.outer(t, np.asarray(self.velocity))

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.velocity))

    def cross_track_shift(self, offset: float) -> "FlightTrack":
        """Same track displaced horizontally, perpendicular to the velocity."""
        v = np.asarray(self.velocity, dtype=float)
        side = np.array([-v[1], v[0], 0.0])
        norm = np.linalg.norm(side)
        side = side / norm if norm else np.array([0.0, 1.0, 0.0])
        return FlightTrack(tuple(np.asarray(self.start) + offset * side), self.velocity)


@dataclass
class PathSet:
    """Per-path parameters; index 0 is the LoS path."""

    gains: np.ndarray
    delays: np.ndarray
    aod: np.ndarray
    aoa: np.ndarray
    doppler: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("gains", "delays", "aod", "aoa", "doppler"):
            setattr(self, name, np.atleast_1d(np.asarray(getattr(self, name))))
        n = len(self.gains)
        if any(len(getattr(self, a)) != n for a in ("delays", "aod", "aoa", "doppler")):
            raise ValueError("path arrays must have equal length")
        if np.any(self.delays < 0):
            raise ValueError("delays must be nonnegative")

    def __len__(self) -> int:
        return len(self.gains)

    @property
    def rician_factor(self) -> float:
        nlos = np.sum(np.abs(self.gains[1:]) ** 2)
        return float(np.abs(self.gains[0]) ** 2 / nlos) if nlos > 0 else np.inf

    def with_doppler(self, doppler) -> "PathSet":
        return replace(self, doppler=np.broadcast_to(np.asarray(doppler, float), self.gains.shape).copy())


def doppler_of_path(speed: float, carrier: float, angle_to_velocity: float) -> float:
    """Doppler shift (Hz) of a path arriving at ``angle_to_velocity`` from the flight direction."""
    if speed < 0:
        raise ValueError("speed must be nonnegative")
    return speed / C_LIGHT * carrier * np.cos(angle_to_velocity)


def los_geometry(track: FlightTrack, t: float, gs_position=(0.0, 0.0, 0.0)) -> dict:
    """LoS angles and Doppler of the aircraft at time ``t`` seen from the GS."""
    p = track.position(t)
    gs = np.asarray(gs_position, dtype=float)
    d = p - gs
    dist = np.linalg.norm(d)
    u = d / dist
    v = np.asarray(track.velocity, dtype=float)
    speed = np.linalg.norm(v)
    aod = np.arcsin(u[0])
    if speed > 0:
        # Aircraft array axis is the flight direction; the wave arrives from -u.
        cos_va = float(np.dot(v / speed, -u))
    else:
        cos_va = 0.0
    aoa = np.arcsin(np.clip(cos_va, -1, 1))
    return {
        "distance": dist,
        "aod": aod,
        "aoa": aoa,
        "angle_to_velocity": np.arccos(np.clip(cos_va, -1, 1)),
        "speed": speed,
    }


def generate_paths(
    track: FlightTrack,
    arrays: ArrayConfig,
    t: float = 0.0,
    rician_db: float = 15.0,
    n_scatter: int = 4,
    beamwidth: float = np.deg2rad(3.5),
    rng_seed=None,
    carrier: float = CARRIER,
    max_excess_delay: float = 5e-6,
    gs_position=(0.0, 0.0, 0.0),
) -> PathSet:
    """LoS path from the geometry plus ``n_scatter`` scattered paths.

    Scattered angles are uniform within ``beamwidth`` around the LoS angles,
    delays uniform in ``(0, max_excess_delay]``, gains complex normal rescaled
    so that the LoS-to-scatter power ratio is exactly the Rician factor.
    """
    if n_scatter < 0:
        raise ValueError("n_scatter must be nonnegative")
    rng = np.random.default_rng(rng_seed)
    geo = los_geometry(track, t, gs_position)
    k = 10 ** (rician_db / 10)
    los_phase = np.exp(-2j * np.pi * carrier * geo["distance"] / C_LIGHT)

    aod = np.full(1 + n_scatter, geo["aod"])
    aoa = np.full(1 + n_scatter, geo["aoa"])
    delays = np.zeros(1 + n_scatter)
    psi = np.full(1 + n_scatter, geo["angle_to_velocity"])
    gains = np.zeros(1 + n_scatter, dtype=complex)
    if n_scatter:
        half = beamwidth / 2
        d_aod = rng.uniform(-half, half, n_scatter)
        d_aoa = rng.uniform(-half, half, n_scatter)
        aod[1:] += d_aod
        aoa[1:] += d_aoa
        # sin(aoa + d) = cos(psi - d): the arrival direction turns the other way.
        psi[1:] -= d_aoa
        delays[1:] = max_excess_delay * (1.0 - rng.uniform(0.0, 1.0, n_scatter))
        g = (rng.standard_normal(n_scatter) + 1j * rng.standard_normal(n_scatter)) / np.sqrt(2)
        gains[1:] = g / np.linalg.norm(g) * np.sqrt(1.0 / (k + 1))
        gains[0] = np.sqrt(k / (k + 1)) * los_phase
    else:
        gains[0] = los_phase
    doppler = np.array([doppler_of_path(geo["speed"], carrier, a) for a in psi])
    return PathSet(gains, delays, aod, aoa, doppler, meta={"t": t, "carrier": carrier})


def evaluate(paths: PathSet, arrays: ArrayConfig, params: OfdmParams, t: float = 0.0, subcarriers=None) -> np.ndarray:
    """Channel matrices ``H[k]`` of shape ``(n_sub, n_ac, n_gs)`` at time ``t``.

    ``subcarriers`` are signed indices; all used subcarriers by default.
    """
    k = params.used_index if subcarriers is None else np.asarray(subcarriers)
    a_ac = steering(arrays.n_ac, paths.aoa, arrays.element_spacing)  # (n_ac, L)
    a_gs = steering(arrays.n_gs, paths.aod, arrays.element_spacing)  # (n_gs, L)
    coef = paths.gains * np.exp(2j * np.pi * paths.doppler * t)  # (L,)
    phase = np.exp(-2j * np.pi * np.outer(k * params.subcarrier_spacing, paths.delays))  # (K, L)
    return np.einsum("kl,il,jl->kij", phase * coef, a_ac, a_gs.conj())


def fractional_delay(x: np.ndarray, delay_samples: float, n_taps: int = 32) -> np.ndarray:
    """Delay along the last axis by a possibly fractional number of samples.

    Integer delays are exact shifts; the fractional part uses a Kaiser-windowed
    sinc with ``n_taps`` taps.  Output has the input's length (zero-filled start).
    """
    n_int = int(np.floor(delay_samples))
    frac = delay_samples - n_int
    y = np.zeros_like(x)
    if frac > 1e-12:
        half = n_taps // 2
        m = np.arange(-half + 1, half + 1)
        h = np.sinc(m - frac) * np.kaiser(n_taps, 8.0)
        h /= h.sum()
        # y[n] = sum_m h[m] x[n - m]; convolve and realign to the m index range.
        full = np.apply_along_axis(lambda v: np.convolve(v, h), -1, x)
        start = half - 1
        x = full[..., start : start + x.shape[-1]]
    if n_int >= x.shape[-1]:
        return y
    if n_int > 0:
        y[..., n_int:] = x[..., : x.shape[-1] - n_int]
    else:
        y[...] = x
    return y


def apply(buf: SignalBuffer, paths: PathSet, arrays: ArrayConfig, tx_weights=None) -> SignalBuffer:
    """Propagate a GS transmission through the paths to the aircraft antennas.

    ``buf`` holds either one stream (then ``tx_weights`` of length ``n_gs``
    spreads it over the GS array) or ``n_gs`` per-antenna streams.  Doppler is
    a continuous phase rotation on the global clock ``buf.t0 + n / fs``.
    Returns an ``(n_ac, n_samples)`` buffer.
    """
    x = buf.samples
    if x.ndim == 1:
        w = np.ones(arrays.n_gs) if tx_weights is None else np.asarray(tx_weights, dtype=complex)
        if w.shape != (arrays.n_gs,):
            raise ValueError("tx_weights must have length n_gs")
        x = np.outer(w, x)
    elif tx_weights is not None:
        raise ValueError("tx_weights only apply to a single-stream buffer")
    if x.shape[0] != arrays.n_gs:
        raise ValueError("multi-stream buffer must have n_gs rows")
    t = buf.times
    a_ac = steering(arrays.n_ac, paths.aoa, arrays.element_spacing)
    a_gs = steering(arrays.n_gs, paths.aod, arrays.element_spacing)
    out = np.zeros((arrays.n_ac, x.shape[-1]), dtype=complex)
    for l in range(len(paths)):
        s = a_gs[:, l].conj() @ x
        s = fractional_delay(s, paths.delays[l] * buf.sample_rate)
        s = paths.gains[l] * s * np.exp(2j * np.pi * paths.doppler[l] * t)
        out += np.outer(a_ac[:, l], s)
    return SignalBuffer(out, buf.sample_rate, buf.t0)


def overhead_pass_doppler(
    track: FlightTrack,
    carrier: float = CARRIER,
    times=None,
    gs_position=(0.0, 0.0, 0.0),
) -> tuple[np.ndarray, np.ndarray]:
    """LoS Doppler along the track, returned as ``(times, f_d)``.

    Positive while approaching.  By default the window is centred on the
    closest approach and spans +/-120 s.
    """
    p0 = np.asarray(track.start, dtype=float) - np.asarray(gs_position, dtype=float)
    v = np.asarray(track.velocity, dtype=float)
    if times is None:
        t_ca = -np.dot(p0, v) / np.dot(v, v)
        times = t_ca + np.linspace(-120.0, 120.0, 2401)
    times = np.asarray(times, dtype=float)
    rel = track.position(times) - np.asarray(gs_position, dtype=float)
    rng_ = np.linalg.norm(rel, axis=-1)
    radial = -(rel @ v) / rng_
    return times, radial / C_LIGHT * carrier


def closest_approach_time(track: FlightTrack, gs_position=(0.0, 0.0, 0.0)) -> float:
    p0 = np.asarray(track.start, dtype=float) - np.asarray(gs_position, dtype=float)
    v = np.asarray(track.velocity, dtype=float)
    return float(-np.dot(p0, v) / np.dot(v, v))
