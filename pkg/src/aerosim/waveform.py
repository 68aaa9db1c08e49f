"""OFDM modulation, demodulation and the channel-estimation frame layout.

Subcarriers are addressed by their signed index ``k`` relative to DC, so the
default 50 used subcarriers are ``-25..-1, 1..25``.  FFT bins are ``k mod N``.
All transforms are unitary (``norm="ortho"``), which makes a noiseless
modulate/demodulate round trip the identity and Parseval checks exact.

The short-symbol section carries ``n_short_syms`` repetitions of a
``fft_size // short_decimation`` sample body preceded by a single cyclic prefix
of ``n_short_syms * round(cp_len / short_decimation)`` samples.  Four
repetitions of a 16-sample body therefore fill exactly one 64-sample window
whose spectrum only occupies every fourth bin; the empty bins observe
impulsive interference, and adjacent repetitions give a 16-sample correlation
lag for frequency-offset estimation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class OfdmParams:
    """Numerology of the OFDM link.

    The default spacing 625 kHz / 64 = 9765.625 Hz makes a 64-point symbol
    last exactly 102.4 us.
    """

    subcarrier_spacing: float = 9765.625
    fft_size: int = 64
    cp_len: int = 11
    used_subcarriers: int = 50

    def __post_init__(self):
        if self.fft_size < 2:
            raise ValueError("fft_size must be >= 2")
        if not 0 <= self.cp_len < self.fft_size:
            raise ValueError("cp_len must satisfy 0 <= cp_len < fft_size")
        if not 0 < self.used_subcarriers <= self.fft_size - 1:
            raise ValueError("used_subcarriers must be in [1, fft_size - 1]")
        if self.used_subcarriers % 2:
            raise ValueError("used_subcarriers must be even (symmetric around DC)")
        if self.subcarrier_spacing <= 0:
            raise ValueError("subcarrier_spacing must be positive")

    @property
    def sample_rate(self) -> float:
        return self.subcarrier_spacing * self.fft_size

    @property
    def symbol_len(self) -> int:
        return self.fft_size + self.cp_len

    @property
    def useful_duration(self) -> float:
        return self.fft_size / self.sample_rate

    @property
    def used_index(self) -> np.ndarray:
        """Signed indices of the used subcarriers, DC excluded."""
        half = self.used_subcarriers // 2
        return np.r_[-half:0, 1 : half + 1]

    def bins(self, k) -> np.ndarray:
        return np.mod(np.asarray(k), self.fft_size)

    @property
    def unused_bins(self) -> np.ndarray:
        """FFT bins that never carry energy (DC and guard bands)."""
        used = set(self.bins(self.used_index).tolist())
        return np.array([b for b in range(self.fft_size) if b not in used], dtype=int)


@dataclass(frozen=True)
class FrameSpec:
    """Layout of one estimation frame: short section, pilot symbols, data symbols.

    ``null_subcarrier_idx`` and ``pilot_subcarrier_idx`` hold signed subcarrier
    indices.  Data symbols use every used subcarrier that is not a null.
    """

    null_subcarrier_idx: tuple
    pilot_subcarrier_idx: tuple
    n_short_syms: int = 4
    short_decimation: int = 4
    n_pilot_syms: int = 4
    n_data_syms: int = 0

    def __post_init__(self):
        if self.n_short_syms < 2:
            raise ValueError("n_short_syms must be >= 2")
        if self.short_decimation < 1:
            raise ValueError("short_decimation must be >= 1")
        if self.n_pilot_syms < 0 or self.n_data_syms < 0:
            raise ValueError("symbol counts must be nonnegative")
        object.__setattr__(self, "null_subcarrier_idx", tuple(int(k) for k in self.null_subcarrier_idx))
        object.__setattr__(self, "pilot_subcarrier_idx", tuple(int(k) for k in self.pilot_subcarrier_idx))
        if set(self.null_subcarrier_idx) & set(self.pilot_subcarrier_idx):
            raise ValueError("null and pilot subcarrier sets must be disjoint")

    @classmethod
    def default(cls, params: OfdmParams, n_nulls: int = 8, **kwargs) -> "FrameSpec":
        """Nulls spread over the used band, pilots on every remaining used subcarrier."""
        used = params.used_index
        if not 0 <= n_nulls < len(used):
            raise ValueError("n_nulls out of range")
        pos = np.round(np.linspace(0, len(used) - 1, n_nulls + 2)[1:-1]).astype(int)
        nulls = used[pos]
        pilots = np.setdiff1d(used, nulls)
        return cls(null_subcarrier_idx=tuple(nulls), pilot_subcarrier_idx=tuple(pilots), **kwargs)

    def validate(self, params: OfdmParams) -> None:
        used = set(params.used_index.tolist())
        for name, idx in (("null", self.null_subcarrier_idx), ("pilot", self.pilot_subcarrier_idx)):
            bad = [k for k in idx if k not in used]
            if bad:
                raise ValueError(f"{name} subcarriers outside the used band: {bad}")
        if params.fft_size % self.short_decimation:
            raise ValueError("short_decimation must divide fft_size")

    def data_subcarrier_idx(self, params: OfdmParams) -> np.ndarray:
        return np.setdiff1d(params.used_index, self.null_subcarrier_idx)

    # -- short section geometry -------------------------------------------------

    def short_len(self, params: OfdmParams) -> int:
        return params.fft_size // self.short_decimation

    def short_cp_len(self, params: OfdmParams) -> int:
        return self.n_short_syms * int(round(params.cp_len / self.short_decimation))

    def short_section_len(self, params: OfdmParams) -> int:
        return self.short_cp_len(params) + self.n_short_syms * self.short_len(params)

    def short_index(self, params: OfdmParams) -> np.ndarray:
        """Signed subcarrier indices (in short-FFT units) carried by short symbols."""
        half = params.used_subcarriers // (2 * self.short_decimation)
        return np.r_[-half:0, 1 : half + 1]

    def frame_len(self, params: OfdmParams) -> int:
        return self.short_section_len(params) + (self.n_pilot_syms + self.n_data_syms) * params.symbol_len

    def pilot_offsets(self, params: OfdmParams) -> np.ndarray:
        start = self.short_section_len(params)
        return start + params.symbol_len * np.arange(self.n_pilot_syms)

    def data_offsets(self, params: OfdmParams) -> np.ndarray:
        start = self.short_section_len(params) + self.n_pilot_syms * params.symbol_len
        return start + params.symbol_len * np.arange(self.n_data_syms)


@dataclass
class SignalBuffer:
    """Complex baseband samples; the last axis is time (leading axes: antennas)."""

    samples: np.ndarray
    sample_rate: float
    t0: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.size == 0 or self.samples.shape[-1] == 0:
            raise ValueError("SignalBuffer must hold at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("SignalBuffer samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self) -> int:
        return self.samples.shape[-1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self)) / self.sample_rate

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))

    def with_samples(self, samples) -> "SignalBuffer":
        return SignalBuffer(samples, self.sample_rate, self.t0, dict(self.meta))

    def __add__(self, other: "SignalBuffer") -> "SignalBuffer":
        if other.sample_rate != self.sample_rate or len(other) != len(self):
            raise ValueError("buffers must share sample rate and length")
        return self.with_samples(self.samples + other.samples)


def short_training_values(spec: FrameSpec, params: OfdmParams) -> np.ndarray:
    """Known unit-modulus values on the short-symbol subcarriers (Zadoff-Chu phases)."""
    n = len(spec.short_index(params))
    m = np.arange(n)
    return np.exp(-1j * np.pi * m * (m + (n % 2)) / n)


def _ofdm_symbol(values: np.ndarray, bins: np.ndarray, n_fft: int, cp: int) -> np.ndarray:
    grid = np.zeros(values.shape[:-1] + (n_fft,), dtype=complex)
    grid[..., bins] = values
    body = np.fft.ifft(grid, axis=-1, norm="ortho")
    return np.concatenate([body[..., n_fft - cp :], body], axis=-1) if cp else body


def short_section(params: OfdmParams, spec: FrameSpec, values=None) -> np.ndarray:
    """Time-domain short section: one cyclic prefix then repeated short bodies."""
    ls = spec.short_len(params)
    if values is None:
        values = short_training_values(spec, params)
    values = np.asarray(values, dtype=complex)
    body = _ofdm_symbol(values, np.mod(spec.short_index(params), ls), ls, 0)
    train = np.tile(body, (1,) * (body.ndim - 1) + (spec.n_short_syms,))
    cp = spec.short_cp_len(params)
    # cp may exceed one body; take it cyclically from the train tail.
    return np.concatenate([train[..., train.shape[-1] - cp :], train], axis=-1) if cp else train


def modulate_frame(
    params: OfdmParams,
    spec: FrameSpec,
    pilot_values,
    data_symbols,
    short_values=None,
) -> SignalBuffer:
    """Build one time-domain frame.

    Parameters
    ----------
    pilot_values : array_like, shape (..., n_pilot_syms, n_pilot_subcarriers)
        Values on ``spec.pilot_subcarrier_idx``.  Leading axes (e.g. transmit
        antennas) are carried through to the output.
    data_symbols : array_like, shape (..., n_data_syms, n_data_subcarriers)
        Values on every non-null used subcarrier.
    short_values : array_like, optional
        Short-symbol subcarrier values; the known training sequence by default.
        Pass zeros to blank the short section.

    Returns
    -------
    SignalBuffer
        Short section, pilot symbols, then data symbols, each long symbol with
        its cyclic prefix.  Null subcarriers carry exactly zero.
    """
    spec.validate(params)
    pilot_values = np.asarray(pilot_values, dtype=complex)
    data_symbols = np.asarray(data_symbols, dtype=complex)
    n_pil = len(spec.pilot_subcarrier_idx)
    data_idx = spec.data_subcarrier_idx(params)
    if pilot_values.shape[-2:] != (spec.n_pilot_syms, n_pil):
        raise ValueError(f"pilot_values must end in shape {(spec.n_pilot_syms, n_pil)}, got {pilot_values.shape}")
    if data_symbols.shape[-2:] != (spec.n_data_syms, len(data_idx)):
        raise ValueError(
            f"data_symbols must end in shape {(spec.n_data_syms, len(data_idx))}, got {data_symbols.shape}"
        )
    lead = np.broadcast_shapes(pilot_values.shape[:-2], data_symbols.shape[:-2])
    pilot_values = np.broadcast_to(pilot_values, lead + pilot_values.shape[-2:])
    data_symbols = np.broadcast_to(data_symbols, lead + data_symbols.shape[-2:])

    if short_values is None:
        short_values = short_training_values(spec, params)
    short = np.broadcast_to(short_section(params, spec, short_values), lead + (spec.short_section_len(params),))

    n = params.fft_size
    pil = _ofdm_symbol(pilot_values, params.bins(spec.pilot_subcarrier_idx), n, params.cp_len)
    dat = _ofdm_symbol(data_symbols, params.bins(data_idx), n, params.cp_len)
    parts = [
        short,
        pil.reshape(lead + (-1,)),
        dat.reshape(lead + (-1,)),
    ]
    return SignalBuffer(np.concatenate(parts, axis=-1), params.sample_rate)


def symbol_spectrum(samples: np.ndarray, n_fft: int, cp_len: int, offset: int) -> np.ndarray:
    """Strip the cyclic prefix at ``offset`` and return the full unitary FFT."""
    if offset < 0 or offset + cp_len + n_fft > samples.shape[-1]:
        raise IndexError(f"symbol at offset {offset} runs outside the buffer")
    body = samples[..., offset + cp_len : offset + cp_len + n_fft]
    return np.fft.fft(body, axis=-1, norm="ortho")


def demodulate_symbol(buf: SignalBuffer, params: OfdmParams, symbol_offset: int) -> np.ndarray:
    """Per-used-subcarrier values of the long symbol starting (CP included) at ``symbol_offset``."""
    spec_full = symbol_spectrum(buf.samples, params.fft_size, params.cp_len, symbol_offset)
    return spec_full[..., params.bins(params.used_index)]


def demodulate_symbols(buf: SignalBuffer, params: OfdmParams, offsets) -> np.ndarray:
    """Full FFT grids of several long symbols, shape (..., n_symbols, fft_size)."""
    return np.stack([symbol_spectrum(buf.samples, params.fft_size, params.cp_len, int(o)) for o in offsets], axis=-2)


def used_values(fd_symbol: np.ndarray, params: OfdmParams, subcarriers) -> np.ndarray:
    """Pick signed subcarriers out of a per-used-subcarrier vector."""
    pos = np.searchsorted(params.used_index, np.asarray(subcarriers))
    if np.any(params.used_index[np.clip(pos, 0, len(params.used_index) - 1)] != np.asarray(subcarriers)):
        raise IndexError("subcarrier not in the used band")
    return fd_symbol[..., pos]


def extract_nulls(fd_symbol: np.ndarray, spec: FrameSpec, params: OfdmParams | None = None) -> np.ndarray:
    """Values observed on the null subcarriers of a demodulated symbol."""
    params = params or OfdmParams()
    return used_values(fd_symbol, params, spec.null_subcarrier_idx)


def qpsk(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits).reshape(-1, 2)
    return ((1 - 2 * bits[:, 0]) + 1j * (1 - 2 * bits[:, 1])) / np.sqrt(2)


def qpsk_hard(symbols: np.ndarray) -> np.ndarray:
    s = np.asarray(symbols).ravel()
    return np.stack([s.real < 0, s.imag < 0], axis=-1).astype(np.int8).ravel()


def random_qpsk(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.choice([-1.0, 1.0], size=shape) + 1j * rng.choice([-1.0, 1.0], size=shape)) / np.sqrt(2)
