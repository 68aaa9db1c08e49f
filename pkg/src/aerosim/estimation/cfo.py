"""Frequency-offset estimation on the short section and its compensation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..waveform import FrameSpec, OfdmParams, SignalBuffer


@dataclass
class CfoEstimate:
    f_hat: float
    confidence: float
    low_confidence: bool = False

    @staticmethod
    def acquisition_range(params: OfdmParams, spec: FrameSpec) -> float:
        """Half-width of the unambiguous offset range (Hz)."""
        return params.sample_rate / (2.0 * spec.short_len(params))


def short_train(samples: np.ndarray, params: OfdmParams, spec: FrameSpec, start: int = 0) -> np.ndarray:
    """The repeated short bodies of a frame (cyclic prefix stripped)."""
    a = start + spec.short_cp_len(params)
    return samples[..., a : a + spec.n_short_syms * spec.short_len(params)]


def estimate_cfo(train: np.ndarray, params: OfdmParams, spec: FrameSpec, threshold: float = 0.5) -> CfoEstimate:
    """Correlate adjacent short repetitions.

    ``train`` holds ``n_short_syms`` contiguous bodies on its last axis; leading
    axes (receive antennas) are combined by summing their correlations, which
    averages the phase over every adjacent pair.
    """
    ls = spec.short_len(params)
    train = np.asarray(train)
    if train.shape[-1] < 2 * ls:
        raise ValueError("need at least two short repetitions")
    a = train[..., :-ls]
    b = train[..., ls:]
    corr = np.sum(np.conj(a) * b)
    denom = np.sqrt(np.sum(np.abs(a) ** 2) * np.sum(np.abs(b) ** 2))
    conf = float(np.abs(corr) / denom) if denom > 0 else 0.0
    f_hat = float(np.angle(corr) * params.sample_rate / (2 * np.pi * ls))
    return CfoEstimate(f_hat, conf, conf < threshold)


def apply_cfo(buf: SignalBuffer, f: float) -> SignalBuffer:
    """Rotate by ``exp(j 2 pi f t)`` on the buffer's global clock."""
    return buf.with_samples(buf.samples * np.exp(2j * np.pi * f * buf.times))


def compensate_cfo(buf: SignalBuffer, f_hat: float) -> SignalBuffer:
    return apply_cfo(buf, -f_hat)
