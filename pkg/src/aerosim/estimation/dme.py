"""Time-domain DME reconstruction from empty frequency bins, and its excision.

Within one FFT window the received samples are ``r = s + d + n``.  On bins
that carry no signal (designated nulls plus the always-empty DC/guard bins)
the unitary DFT gives ``y = F_obs d + F_obs n``, so the time-sparse ``d`` is
recovered by orthogonal matching pursuit over single-sample atoms.  When
several receive antennas see the same pulses their rows share one support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class DmeEstimate:
    samples: np.ndarray  # (n_chan, fft_size) or (fft_size,)
    support: np.ndarray
    residual: float  # residual energy per observation
    unreliable: bool = False
    budget_exhausted: bool = False


def observation_matrix(bins, fft_size: int) -> np.ndarray:
    """Rows of the unitary DFT matrix at ``bins``."""
    bins = np.asarray(bins)
    n = np.arange(fft_size)
    return np.exp(-2j * np.pi * np.outer(bins, n) / fft_size) / np.sqrt(fft_size)


def reconstruct_dme(
    null_observations,
    null_idx,
    fft_size: int,
    sparsity_budget: int,
    noise_var: float = 0.0,
    unreliable_factor: float = 4.0,
) -> DmeEstimate:
    """Recover the DME samples of one FFT window by joint OMP.

    Parameters
    ----------
    null_observations : array_like, shape (n_obs,) or (n_chan, n_obs)
        Unitary-DFT values on the empty bins ``null_idx``; rows share support.
    null_idx : array_like of int
        FFT bins (``k mod fft_size``) observed.
    sparsity_budget : int
        Largest number of time samples the pursuit may select.
    noise_var : float
        Per-bin noise variance.  The pursuit stops once the mean residual power
        per observation drops to this level (plus a chi-square margin).

    Returns
    -------
    DmeEstimate
        ``unreliable`` is set when the budget ran out with the residual still
        above ``unreliable_factor`` times the stopping level.
    """
    y = np.asarray(null_observations, dtype=complex)
    single = y.ndim == 1
    y = np.atleast_2d(y)
    n_chan, n_obs = y.shape
    bins = np.asarray(null_idx)
    if len(bins) != n_obs:
        raise ValueError("observation count does not match null_idx")
    if np.any((bins < 0) | (bins >= fft_size)):
        raise IndexError("null_idx must hold FFT bins in [0, fft_size)")

    A = observation_matrix(bins, fft_size)
    total = y.size
    stop = noise_var * total * (1.0 + 3.0 / np.sqrt(total)) if noise_var > 0 else 1e-20 * np.vdot(y, y).real
    support: list[int] = []
    coef = np.zeros((n_chan, 0), dtype=complex)
    r = y.copy()
    energy = np.vdot(r, r).real
    budget = min(int(sparsity_budget), n_obs)
    while energy > stop and len(support) < budget:
        score = np.sum(np.abs(r @ A.conj()) ** 2, axis=0)
        score[support] = -1.0
        support.append(int(np.argmax(score)))
        As = A[:, support]
        coef = np.linalg.lstsq(As, y.T, rcond=None)[0].T
        r = y - coef @ As.T
        energy = np.vdot(r, r).real

    d = np.zeros((n_chan, fft_size), dtype=complex)
    if support:
        d[:, support] = coef
    exhausted = len(support) >= budget and energy > stop
    unreliable = bool(exhausted and energy > unreliable_factor * max(stop, 1e-300))
    return DmeEstimate(
        samples=d[0] if single else d,
        support=np.array(sorted(support), dtype=int),
        residual=float(energy / total),
        unreliable=unreliable,
        budget_exhausted=bool(exhausted),
    )


def excise(rx_symbol, dme_estimate) -> np.ndarray:
    """Subtract a time-domain DME estimate from the received samples."""
    est = dme_estimate.samples if isinstance(dme_estimate, DmeEstimate) else dme_estimate
    return np.asarray(rx_symbol) - np.asarray(est)
