"""Two-stage Doppler compensation.

The LoS Doppler is removed first by an ideal frequency shift, as an RF
shifter locked to the predicted offset would.  The residual offsets of the
scattered paths are handled in baseband by a dilation bank: at the passband a
Doppler offset ``f`` stretches time by ``alpha = 1 + f / f_c``, so each branch
undoes one candidate stretch, matched-filters the result against a known
template and scores the captured energy.  The strongest scales are kept and
the output is normalised to the dominant one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import correlate
from scipy.special import i0

from .channel import CARRIER
from .estimation.cfo import apply_cfo
from .waveform import SignalBuffer

DEFAULT_MAX_DOPPLER = 1.2e3
DEFAULT_N_SCALES = 33


def shift(buf: SignalBuffer, f: float) -> SignalBuffer:
    """Frequency-shift by ``f`` Hz on the buffer's clock."""
    return apply_cfo(buf, f)


def coarse_compensate(buf: SignalBuffer, f_hat_los: float) -> SignalBuffer:
    """Remove a predicted LoS Doppler ``f_hat_los`` (Hz) by derotation."""
    return apply_cfo(buf, -f_hat_los)


def default_scale_grid(
    carrier: float = CARRIER, max_doppler: float = DEFAULT_MAX_DOPPLER, n_scales: int = DEFAULT_N_SCALES
) -> np.ndarray:
    """Dilation ratios ``1 + f / carrier`` for ``f`` evenly spread over +/-``max_doppler``."""
    if n_scales < 1 or max_doppler < 0:
        raise ValueError("need n_scales >= 1 and max_doppler >= 0")
    return 1.0 + np.linspace(-max_doppler, max_doppler, n_scales) / carrier


def resample(x, ratio: float, half_taps: int = 16, beta: float = 8.0) -> np.ndarray:
    """Band-limited evaluation of ``x`` at sample times ``n * ratio``.

    Windowed-sinc interpolation on the last axis; samples outside the record
    count as zero.  ``ratio == 1`` returns the input exactly.
    """
    x = np.asarray(x, dtype=complex)
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    if ratio == 1.0:
        return x.copy()
    n = x.shape[-1]
    t = np.arange(n) * ratio
    base = np.floor(t).astype(int)
    k = base[:, None] + np.arange(-half_taps + 1, half_taps + 1)[None, :]
    d = t[:, None] - k
    u = np.clip(1.0 - (d / half_taps) ** 2, 0.0, None)
    w = np.sinc(d) * i0(beta * np.sqrt(u)) / i0(beta)
    valid = (k >= 0) & (k < n)
    w = np.where(valid, w, 0.0)
    return np.einsum("...nk,nk->...n", x[..., np.clip(k, 0, n - 1)], w)


def dilate(buf: SignalBuffer, ratio: float, carrier: float = CARRIER) -> SignalBuffer:
    """Baseband image of a passband signal stretched in time by ``ratio``.

    Returns ``x(ratio * t) * exp(j 2 pi carrier (ratio - 1) t)`` with ``t``
    measured from the first sample: the effect of a Doppler offset
    ``carrier * (ratio - 1)`` on a wideband signal.
    """
    t = np.arange(len(buf)) / buf.sample_rate
    y = resample(buf.samples, ratio) * np.exp(2j * np.pi * carrier * (ratio - 1.0) * t)
    return buf.with_samples(y)


def undilate(buf: SignalBuffer, ratio: float, carrier: float = CARRIER) -> SignalBuffer:
    """Inverse of :func:`dilate` for the same ``ratio``."""
    t = np.arange(len(buf)) / buf.sample_rate
    y = resample(buf.samples, 1.0 / ratio) * np.exp(-2j * np.pi * carrier * (1.0 - 1.0 / ratio) * t)
    return buf.with_samples(y)


def scale_to_doppler(ratio, carrier: float = CARRIER):
    return (np.asarray(ratio) - 1.0) * carrier


@dataclass
class MultiscaleResult:
    buf: SignalBuffer  # normalised to the dominant scale (input when flagged)
    scales: np.ndarray  # selected ratios, strongest first
    scores: np.ndarray  # matched-filter energy per grid scale
    lags: np.ndarray  # best template lag per grid scale
    flags: dict = field(default_factory=dict)


def scale_scores(buf: SignalBuffer, scale_grid, template, carrier: float = CARRIER) -> tuple[np.ndarray, np.ndarray]:
    """Matched-filter energy and lag of every branch of the dilation bank.

    Antenna axes, if any, are combined non-coherently.
    """
    tpl = np.asarray(template, dtype=complex)
    if tpl.ndim != 1 or len(tpl) > len(buf):
        raise ValueError("template must be 1-D and no longer than the buffer")
    e = np.vdot(tpl, tpl).real
    scores = np.empty(len(scale_grid))
    lags = np.empty(len(scale_grid), dtype=int)
    for i, a in enumerate(scale_grid):
        z = np.atleast_2d(undilate(buf, a, carrier).samples)
        c = np.sum(np.abs([correlate(row, tpl, mode="valid", method="fft") for row in z]) ** 2, axis=0) / e
        lags[i] = int(np.argmax(c))
        scores[i] = c[lags[i]]
    return scores, lags


def _peaks(scores: np.ndarray) -> np.ndarray:
    """Indices of local maxima, strongest first (plateaus give their first point)."""
    s = np.concatenate([[-np.inf], scores, [-np.inf]])
    idx = np.flatnonzero((s[1:-1] > s[:-2]) & (s[1:-1] >= s[2:]))
    return idx[np.argsort(-scores[idx], kind="stable")]


def fine_compensate_multiscale(
    buf: SignalBuffer,
    scale_grid=None,
    template=None,
    n_select: int = 1,
    flat_ratio: float = 2.0,
    carrier: float = CARRIER,
) -> MultiscaleResult:
    """Select the dominant dilation scales and normalise the buffer to the strongest.

    Parameters
    ----------
    scale_grid : array_like, optional
        Candidate ratios ``1 + f / carrier``; :func:`default_scale_grid` if omitted.
    template : array_like
        Known transmitted samples to match against.  Frequency resolution is
        about the inverse of its duration.
    n_select : int
        Number of scales kept, taken from the local maxima of the score profile.
    flat_ratio : float
        The profile counts as flat when its peak is below ``flat_ratio`` times
        its median; the buffer is then passed through and flagged.
    """
    if template is None:
        raise ValueError("a template is required")
    grid = default_scale_grid(carrier) if scale_grid is None else np.asarray(scale_grid, dtype=float)
    if n_select < 1:
        raise ValueError("n_select must be >= 1")
    scores, lags = scale_scores(buf, grid, template, carrier)
    med = np.median(scores)
    if len(grid) > 1 and (scores.max() <= 0 or scores.max() < flat_ratio * med):
        return MultiscaleResult(buf, np.zeros(0), scores, lags, {"flat_profile": True})
    sel = _peaks(scores)[:n_select]
    out = undilate(buf, grid[sel[0]], carrier)
    return MultiscaleResult(out, grid[sel], scores, lags, {"flat_profile": False})


def rake_fit(buf: SignalBuffer, template, scales, lag: int = 0, carrier: float = CARRIER) -> tuple[np.ndarray, float]:
    """Joint least-squares gains of the template dilated by each scale.

    Returns the per-scale complex gains and the residual power of
    ``buf - sum_p c_p * dilate(template, scale_p)`` over the template span.
    With no scales the residual is the buffer power over that span.
    """
    tpl = np.asarray(template, dtype=complex)
    seg = np.asarray(buf.samples)[..., lag : lag + len(tpl)]
    if seg.ndim != 1:
        raise ValueError("rake_fit takes a single-antenna buffer")
    tb = SignalBuffer(tpl, buf.sample_rate)
    if len(scales) == 0:
        return np.zeros(0, dtype=complex), float(np.mean(np.abs(seg) ** 2))
    A = np.stack([dilate(tb, a, carrier).samples for a in scales], axis=1)
    c = np.linalg.lstsq(A, seg, rcond=None)[0]
    r = seg - A @ c
    return c, float(np.mean(np.abs(r) ** 2))
