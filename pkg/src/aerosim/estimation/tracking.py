"""Flight-plan-aided channel tracking.

Between full estimations the link is tracked in two stages.  A Kalman filter
over (angle, angular rate) predicts where the dominant paths will be, which
narrows the dictionary search.  The effective scalar channel seen through the
current beams is estimated on a short training section; comparing it with the
same quantity computed from a high-dimensional estimate tells whether DME hit
the per-antenna pilots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gmmv import AngularChannelEstimate, estimate_channel_gmmv
from .metrics import nmse

CORRUPTION_THRESHOLD_DB = -10.0


@dataclass
class AngleKalman:
    """Linear-Gaussian filter over an angle (optionally with its rate).

    ``order=2`` tracks ``(angle, rate)`` with a white-acceleration model;
    ``order=1`` tracks the angle alone as a random walk.
    """

    process_noise: float
    meas_noise: float
    order: int = 2
    x: np.ndarray | None = None
    P: np.ndarray | None = None

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if self.process_noise < 0 or self.meas_noise <= 0:
            raise ValueError("need process_noise >= 0 and meas_noise > 0")
        if self.x is None:
            self.x = np.zeros(self.order)
        if self.P is None:
            self.P = np.eye(self.order) * 1e2

    def _model(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        q = self.process_noise
        if self.order == 1:
            return np.eye(1), np.array([[q * dt]])
        F = np.array([[1.0, dt], [0.0, 1.0]])
        Q = q * np.array([[dt**3 / 3, dt**2 / 2], [dt**2 / 2, dt]])
        return F, Q

    def predict(self, dt: float) -> None:
        F, Q = self._model(dt)
        self.x = F @ self.x
        self.P = F @ self.P @ F.T + Q

    def update(self, z: float) -> None:
        h = np.zeros(self.order)
        h[0] = 1.0
        s = h @ self.P @ h + self.meas_noise
        k = self.P @ h / s
        self.x = self.x + k * (z - h @ self.x)
        # Joseph form keeps P symmetric positive semidefinite.
        A = np.eye(self.order) - np.outer(k, h)
        self.P = A @ self.P @ A.T + self.meas_noise * np.outer(k, k)

    @property
    def angle(self) -> float:
        return float(self.x[0])

    @property
    def variance(self) -> float:
        return float(self.P[0, 0])


@dataclass
class SpatialPrediction:
    angle: float  # predicted angle at the next step (rad)
    variance: float
    history: np.ndarray  # one-step-ahead predictions, aligned with the measurements
    variances: np.ndarray


def predict_spatial_csi(
    measurements,
    dt: float,
    process_noise: float,
    meas_noise: float,
    planned=None,
    order: int = 2,
    initial_variance: float = 1e2,
) -> SpatialPrediction:
    """Filter a sequence of angle estimates and predict the next one.

    Parameters
    ----------
    measurements : array_like
        Angle estimates (rad) at a uniform step ``dt``; ``nan`` marks a gap,
        where the filter only predicts.
    planned : array_like, optional
        Flight-plan angles at the same instants plus one step ahead
        (length ``len(measurements) + 1``).  The filter then tracks the
        deviation from the plan, which moves far more slowly than the angle.

    Returns
    -------
    SpatialPrediction
        ``history[i]`` and ``variances[i]`` are the prediction for step ``i``
        made before its measurement was seen.
    """
    z = np.asarray(measurements, dtype=float)
    n = len(z)
    plan = np.zeros(n + 1) if planned is None else np.asarray(planned, dtype=float)
    if len(plan) != n + 1:
        raise ValueError("planned needs one more entry than measurements")
    kf = AngleKalman(process_noise, meas_noise, order, P=np.eye(order) * initial_variance)
    hist = np.empty(n)
    var = np.empty(n)
    for i in range(n):
        if i > 0:
            kf.predict(dt)
        hist[i] = kf.angle + plan[i]
        var[i] = kf.variance
        if np.isfinite(z[i]):
            kf.update(z[i] - plan[i])
    kf.predict(dt)
    return SpatialPrediction(kf.angle + plan[n], kf.variance, hist, var)


def window_candidates(
    pred_gs: SpatialPrediction | tuple,
    pred_ac: SpatialPrediction | tuple,
    gs_angles: np.ndarray,
    ac_angles: np.ndarray,
    n_sigma: float = 3.0,
    min_halfwidth: float = np.deg2rad(2.0),
) -> list[tuple[int, int]]:
    """Dictionary pairs whose angles fall inside the predicted windows.

    Predictions may be ``SpatialPrediction`` objects or ``(angle, variance)``.
    """

    def _inside(pred, angles):
        a, v = (pred.angle, pred.variance) if isinstance(pred, SpatialPrediction) else pred
        half = max(n_sigma * np.sqrt(max(v, 0.0)), min_halfwidth)
        return np.flatnonzero(np.abs(angles - a) <= half)

    ig = _inside(pred_gs, gs_angles)
    ia = _inside(pred_ac, ac_angles)
    return [(int(i), int(j)) for i in ia for j in ig]


@dataclass
class LowDimEstimate:
    h_hat: np.ndarray  # (n_sub,) effective channel per subcarrier, delay-domain fit
    h_ls: np.ndarray  # (n_sub,) raw per-subcarrier least squares
    tap_delays: np.ndarray  # samples
    tap_gains: np.ndarray


def _delay_basis(subcarriers, fft_size: int, delays) -> np.ndarray:
    k = np.asarray(subcarriers)[:, None]
    return np.exp(-2j * np.pi * k * np.asarray(delays)[None, :] / fft_size)


def track_low_dim(
    rx_train,
    train_symbols,
    w_ac,
    subcarriers,
    fft_size: int,
    max_delay: int,
    max_taps: int = 4,
    stop_tol: float = 0.0,
) -> LowDimEstimate:
    """Estimate the beamformed scalar channel ``w_ac^H H_k w_gs`` per subcarrier.

    Parameters
    ----------
    rx_train : array_like, shape (n_sub, n_ac, n_train)
        Received training section, per subcarrier and antenna.
    train_symbols : array_like, shape (n_sub, n_train)
        Known symbols sent on the GS beam.
    w_ac : array_like, shape (n_ac,)
        Aircraft combiner; it already suppresses directional DME.
    max_delay : int
        Largest integer delay (samples) of the tap grid.
    max_taps, stop_tol : int, float
        Matching pursuit on the tap grid stops at ``max_taps`` taps or when
        the residual energy falls to ``stop_tol``.
    """
    Y = np.asarray(rx_train, dtype=complex)
    s = np.asarray(train_symbols, dtype=complex)
    w = np.asarray(w_ac, dtype=complex)
    z = np.einsum("a,kat->kt", w.conj(), Y)
    h_ls = np.sum(z * s.conj(), axis=1) / np.sum(np.abs(s) ** 2, axis=1)

    delays = np.arange(max_delay + 1)
    B = _delay_basis(subcarriers, fft_size, delays)
    support: list[int] = []
    gains = np.zeros(0, dtype=complex)
    r = h_ls.copy()
    while np.vdot(r, r).real > stop_tol and len(support) < max_taps:
        score = np.abs(B.conj().T @ r)
        score[support] = -1.0
        support.append(int(np.argmax(score)))
        Bs = B[:, support]
        gains = np.linalg.lstsq(Bs, h_ls, rcond=None)[0]
        r = h_ls - Bs @ gains
    h_fit = B[:, support] @ gains if support else np.zeros_like(h_ls)
    return LowDimEstimate(h_fit, h_ls, delays[support].astype(float), gains)


@dataclass
class TrackingVerdict:
    estimate: AngularChannelEstimate
    h_tilde: np.ndarray  # (n_sub,) w_ac^H H_hat w_gs
    consistency_db: float
    corrupted: bool
    flags: dict = field(default_factory=dict)


def track_high_dim(
    Y,
    X,
    gs_dictionary: np.ndarray,
    ac_dictionary: np.ndarray,
    candidates,
    low: LowDimEstimate | np.ndarray,
    w_gs,
    w_ac,
    max_support: int = 6,
    stop_tol: float = 0.0,
    threshold_db: float = CORRUPTION_THRESHOLD_DB,
) -> TrackingVerdict:
    """Restricted-dictionary recovery plus the DME consistency check.

    The high-dimensional estimate is collapsed through the current beams and
    compared with the low-dimensional estimate.  The verdict is CORRUPTED when
    their NMSE over the subcarriers exceeds ``threshold_db``.  An empty
    candidate window falls back to the full dictionary and is flagged.
    """
    cands = list(candidates) if candidates is not None else []
    fallback = len(cands) == 0
    est = estimate_channel_gmmv(
        Y, X, gs_dictionary, ac_dictionary, max_support, stop_tol, candidates=None if fallback else cands
    )
    H = est.H_hat
    h_tilde = np.einsum("a,kag,g->k", np.asarray(w_ac).conj(), H, np.asarray(w_gs))
    h_low = low.h_hat if isinstance(low, LowDimEstimate) else np.asarray(low)
    c = nmse(h_tilde, h_low)
    flags = dict(est.flags)
    flags["window_fallback"] = fallback
    return TrackingVerdict(est, h_tilde, c, bool(c > threshold_db), flags)
