"""Linear MMSE channel estimation baseline and its angular prior."""

from __future__ import annotations

import numpy as np

from ..channel import steering


def angular_covariance(n: int, angle_range: tuple[float, float], spacing: float = 0.5, n_points: int = 2048) -> np.ndarray:
    """``E[a(theta) a(theta)^H]`` for an angle uniform on ``angle_range`` (midpoint quadrature)."""
    lo, hi = angle_range
    theta = lo + (hi - lo) * (np.arange(n_points) + 0.5) / n_points
    a = steering(n, theta, spacing)
    return a @ a.conj().T / n_points


def kron_covariance(R_ac: np.ndarray, R_gs: np.ndarray) -> np.ndarray:
    """Covariance of ``vec(H)`` (row-major, H is n_ac x n_gs) for H = a_ac a_gs^H.

    Row-major vec of ``a b^H`` is ``kron(a, conj(b))``, hence ``R_ac (x) conj(R_gs)``.
    """
    return np.kron(R_ac, R_gs.conj())


def estimate_channel_lmmse(Y, X, R_h: np.ndarray, noise_var: float, mean=None) -> np.ndarray:
    """Per-subcarrier LMMSE estimate of ``H_k`` from ``Y_k = H_k X_k + N_k``.

    Parameters
    ----------
    Y : array_like, shape (n_sub, n_ac, M)
    X : array_like, shape (n_sub, n_gs, M) or (n_gs, M)
    R_h : ndarray, shape (n_ac*n_gs, n_ac*n_gs)
        Prior covariance of row-major ``vec(H_k)``.
    noise_var : float
        Variance of everything that is not ``H_k X_k`` (noise and, for this
        baseline, interference).  ``np.inf`` returns the prior mean.

    Returns
    -------
    ndarray, shape (n_sub, n_ac, n_gs)
    """
    Y = np.asarray(Y, dtype=complex)
    X = np.asarray(X, dtype=complex)
    n_sub, n_ac, M = Y.shape
    if X.ndim == 2:
        X = np.broadcast_to(X, (n_sub,) + X.shape)
    n_gs = X.shape[1]
    mu = np.zeros(n_ac * n_gs, dtype=complex) if mean is None else np.asarray(mean, dtype=complex).ravel()
    if np.isinf(noise_var):
        return np.broadcast_to(mu.reshape(n_ac, n_gs), (n_sub, n_ac, n_gs)).copy()
    out = np.empty((n_sub, n_ac, n_gs), dtype=complex)
    eye = np.eye(n_ac)
    for k in range(n_sub):
        # Row-major vec(H X) = (I (x) X^T) vec(H)
        Psi = np.kron(eye, X[k].T)
        S = Psi @ R_h @ Psi.conj().T + noise_var * np.eye(Psi.shape[0])
        innov = Y[k].ravel() - Psi @ mu
        out[k] = (mu + R_h @ Psi.conj().T @ np.linalg.solve(S, innov)).reshape(n_ac, n_gs)
    return out
