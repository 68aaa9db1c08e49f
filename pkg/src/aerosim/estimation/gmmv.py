"""Joint-sparse angular-domain channel recovery across subcarriers.

Per pilot subcarrier ``k`` the decontaminated pilots obey ``Y_k = H_k X_k + N_k``
with a training matrix ``X_k`` that may differ between subcarriers (hybrid
training: a common analog network, per-subcarrier digital pilots).  Writing
``H_k = A_ac G_k A_gs^H`` on steering dictionaries, every ``G_k`` has the same
few nonzero entries, so one support is grown greedily for all subcarriers at
once and the per-subcarrier coefficients are least-squares fits on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AngularChannelEstimate:
    support: list  # (ac_atom, gs_atom) pairs, shared by all subcarriers
    coefficients: np.ndarray  # (n_sub, len(support))
    ac_dictionary: np.ndarray
    gs_dictionary: np.ndarray
    flags: dict = field(default_factory=dict)

    @property
    def H_hat(self) -> np.ndarray:
        """Dictionary expansion, shape ``(n_sub, n_ac, n_gs)``."""
        if not self.support:
            n_sub = self.coefficients.shape[0]
            return np.zeros((n_sub, self.ac_dictionary.shape[0], self.gs_dictionary.shape[0]), dtype=complex)
        ia, ig = np.array(self.support).T
        a = self.ac_dictionary[:, ia]
        g = self.gs_dictionary[:, ig].conj()
        return np.einsum("ks,is,js->kij", self.coefficients, a, g)


def _atom_columns(support, a_ac, B_k) -> np.ndarray:
    """Vectorised atoms for one subcarrier: columns vec(a_i b_j^T), shape (n_ac*M, |S|)."""
    cols = [np.outer(a_ac[:, i], B_k[j]).ravel() for i, j in support]
    return np.stack(cols, axis=1)


def estimate_channel_gmmv(
    Y,
    X,
    gs_dictionary: np.ndarray,
    ac_dictionary: np.ndarray,
    max_support: int = 10,
    stop_tol: float = 0.0,
    candidates=None,
    cond_limit: float = 1e8,
    gain_factor: float | None = None,
) -> AngularChannelEstimate:
    """Grow one angular support jointly over all subcarriers.

    Parameters
    ----------
    Y : array_like, shape (n_sub, n_ac, M)
        Pilot observations after DME excision and offset compensation.
    X : array_like, shape (n_sub, n_gs, M) or (n_gs, M)
        Training vectors sent on each pilot symbol.
    gs_dictionary, ac_dictionary : ndarray
        Steering dictionaries, shapes ``(n_gs, G_gs)`` and ``(n_ac, G_ac)``.
    max_support : int
        Upper bound on the number of selected atom pairs.
    stop_tol : float
        Stop once the total residual energy is at or below this value.
    candidates : iterable of (ac_atom, gs_atom), optional
        Restrict the search to these pairs (used by prediction-aided tracking).
    gain_factor : float, optional
        Also stop when the best new atom captures less than ``gain_factor``
        times the energy a pure-disturbance residual would put on one atom.
        The disturbance level is re-estimated from the residual at every step,
        which suits observations with unknown leftover interference.

    Returns
    -------
    AngularChannelEstimate
        ``flags["regularized"]`` is set when a support subset was so badly
        conditioned that a ridge fit replaced plain least squares.
    """
    Y = np.asarray(Y, dtype=complex)
    X = np.asarray(X, dtype=complex)
    n_sub, n_ac, M = Y.shape
    if X.ndim == 2:
        X = np.broadcast_to(X, (n_sub,) + X.shape)
    A_ac = np.asarray(ac_dictionary)
    A_gs = np.asarray(gs_dictionary)
    # B[k, j, m] = a_gs,j^H x_{k,m}
    B = np.einsum("gj,kgm->kjm", A_gs.conj(), X)
    ac_norm2 = np.sum(np.abs(A_ac) ** 2, axis=0)  # (G_ac,)
    b_norm2 = np.sum(np.abs(B) ** 2, axis=2)  # (n_sub, G_gs)

    mask = None
    if candidates is not None:
        mask = np.zeros((A_ac.shape[1], A_gs.shape[1]), dtype=bool)
        for i, j in candidates:
            mask[i, j] = True
        if not mask.any():
            mask = None

    support: list = []
    coef = np.zeros((n_sub, 0), dtype=complex)
    R = Y.copy()
    energy = np.vdot(R, R).real
    regularized = False
    while energy > stop_tol and len(support) < max_support:
        # C[k, i, j] = a_ac,i^H R_k conj(B[k, j])^T
        C = np.einsum("ai,kam,kjm->kij", A_ac.conj(), R, B.conj())
        with np.errstate(divide="ignore", invalid="ignore"):
            score = np.sum(np.abs(C) ** 2 / (ac_norm2[None, :, None] * b_norm2[:, None, :]), axis=0)
        score = np.nan_to_num(score)
        if mask is not None:
            score = np.where(mask, score, -1.0)
        for i, j in support:
            score[i, j] = -1.0
        i, j = np.unravel_index(int(np.argmax(score)), score.shape)
        if score[i, j] <= 0:
            break
        if gain_factor is not None and support:
            dof = R.size - n_sub * len(support)
            if dof <= 0 or score[i, j] < gain_factor * n_sub * energy / dof:
                break
        support.append((int(i), int(j)))
        coef = np.empty((n_sub, len(support)), dtype=complex)
        for k in range(n_sub):
            Phi = _atom_columns(support, A_ac, B[k])
            yk = Y[k].ravel()
            s = np.linalg.svd(Phi, compute_uv=False)
            if s[-1] == 0 or s[0] / s[-1] > cond_limit:
                regularized = True
                lam = 1e-6 * s[0] ** 2
                coef[k] = np.linalg.solve(Phi.conj().T @ Phi + lam * np.eye(len(support)), Phi.conj().T @ yk)
            else:
                coef[k] = np.linalg.lstsq(Phi, yk, rcond=None)[0]
            R[k] = (yk - Phi @ coef[k]).reshape(n_ac, M)
        energy = np.vdot(R, R).real

    return AngularChannelEstimate(
        support=support,
        coefficients=coef,
        ac_dictionary=A_ac,
        gs_dictionary=A_gs,
        flags={"regularized": regularized, "residual_energy": float(energy)},
    )
