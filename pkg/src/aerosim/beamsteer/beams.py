"""Hybrid GS beamforming and aircraft combining against directional DME.

The GS sends one stream through ``w_gs = F_rf f_bb`` (analog phase shifters,
then a small digital stage); the aircraft combines its antennas with
``w_ac``.  For a narrowband channel ``H`` (n_ac x n_gs) and aircraft-side
interference-plus-noise covariance ``R`` the figure of merit is

    SINR = P |w_ac^H H w_gs|^2 / (w_ac^H R w_ac),   ||w_gs|| = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import eigh

LOADING = 1e-6


@dataclass
class BeamformerSet:
    F_rf: np.ndarray  # (n_gs, n_rf), unit-modulus entries
    f_bb: np.ndarray  # (n_rf,)
    w_ac: np.ndarray  # (n_ac,)
    flags: dict = field(default_factory=dict)

    @property
    def w_gs(self) -> np.ndarray:
        return self.F_rf @ self.f_bb

    def copy(self) -> "BeamformerSet":
        return BeamformerSet(self.F_rf.copy(), self.f_bb.copy(), self.w_ac.copy(), dict(self.flags))


@dataclass
class DmeCovariance:
    R: np.ndarray  # (n_ac, n_ac) interference-plus-noise covariance
    age: int = 0

    def __post_init__(self):
        self.R = 0.5 * (self.R + self.R.conj().T)


def covariance_init(snapshots, noise_var: float, n_ac: int | None = None) -> DmeCovariance:
    """Sample covariance of reconstructed DME snapshots plus ``noise_var * I``.

    Parameters
    ----------
    snapshots : array_like, shape (n_ac, n_snap)
        DME samples per aircraft antenna, e.g. the time-domain reconstructions
        from the estimation frame.  May have zero columns.
    """
    S = np.asarray(snapshots, dtype=complex)
    if S.ndim == 1:
        S = S[:, None]
    n = S.shape[0] if n_ac is None else n_ac
    R = noise_var * np.eye(n, dtype=complex)
    if S.size and S.shape[1]:
        R = R + S @ S.conj().T / S.shape[1]
    return DmeCovariance(R)


def covariance_feedback_update(
    cov: DmeCovariance,
    decoded,
    rx,
    channel,
    forgetting: float,
    decode_ok: bool = True,
    erasures=None,
) -> DmeCovariance:
    """Decision-feedback refresh of the interference covariance.

    The residual ``rx - channel * decoded`` (the remodulated decisions removed)
    is what is left of DME and noise.  ``R_new = forgetting * R_old +
    (1 - forgetting) * sample_cov(residual)``.  Erased symbols are left out of
    the sample covariance; a failed decode skips the update and ages ``R``.

    Parameters
    ----------
    decoded : array_like, shape (N,)
        Hard decisions.
    rx : array_like, shape (n_ac, N)
    channel : array_like, shape (n_ac,) or (n_ac, N)
        Channel (through the GS beam) for each resource element.
    """
    if not 0.0 < forgetting <= 1.0:
        raise ValueError("forgetting must lie in (0, 1]")
    if not decode_ok:
        return DmeCovariance(cov.R.copy(), cov.age + 1)
    rx = np.asarray(rx, dtype=complex)
    h = np.asarray(channel, dtype=complex)
    if h.ndim == 1:
        h = h[:, None]
    resid = rx - h * np.asarray(decoded)[None, :]
    if erasures is not None:
        resid = resid[:, ~np.asarray(erasures, dtype=bool)]
    if resid.shape[1] == 0 or forgetting == 1.0:
        return DmeCovariance(cov.R.copy(), 0)
    S = resid @ resid.conj().T / resid.shape[1]
    return DmeCovariance(forgetting * cov.R + (1.0 - forgetting) * S, 0)


def _loaded(R: np.ndarray) -> tuple[np.ndarray, bool]:
    """``R`` with diagonal loading ``1e-6 trace(R)/n``; flags near-singular input."""
    R = np.asarray(R, dtype=complex)
    n = R.shape[0]
    tr = np.trace(R).real
    load = LOADING * (tr / n if tr > 0 else 1.0)
    singular = np.linalg.cond(R) > 1e12 if tr > 0 else True
    return R + load * np.eye(n), bool(singular)


def combiner_mvdr(h_eff, R) -> np.ndarray:
    """Distortionless minimum-variance combiner ``R^-1 h / (h^H R^-1 h)``."""
    h = np.asarray(h_eff, dtype=complex)
    Rl, _ = _loaded(R)
    u = np.linalg.solve(Rl, h)
    return u / np.vdot(h, u)


def sinr(beams: BeamformerSet, H, R, noise_var: float = 0.0, power: float = 1.0) -> float:
    """Output SINR in dB; ``R`` plus ``noise_var * I`` is the disturbance covariance."""
    H = np.asarray(H, dtype=complex)
    w = beams.w_ac
    R = np.asarray(R) + noise_var * np.eye(len(w))
    num = power * np.abs(np.vdot(w, H @ beams.w_gs)) ** 2
    den = np.vdot(w, R @ w).real
    return float(10 * np.log10(num / den))


def _sinr_lin(H, R, F, f, w) -> float:
    g = F @ f
    return float(np.abs(np.vdot(w, H @ g)) ** 2 / np.vdot(w, R @ w).real / np.vdot(g, g).real)


def _digital_step(H, F, w) -> np.ndarray:
    """Best ``f_bb`` for fixed ``F_rf`` and ``w``: maximise |w^H H F f|^2 / ||F f||^2."""
    b = F.conj().T @ (H.conj().T @ w)  # (n_rf,)
    G = F.conj().T @ F
    f = np.linalg.lstsq(G, b, rcond=None)[0]
    return f / np.linalg.norm(F @ f)


def _phase_step(H, F, f, w) -> np.ndarray:
    """One sweep of exact per-entry phase maximisation of the Rayleigh quotient.

    With every other entry fixed, numerator and denominator are each
    ``c + Re(d e^{j phi})`` in the entry's phase, and the ratio's stationary
    points solve ``A sin(phi) + B cos(phi) = C``.  The best of those and the
    current phase is kept, so the quotient never decreases.
    """
    F = F.copy()
    q = H.conj().T @ w  # numerator is |q^H F f|^2
    n_gs, n_rf = F.shape
    u = np.vdot(q, F @ f)  # q^H F f
    t = F @ f
    for i in range(n_gs):
        for j in range(n_rf):
            old = F[i, j]
            beta = np.conj(q[i]) * f[j]
            alpha = u - beta * old
            gam = t[i] - f[j] * old
            rest = np.vdot(t, t).real - np.abs(t[i]) ** 2
            # numerator |alpha + beta z|^2, denominator rest + |gam + f_j z|^2
            c1 = abs(alpha) ** 2 + abs(beta) ** 2
            d1 = 2 * np.conj(alpha) * beta
            c2 = rest + abs(gam) ** 2 + abs(f[j]) ** 2
            d2 = 2 * np.conj(gam) * f[j]
            p1, q1, p2, q2 = d1.real, -d1.imag, d2.real, -d2.imag
            A = c1 * p2 - p1 * c2
            B = q1 * c2 - c1 * q2
            C = p1 * q2 - q1 * p2
            phis = [np.angle(old)]
            r = np.hypot(A, B)
            if r > 0 and abs(C) <= r:
                base = np.arctan2(B, A)  # A sin + B cos = r sin(phi + base)
                s = np.arcsin(C / r)
                phis += [s - base, np.pi - s - base]
            vals = [(c1 + p1 * np.cos(p) + q1 * np.sin(p)) / (c2 + p2 * np.cos(p) + q2 * np.sin(p)) for p in phis]
            best = phis[int(np.argmax(vals))]
            z = np.exp(1j * best)
            F[i, j] = z
            u = alpha + beta * z
            t[i] = gam + f[j] * z
    return F


def _init_analog(H: np.ndarray, n_rf: int, rng: np.random.Generator) -> np.ndarray:
    """Phases of the leading right singular vectors, random phases for the rest."""
    _, _, Vh = np.linalg.svd(H)
    n_gs = H.shape[1]
    F = np.exp(2j * np.pi * rng.uniform(size=(n_gs, n_rf)))
    k = min(n_rf, Vh.shape[0])
    F[:, :k] = np.exp(1j * np.angle(Vh[:k].conj().T))
    return F


def _finish(F, f, w, power_budget: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    f = f / np.linalg.norm(F @ f) * np.sqrt(power_budget)
    return F, f, w


def optimize_ao(
    H_hat,
    R,
    power_budget: float = 1.0,
    max_outer: int = 20,
    tol: float = 1e-4,
    n_rf: int = 4,
    init: BeamformerSet | None = None,
    rng_seed=0,
) -> tuple[BeamformerSet, np.ndarray]:
    """Alternate between the GS digital stage, the GS phases and the aircraft combiner.

    Parameters
    ----------
    H_hat : array_like, shape (n_ac, n_gs)
    R : array_like, shape (n_ac, n_ac)
        Aircraft-side interference-plus-noise covariance.
    tol : float
        Stop once an outer iteration improves SINR by less than ``tol`` (dB).

    Returns
    -------
    beams : BeamformerSet
        ``flags["loaded"]`` is set when ``R`` was near-singular.
    trace : ndarray
        SINR (dB, at unit transmit power) after every outer iteration; the
        first entry is the initial point.  Non-decreasing.
    """
    H = np.asarray(H_hat, dtype=complex)
    if not np.any(H):
        raise ValueError("H_hat must be nonzero")
    Rl, singular = _loaded(R)
    rng = np.random.default_rng(rng_seed)
    if init is None:
        F = _init_analog(H, n_rf, rng)
        w = combiner_mvdr(H @ np.linalg.svd(H)[2][0].conj(), Rl)
        f = _digital_step(H, F, w)
    else:
        F, f, w = init.F_rf.copy(), init.f_bb.copy(), init.w_ac.copy()
        f = f / np.linalg.norm(F @ f)
    trace = [_sinr_lin(H, Rl, F, f, w)]
    cur = trace[0]
    for _ in range(max_outer):
        # Each subproblem is solved exactly; a candidate that rounding leaves
        # marginally worse is not taken, so the trace is monotone as stated.
        for step in ("digital", "analog", "digital", "combiner"):
            if step == "digital":
                cand = (F, _digital_step(H, F, w), w)
            elif step == "analog":
                cand = (_phase_step(H, F, f, w), f, w)
            else:
                cand = (F, f, combiner_mvdr(H @ (F @ f), Rl))
            val = _sinr_lin(H, Rl, *cand)
            if val >= cur:
                (F, f, w), cur = cand, val
        trace.append(cur)
        if 10 * np.log10(trace[-1] / trace[-2]) < tol:
            break
    F, f, w = _finish(F, f, w, power_budget)
    return BeamformerSet(F, f, w, {"loaded": singular}), 10 * np.log10(np.array(trace))


def _grad_log_sinr(H, R, F, f, w):
    """Wirtinger gradients (d/d conj) of log SINR w.r.t. F, f and w."""
    g = F @ f
    s = np.vdot(w, H @ g)  # w^H H g
    q = H.conj().T @ w
    Rw = R @ w
    den = np.vdot(w, Rw).real
    # log|s|^2 - log(w^H R w) - log(g^H g)
    dg = q * s / abs(s) ** 2 - g / np.vdot(g, g).real  # d/d g*
    dF = np.outer(dg, f.conj())
    df = F.conj().T @ dg
    dw = (H @ g) * np.conj(s) / abs(s) ** 2 - Rw / den
    return dF, df, dw


def beam_track_pgd(
    prev: BeamformerSet,
    H_hat,
    R,
    step_size: float = 0.05,
    n_iters: int = 5,
    power_budget: float = 1.0,
    max_halvings: int = 12,
) -> BeamformerSet:
    """Projected gradient ascent on log-SINR, warm-started at ``prev``.

    Every iteration takes one step per block: the GS phases (scaled so the
    largest phase change is ``step_size`` radians), the digital weights and the
    aircraft combiner (relative steps of ``step_size``).  The projection keeps
    analog entries unit-modulus, the GS beam on the power budget and the
    combiner on the unit sphere.  A step that lowers SINR is retried at half
    the size, up to ``max_halvings`` times.
    """
    H = np.asarray(H_hat, dtype=complex)
    Rl, singular = _loaded(R)
    F, f, w = prev.F_rf.copy(), prev.f_bb.copy(), prev.w_ac.copy()
    if step_size == 0 or n_iters == 0:
        return prev.copy()
    cur = _sinr_lin(H, Rl, F, f, w)
    mu = step_size
    for _ in range(n_iters):
        for block in ("analog", "digital", "combiner"):
            dF, df, dw = _grad_log_sinr(H, Rl, F, f, w)
            if block == "analog":
                # dL/dtheta for F = exp(j theta): 2 Re(conj(dL/dF*) * j F)
                d = 2.0 * np.real(np.conj(dF) * 1j * F)
                d /= max(np.max(np.abs(d)), 1e-300)
            elif block == "digital":
                d = np.linalg.norm(f) * df / max(np.linalg.norm(df), 1e-300)
            else:
                d = np.linalg.norm(w) * dw / max(np.linalg.norm(dw), 1e-300)
            mu = step_size
            for _ in range(max_halvings + 1):
                Fn, fn, wn = F, f, w
                if block == "analog":
                    Fn = F * np.exp(1j * mu * d)
                elif block == "digital":
                    fn = f + mu * d
                else:
                    wn = w + mu * d
                fn = fn / np.linalg.norm(Fn @ fn) * np.sqrt(power_budget)
                wn = wn / np.linalg.norm(wn)
                new = _sinr_lin(H, Rl, Fn, fn, wn)
                if new >= cur:
                    F, f, w, cur = Fn, fn, wn, new
                    break
                mu /= 2
    f = f / np.linalg.norm(F @ f) * np.sqrt(power_budget)
    return BeamformerSet(F, f, w, {"loaded": singular, "step_size": mu})


def ss_hb(H_hat, dictionary: np.ndarray, n_rf: int = 4, power_budget: float = 1.0) -> BeamformerSet:
    """Spatially sparse hybrid beamforming from a steering dictionary.

    Greedily picks ``n_rf`` atoms that best explain the unconstrained optimal
    GS beam (leading right singular vector), fits the digital stage by least
    squares, and uses a matched-filter combiner.  No interference statistics
    enter, by design.
    """
    H = np.asarray(H_hat, dtype=complex)
    A = np.asarray(dictionary, dtype=complex)
    v = np.linalg.svd(H)[2][0].conj()
    norms = np.linalg.norm(A, axis=0)
    chosen: list[int] = []
    r = v.copy()
    f = np.zeros(0, dtype=complex)
    for _ in range(min(n_rf, A.shape[1])):
        score = np.abs(A.conj().T @ r) / norms
        score[chosen] = -1.0
        chosen.append(int(np.argmax(score)))
        F = A[:, chosen]
        f = np.linalg.lstsq(F, v, rcond=None)[0]
        r = v - F @ f
    F = A[:, chosen]
    f = f / np.linalg.norm(F @ f) * np.sqrt(power_budget)
    h = H @ (F @ f)
    w = h / np.linalg.norm(h)
    return BeamformerSet(F, f, w, {"atoms": chosen})


def fully_digital_bound(H, R, power: float = 1.0) -> float:
    """Best SINR (dB) over unconstrained unit-norm GS beams and any combiner."""
    Rl, singular = _loaded(R)
    if not singular:
        Rl = np.asarray(R, dtype=complex)  # exact bound for well-conditioned R
    M = np.asarray(H).conj().T @ np.linalg.solve(Rl, np.asarray(H))
    lam = eigh(0.5 * (M + M.conj().T), eigvals_only=True)[-1]
    return float(10 * np.log10(power * lam))


def with_combiner(beams: BeamformerSet, w_ac) -> BeamformerSet:
    return replace(beams, w_ac=np.asarray(w_ac, dtype=complex))
