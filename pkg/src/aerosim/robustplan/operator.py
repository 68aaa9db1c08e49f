"""Policy-robust evaluation with a KL uncertainty set.

The adversary may replace the policy ``pi(.|s)`` by any ``pi'`` with
``KL(pi' || pi(.|s)) <= eps(s)``.  For a fixed action-value vector ``q`` the
worst case ``min sum_a pi'(a) q(a)`` has the dual form

    max_{lam >= 0}  -lam * log sum_a pi(a) exp(-q(a) / lam) - lam * eps,

attained by the exponential tilt ``pi'(a) ~ pi(a) exp(-q(a) / lam)`` with
``lam`` chosen so the KL constraint is tight.  When ``eps`` reaches the KL of
the worst vertex the minimum is ``min_a q(a)`` over the support of ``pi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

MAX_LOG_LAM = 60.0  # tilt temperature cap, in units of the spread of q


@dataclass
class TabularMDP:
    P: np.ndarray  # (S, A, S) transition kernel
    r: np.ndarray  # (S, A) expected reward
    gamma: float
    state_labels: list | None = None
    action_labels: list | None = None

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        S, A = self.r.shape
        if self.P.shape != (S, A, S):
            raise ValueError("P must have shape (S, A, S) matching r (S, A)")
        if np.any(self.P < 0) or not np.allclose(self.P.sum(axis=2), 1.0, atol=1e-12, rtol=0):
            raise ValueError("each P(.|s,a) must be a probability vector")
        if not np.all(np.isfinite(self.r)):
            raise ValueError("rewards must be finite")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")

    @property
    def n_states(self) -> int:
        return self.r.shape[0]

    @property
    def n_actions(self) -> int:
        return self.r.shape[1]

    def q_values(self, v) -> np.ndarray:
        return self.r + self.gamma * self.P @ np.asarray(v, dtype=float)


@dataclass
class UncertaintySet:
    pi: np.ndarray  # (S, A) base policy
    eps: np.ndarray  # (S,) KL radius per state

    def __post_init__(self):
        self.pi = np.atleast_2d(np.asarray(self.pi, dtype=float))
        self.eps = np.broadcast_to(np.asarray(self.eps, dtype=float), (self.pi.shape[0],)).copy()
        if np.any(self.pi < 0) or not np.allclose(self.pi.sum(axis=1), 1.0, atol=1e-12, rtol=0):
            raise ValueError("each pi(.|s) must be a probability vector")
        if np.any(self.eps < 0) or not np.all(np.isfinite(self.eps)):
            raise ValueError("eps must be finite and nonnegative")


def kl(p, q) -> float:
    """``KL(p || q)`` in nats; ``inf`` when ``p`` leaves the support of ``q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    m = p > 0
    if np.any(q[m] <= 0):
        return np.inf
    return float(np.sum(p[m] * np.log(p[m] / q[m])))


def tilt(pi, q, lam: float) -> np.ndarray:
    """``pi(a) exp(-q(a) / lam)`` normalised; ``lam = 0`` is the worst-vertex limit."""
    pi = np.asarray(pi, dtype=float)
    q = np.asarray(q, dtype=float)
    sup = pi > 0
    qmin = q[sup].min()
    if lam <= 0:
        w = np.where(sup & (q == qmin), pi, 0.0)
    else:
        w = np.where(sup, pi * np.exp(-(q - qmin) / lam), 0.0)
    return w / w.sum()


@dataclass
class WorstCase:
    value: float
    pi: np.ndarray  # the minimising policy
    lam: float  # dual variable; inf when eps = 0, 0 when saturated
    saturated: bool = False


def worst_case(pi, q, eps: float, xtol: float = 1e-14) -> WorstCase:
    """``min sum_a pi'(a) q(a)`` over ``KL(pi' || pi) <= eps``."""
    pi = np.asarray(pi, dtype=float)
    q = np.asarray(q, dtype=float)
    sup = pi > 0
    base = float(pi @ q)
    qmin = q[sup].min()
    if eps <= 0 or np.ptp(q[sup]) == 0:
        return WorstCase(base, pi.copy(), np.inf)
    vertex_kl = -np.log(pi[sup & (q == qmin)].sum())
    if eps >= vertex_kl:
        return WorstCase(float(qmin), tilt(pi, q, 0.0), 0.0, True)

    # KL of the tilt falls monotonically from vertex_kl (lam -> 0) to 0 (lam -> inf).
    scale = float(np.ptp(q[sup]))

    def gap(log_lam):
        return kl(tilt(pi, q, scale * np.exp(log_lam)), pi) - eps

    # Below rounding level the KL of the tilt never reaches eps; pi itself is then
    # feasible and within sqrt(2 eps Var_pi q) of the minimum.
    base_case = WorstCase(base, pi.copy(), np.inf)
    lo, hi = -1.0, 1.0
    while gap(lo) < 0:
        lo -= 2.0
    while gap(hi) > 0:
        hi += 2.0
        if hi > MAX_LOG_LAM:
            return base_case
    x = brentq(gap, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)
    lam = scale * np.exp(x)
    p = tilt(pi, q, lam)
    # The root may sit a hair outside the ball; step towards larger lam until inside.
    for _ in range(1000):
        if kl(p, pi) <= eps:
            return WorstCase(float(p @ q), p, lam)
        x += 1e-12 + abs(x) * 1e-12
        lam = scale * np.exp(x)
        p = tilt(pi, q, lam)
    return base_case


def standard_backup(v, pi, mdp: TabularMDP) -> np.ndarray:
    """One policy-evaluation backup ``sum_a pi(a|s) Q(s, a)``."""
    return np.sum(np.asarray(pi) * mdp.q_values(v), axis=1)


def adversarial_bellman(v, U: UncertaintySet, mdp: TabularMDP) -> np.ndarray:
    """Worst-case policy-evaluation backup over the KL ball around ``U.pi``.

    Returns ``v'(s) = min_{KL(pi'||pi(.|s)) <= eps(s)} sum_a pi'(a) Q(s, a)``
    with ``Q = r + gamma P v``.
    """
    Q = mdp.q_values(v)
    if U.pi.shape != Q.shape:
        raise ValueError("policy shape must be (S, A)")
    return np.array([worst_case(U.pi[s], Q[s], U.eps[s]).value for s in range(mdp.n_states)])


def standard_evaluation(pi, mdp: TabularMDP) -> np.ndarray:
    """Exact ``v_pi`` by a linear solve."""
    pi = np.asarray(pi, dtype=float)
    P_pi = np.einsum("sa,sat->st", pi, mdp.P)
    r_pi = np.sum(pi * mdp.r, axis=1)
    return np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P_pi, r_pi)


@dataclass
class RobustEvaluation:
    v: np.ndarray
    iterations: int
    history: list = field(default_factory=list)  # iterates, starting from v0


def robust_policy_evaluation(
    pi, eps, mdp: TabularMDP, tol: float = 1e-10, max_iter: int = 10_000, v0=None, keep_history: bool = False
) -> RobustEvaluation:
    """Fixed point of :func:`adversarial_bellman` by iteration.

    Stops when successive iterates differ by at most ``tol`` in sup norm;
    the operator is a ``gamma``-contraction, so the error is then below
    ``tol * gamma / (1 - gamma)``.
    """
    U = UncertaintySet(pi, eps)
    v = np.zeros(mdp.n_states) if v0 is None else np.asarray(v0, dtype=float).copy()
    hist = [v.copy()] if keep_history else []
    for it in range(1, max_iter + 1):
        nv = adversarial_bellman(v, U, mdp)
        if keep_history:
            hist.append(nv.copy())
        if np.max(np.abs(nv - v)) <= tol:
            return RobustEvaluation(nv, it, hist)
        v = nv
    return RobustEvaluation(v, max_iter, hist)


def value_iteration(mdp: TabularMDP, tol: float = 1e-12, max_iter: int = 100_000) -> tuple[np.ndarray, np.ndarray]:
    """Optimal values and a greedy deterministic policy (ties to the lowest action)."""
    v = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        nv = mdp.q_values(v).max(axis=1)
        if np.max(np.abs(nv - v)) <= tol:
            v = nv
            break
        v = nv
    return v, np.argmax(mdp.q_values(v), axis=1)


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int, gamma: float = 0.9) -> TabularMDP:
    """Dirichlet transitions and uniform rewards in [0, 1)."""
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    r = rng.uniform(size=(n_states, n_actions))
    return TabularMDP(P, r, gamma)
