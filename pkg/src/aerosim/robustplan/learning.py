"""Tabular TD control: robust, standard and entropy-regularised variants.

All three share the update ``Q(s,a) += alpha (r + gamma * target(s') - Q(s,a))``
and differ only in the bootstrap target and the behaviour policy:

* ``"q"`` (standard Q-learning): ``max_a Q(s',a)``, epsilon-greedy behaviour;
* ``"soft"`` (entropy-regularised): ``tau * logsumexp(Q(s',.) / tau)``,
  softmax behaviour;
* ``"robust"``: the worst case of the softmax policy over the KL ball of
  radius ``eps(s')``, softmax behaviour.

Learned policies are evaluated greedily on fresh episodes at checkpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
from scipy.special import logsumexp, softmax

from .operator import worst_case

ALGORITHMS = ("q", "soft", "robust")


class EpisodicEnv(Protocol):
    n_states: int
    n_actions: int

    def reset(self, rng: np.random.Generator) -> int: ...

    def step(self, action: int) -> tuple[int, float, bool]: ...


@dataclass
class LearningResult:
    algorithm: str
    Q: np.ndarray
    policy: np.ndarray  # greedy action per state
    checkpoints: np.ndarray  # episodes completed at each evaluation
    returns: np.ndarray  # mean evaluation return at each checkpoint
    visits: np.ndarray = field(default_factory=lambda: np.zeros(0))


def child_seed(seed, index: int) -> np.random.SeedSequence:
    """The ``index``-th child of ``seed`` without mutating any spawn counter."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (index,))


def decaying_eps(eps0: float, half_visits: float) -> Callable[[np.ndarray], np.ndarray]:
    """Radius ``eps0 / (1 + n(s) / half_visits)`` shrinking with state visits."""

    def f(visits):
        return eps0 / (1.0 + np.asarray(visits, dtype=float) / half_visits)

    return f


def _eps_of(eps, visits: np.ndarray) -> np.ndarray:
    if callable(eps):
        return np.asarray(eps(visits), dtype=float)
    return np.broadcast_to(np.asarray(eps, dtype=float), visits.shape)


def greedy(Q: np.ndarray) -> np.ndarray:
    return np.argmax(Q, axis=1)


def evaluate_policy(env: EpisodicEnv, policy, n_episodes: int, rng: np.random.Generator, max_steps: int = 10_000) -> np.ndarray:
    """Undiscounted return of each of ``n_episodes`` under a deterministic policy."""
    out = np.empty(n_episodes)
    for e in range(n_episodes):
        s = env.reset(rng)
        total, done, n = 0.0, False, 0
        while not done and n < max_steps:
            s, r, done = env.step(int(policy[s]))
            total += r
            n += 1
        out[e] = total
    return out


def td_control(
    env: EpisodicEnv,
    algorithm: str,
    episodes: int,
    seed,
    gamma: float = 0.9,
    alpha: float = 0.1,
    tau: float = 1.0,
    explore: float = 0.1,
    eps=0.0,
    checkpoints=None,
    n_eval: int = 50,
    q_init: float = 0.0,
) -> LearningResult:
    """Train one tabular learner.

    Parameters
    ----------
    algorithm : {"q", "soft", "robust"}
    seed : int or SeedSequence
        Spawns separate streams for training and evaluation.
    tau : float
        Softmax temperature of the soft and robust behaviour policies and of
        the soft target.
    explore : float
        Epsilon of the standard learner's epsilon-greedy behaviour.
    eps : float, array or callable
        KL radius of the robust target; a callable receives the per-state
        visit counts.
    checkpoints : array_like of int, optional
        Episode counts after which the greedy policy is evaluated on
        ``n_eval`` fresh episodes.  Defaults to the final episode only.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    rng = np.random.default_rng(child_seed(seed, 0))
    eval_rng = np.random.default_rng(child_seed(seed, 1))
    S, A = env.n_states, env.n_actions
    Q = np.full((S, A), float(q_init))
    visits = np.zeros(S)
    ck = np.array([episodes] if checkpoints is None else sorted(set(int(c) for c in checkpoints)))
    returns = []

    def behave(s):
        if algorithm == "q":
            if rng.random() < explore:
                return int(rng.integers(A))
            return int(np.argmax(Q[s]))
        return int(rng.choice(A, p=softmax(Q[s] / tau)))

    def target(s):
        if algorithm == "q":
            return Q[s].max()
        if algorithm == "soft":
            return tau * logsumexp(Q[s] / tau)
        pi = softmax(Q[s] / tau)
        return worst_case(pi, Q[s], float(_eps_of(eps, visits)[s])).value

    for ep in range(1, episodes + 1):
        s = env.reset(rng)
        done = False
        while not done:
            visits[s] += 1
            a = behave(s)
            s2, r, done = env.step(a)
            boot = 0.0 if done else target(s2)
            Q[s, a] += alpha * (r + gamma * boot - Q[s, a])
            s = s2
        if ep in ck:
            returns.append(evaluate_policy(env, greedy(Q), n_eval, eval_rng).mean())
    return LearningResult(algorithm, Q, greedy(Q), ck, np.array(returns), visits)


def robust_td_learning(env: EpisodicEnv, eps, episodes: int, seed, **kwargs) -> LearningResult:
    """Soft-greedy TD control whose target is the KL-adversarial backup."""
    return td_control(env, "robust", episodes, seed, eps=eps, **kwargs)


def q_learning(env: EpisodicEnv, episodes: int, seed, **kwargs) -> LearningResult:
    return td_control(env, "q", episodes, seed, **kwargs)


def soft_td_learning(env: EpisodicEnv, episodes: int, seed, **kwargs) -> LearningResult:
    return td_control(env, "soft", episodes, seed, **kwargs)


def variance_report(curves: dict, checkpoints) -> list[dict]:
    """Unbiased across-seed variance of the evaluation return.

    Parameters
    ----------
    curves : dict
        Algorithm name -> array ``(n_seeds, n_checkpoints)`` of returns.

    Returns
    -------
    list of dict
        One row ``{"checkpoint", "algorithm", "variance"}`` per checkpoint and
        algorithm, checkpoints outermost.
    """
    ck = list(checkpoints)
    rows = []
    arrs = {k: np.atleast_2d(np.asarray(v, dtype=float)) for k, v in curves.items()}
    for name, a in arrs.items():
        if a.shape[1] != len(ck):
            raise ValueError(f"{name}: one column per checkpoint expected")
        if a.shape[0] < 2:
            raise ValueError(f"{name}: need at least two seeds")
    for i, c in enumerate(ck):
        for name, a in arrs.items():
            rows.append({"checkpoint": c, "algorithm": name, "variance": float(np.var(a[:, i], ddof=1))})
    return rows


def run_variance_study(
    env: EpisodicEnv,
    episodes: int,
    checkpoints,
    n_seeds: int = 5,
    seed=0,
    algorithms=ALGORITHMS,
    eps=1.0,
    **kwargs,
) -> tuple[dict, list[dict]]:
    """Train every algorithm on the same ``n_seeds`` seeds and report variances.

    Seeds are spawned from ``seed`` by seed index, so all algorithms face the
    same training and evaluation streams.
    """
    seeds = [child_seed(seed, i) for i in range(n_seeds)]
    curves = {}
    for name in algorithms:
        rows = []
        for s in seeds:
            res = td_control(env, name, episodes, s, eps=eps if name == "robust" else 0.0, checkpoints=checkpoints, **kwargs)
            rows.append(res.returns)
        curves[name] = np.array(rows)
    return curves, variance_report(curves, sorted(set(int(c) for c in checkpoints)))
