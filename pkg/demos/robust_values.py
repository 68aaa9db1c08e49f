"""How the KL radius lowers the value of a fixed policy.

Run with ``python3 demos/robust_values.py``.
"""

import numpy as np

from aerosim.robustplan import random_mdp, robust_policy_evaluation, standard_evaluation, worst_case

pi = np.array([0.5, 0.5])
for eps in (0.0, 0.01, 0.05, 0.2, 0.69, 1.0):
    wc = worst_case(pi, [1.0, 0.0], eps)
    print(f"eps {eps:4.2f}: worst-case mean {wc.value:.4f}, adversarial policy {np.round(wc.pi, 4)}")

rng = np.random.default_rng(0)
mdp = random_mdp(rng, 5, 3)
pol = rng.dirichlet(np.ones(3), size=5)
print("\nstate values of a random policy on a 5-state MDP")
print("standard       ", np.round(standard_evaluation(pol, mdp), 3))
for eps in (0.05, 0.2, 1.0):
    print(f"robust eps {eps:4.2f}", np.round(robust_policy_evaluation(pol, eps, mdp).v, 3))
