"""Cluster six aircraft, order SIC, split power and match clusters to slots.

Run with ``python3 demos/access_planning.py``.
"""

import numpy as np

from aerosim.access import correlation, plan_access, sum_rate, user_rates
from aerosim.harness.config import default_config
from aerosim.harness.presets import array_config, random_aircraft_channels

cfg = default_config()
H = random_aircraft_channels(np.random.default_rng(3), array_config(cfg), 6, cfg)
noise = 0.1
d = plan_access(H, noise, budget=1.0, min_rate=0.5, n_slots=2)
rates = user_rates(d, H, noise)
V = d.combiners
eff = np.einsum("ka,kag->kg", V.conj(), H)

for m, (grp, order) in enumerate(zip(d.plan.groups, d.plan.orders)):
    pairs = [f"{correlation(eff[i], eff[j]):.2f}" for i in grp for j in grp if i < j]
    print(f"cluster {m}: aircraft {grp.tolist()} in slot {d.slots[m]}, within-cluster correlation {pairs or ['-']}")
    for k in order:
        print(f"   aircraft {k}: power {d.powers[k]:.3f}, rate {rates[k]:.2f} bits/s/Hz")
print(f"frame sum rate {sum_rate(d, H, noise):.2f} bits/s/Hz (slot rates time-shared over {d.n_slots} slots)")
