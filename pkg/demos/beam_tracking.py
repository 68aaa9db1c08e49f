"""Hybrid beams against a directional DME source while the aircraft moves.

AO solves each frame from scratch; PGD only nudges last frame's beams.
Run with ``python3 demos/beam_tracking.py``.
"""

import numpy as np

from aerosim.beamsteer import beam_track_pgd, fully_digital_bound, optimize_ao, sinr, ss_hb
from aerosim.channel import dft_dictionary, steering

a_dme = steering(4, 1.0)
R = 5.0 * np.outer(a_dme, a_dme.conj()) + 0.1 * np.eye(4)
D, _ = dft_dictionary(32, 2)


def channel(frame):
    th = np.deg2rad(-10.0 + 0.1 * frame)
    return np.outer(steering(4, 0.2), steering(32, th).conj()) + 0.2 * np.outer(steering(4, 0.23), steering(32, th + 0.02).conj())


beams, _ = optimize_ao(channel(0), R, n_rf=4)
print("frame   bound    AO      PGD    SS-HB   (SINR, dB)")
for frame in range(1, 101):
    H = channel(frame)
    beams = beam_track_pgd(beams, H, R, n_iters=5)
    if frame % 20 == 0:
        ao, _ = optimize_ao(H, R, n_rf=4)
        print(
            f"{frame:5d} {fully_digital_bound(H, R):7.2f} {sinr(ao, H, R):7.2f} "
            f"{sinr(beams, H, R):7.2f} {sinr(ss_hb(H, D, n_rf=4), H, R):7.2f}"
        )
