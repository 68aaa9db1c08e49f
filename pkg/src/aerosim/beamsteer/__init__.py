"""Hybrid beam management against directional DME and its link-level evaluation."""

from .beams import (
    BeamformerSet,
    DmeCovariance,
    beam_track_pgd,
    combiner_mvdr,
    covariance_feedback_update,
    covariance_init,
    fully_digital_bound,
    optimize_ao,
    sinr,
    ss_hb,
)
from .link import SCHEMES, BeamScenario, BerResult, simulate_ber
