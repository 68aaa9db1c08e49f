"""DME-robust channel estimation and flight-plan-aided tracking."""

from .cfo import CfoEstimate, apply_cfo, compensate_cfo, estimate_cfo, short_train
from .dme import DmeEstimate, excise, reconstruct_dme
from .gmmv import AngularChannelEstimate, estimate_channel_gmmv
from .lmmse import angular_covariance, estimate_channel_lmmse, kron_covariance
from .metrics import nmse
from .tracking import (
    CORRUPTION_THRESHOLD_DB,
    AngleKalman,
    LowDimEstimate,
    SpatialPrediction,
    TrackingVerdict,
    predict_spatial_csi,
    track_high_dim,
    track_low_dim,
    window_candidates,
)
