import numpy as np

NMSE_FLOOR_DB = -100.0


def nmse(est, truth) -> float:
    """``10 log10(||est - truth||^2 / ||truth||^2)`` in dB, floored at -100 dB."""
    est = np.asarray(est)
    truth = np.asarray(truth)
    den = np.sum(np.abs(truth) ** 2)
    if den == 0:
        raise ValueError("truth has zero energy")
    ratio = np.sum(np.abs(est - truth) ** 2) / den
    if ratio <= 10 ** (NMSE_FLOOR_DB / 10):
        return NMSE_FLOOR_DB
    return float(10 * np.log10(ratio))
