import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aerosim.channel import (
    C_LIGHT,
    ArrayConfig,
    FlightTrack,
    PathSet,
    apply,
    closest_approach_time,
    dft_dictionary,
    doppler_of_path,
    evaluate,
    generate_paths,
    overhead_pass_doppler,
    steering,
)
from aerosim.waveform import FrameSpec, OfdmParams, SignalBuffer, demodulate_symbol, modulate_frame, random_qpsk


def test_doppler_hand_arithmetic():
    # 277.78 * 1.08e9 / 299792458 by hand: 300002400000 / 299792458 = 1000.7003 Hz
    assert doppler_of_path(277.78, 1.08e9, 0.0) == pytest.approx(1000.7003, abs=1e-3)


def test_doppler_broadside_is_zero():
    assert abs(doppler_of_path(300.0, 1.08e9, np.pi / 2)) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 400), st.floats(1e8, 5e9), st.floats(0, np.pi))
def test_doppler_cosine_symmetry(speed, fc, a):
    assert doppler_of_path(speed, fc, np.pi - a) == pytest.approx(-doppler_of_path(speed, fc, a), abs=1e-9)


def test_negative_speed_raises():
    with pytest.raises(ValueError):
        doppler_of_path(-1.0, 1e9, 0.0)


def test_los_only_is_rank_one():
    arr = ArrayConfig()
    H = evaluate(generate_paths(FlightTrack(), arr, n_scatter=0, rng_seed=1), arr, OfdmParams())
    s = np.linalg.svd(H, compute_uv=False)
    assert np.all(s[:, 1] <= 1e-10 * s[:, 0])


def test_scatter_within_beamwidth():
    paths = generate_paths(FlightTrack(), ArrayConfig(), n_scatter=50, rng_seed=2)
    assert np.all(np.abs(paths.aod[1:] - paths.aod[0]) <= np.deg2rad(1.75) + 1e-15)
    assert np.all(np.abs(paths.aoa[1:] - paths.aoa[0]) <= np.deg2rad(1.75) + 1e-15)


def test_rician_factor_exact():
    paths = generate_paths(FlightTrack(), ArrayConfig(), rician_db=20.0, n_scatter=4, rng_seed=3)
    assert paths.rician_factor == pytest.approx(100.0, abs=1e-6)


def test_delays_within_cp():
    p = OfdmParams()
    paths = generate_paths(FlightTrack(), ArrayConfig(), n_scatter=20, rng_seed=4)
    assert np.all(paths.delays >= 0)
    assert np.all(paths.delays <= p.cp_len / p.sample_rate)


def test_zero_delay_flat_across_subcarriers():
    arr = ArrayConfig(n_gs=8, n_ac=2)
    paths = PathSet([0.7 + 0.2j], [0.0], [0.3], [-0.2], [250.0])
    H = evaluate(paths, arr, OfdmParams())
    assert np.allclose(H, H[0], atol=1e-14)


def test_single_path_time_evolution():
    arr = ArrayConfig(n_gs=8, n_ac=2)
    paths = PathSet([1.0], [1e-6], [0.3], [-0.2], [321.0])
    t1, t2 = 0.013, 0.4
    H1, H2 = evaluate(paths, arr, OfdmParams(), t1), evaluate(paths, arr, OfdmParams(), t2)
    assert np.allclose(H2, H1 * np.exp(2j * np.pi * 321.0 * (t2 - t1)), atol=1e-12)


@pytest.mark.parametrize("L", [1, 2, 3])
def test_rank_bounded_by_paths(L):
    arr = ArrayConfig(n_gs=16, n_ac=4)
    H = evaluate(generate_paths(FlightTrack(), arr, n_scatter=L - 1, rng_seed=L), arr, OfdmParams())
    for Hk in H:
        assert np.linalg.matrix_rank(Hk, tol=1e-9 * np.linalg.norm(Hk)) <= L


def test_matches_path_sum_formula():
    arr, p = ArrayConfig(n_gs=6, n_ac=3), OfdmParams()
    paths = generate_paths(FlightTrack(), arr, n_scatter=3, rng_seed=5)
    t, k = 0.02, 7
    H = evaluate(paths, arr, p, t, subcarriers=[k])[0]
    ref = np.zeros((3, 6), dtype=complex)
    for l in range(len(paths)):
        a_ac = np.exp(2j * np.pi * 0.5 * np.arange(3) * np.sin(paths.aoa[l]))
        a_gs = np.exp(2j * np.pi * 0.5 * np.arange(6) * np.sin(paths.aod[l]))
        g = paths.gains[l] * np.exp(2j * np.pi * paths.doppler[l] * t) * np.exp(-2j * np.pi * k * p.subcarrier_spacing * paths.delays[l])
        ref += g * np.outer(a_ac, a_gs.conj())
    assert np.allclose(H, ref, atol=1e-12)


def test_apply_los_static_is_steering_copy():
    arr = ArrayConfig(n_gs=4, n_ac=3)
    x = SignalBuffer(np.random.default_rng(0).normal(size=100) + 0j, 625e3)
    paths = PathSet([1.0], [0.0], [0.2], [0.4], [0.0])
    w = np.ones(4) / 2
    y = apply(x, paths, arr, w)
    expect = np.outer(steering(3, 0.4), (steering(4, 0.2).conj() @ w) * x.samples)
    assert np.allclose(y.samples, expect, atol=1e-12)


def test_apply_zero_input():
    arr = ArrayConfig(n_gs=4, n_ac=2)
    y = apply(SignalBuffer(np.zeros(50), 625e3), generate_paths(FlightTrack(), arr, rng_seed=0), arr)
    assert np.all(y.samples == 0)


def frequency_domain_error(paths, arr, p):
    spec = FrameSpec.default(p, n_pilot_syms=5)
    rng = np.random.default_rng(11)
    pil = random_qpsk(rng, (5, len(spec.pilot_subcarrier_idx)))
    buf = modulate_frame(p, spec, pil, np.zeros((0, len(spec.data_subcarrier_idx(p)))))
    w = steering(arr.n_gs, 0.25) / np.sqrt(arr.n_gs)
    y = apply(buf, paths, arr, w)
    H = evaluate(paths, arr, p)
    worst = 0.0
    for off in spec.pilot_offsets(p)[1:]:
        got = demodulate_symbol(y, p, off)
        pred = np.einsum("kij,j->ik", H, w) * demodulate_symbol(buf, p, off)
        worst = max(worst, np.linalg.norm(got - pred) / np.linalg.norm(pred))
    return worst


@pytest.mark.parametrize("delays", [(0,), (0, 3), (0, 5, 11)])
def test_time_frequency_equivalence_on_sample_grid(delays):
    p, arr = OfdmParams(), ArrayConfig(n_gs=4, n_ac=2)
    n = len(delays)
    rng = np.random.default_rng(n)
    paths = PathSet(
        rng.normal(size=n) + 1j * rng.normal(size=n),
        np.array(delays) / p.sample_rate,
        rng.uniform(-1, 1, n),
        rng.uniform(-1, 1, n),
        np.zeros(n),
    )
    assert frequency_domain_error(paths, arr, p) <= 1e-6


def test_fractional_delay_equivalence_is_approximate():
    # Interpolator tails straddle symbol boundaries beyond the CP; about 1% error is inherent.
    p, arr = OfdmParams(), ArrayConfig(n_gs=4, n_ac=2)
    paths = PathSet([1.0], [3.3 / p.sample_rate], [0.3], [0.1], [0.0])
    assert frequency_domain_error(paths, arr, p) <= 0.03


def test_angular_sparsity_on_grid():
    arr, p = ArrayConfig(n_gs=16, n_ac=4), OfdmParams()
    D_gs, ang_gs = dft_dictionary(16, 1)
    D_ac, ang_ac = dft_dictionary(4, 1)
    paths = PathSet([1.0, 0.3j], [0.0, 2e-6], ang_gs[[3, 7]], ang_ac[[1, 2]], [0.0, 0.0])
    H = evaluate(paths, arr, p)
    X = np.einsum("ia,kij,jb->kab", D_ac.conj() / 2, H, D_gs / 4)
    e = np.sum(np.abs(X) ** 2, axis=0)
    top = np.sort(e.ravel())[::-1]
    assert top[:2].sum() == pytest.approx(e.sum(), rel=1e-10)
    # common support across subcarriers
    for Xk in X:
        assert set(np.argsort(np.abs(Xk).ravel())[-2:]) == set(np.argsort(e.ravel())[-2:])


def test_overhead_pass_polarity_flips_once_at_closest_approach():
    track = FlightTrack((-30e3, 2e3, 10e3), (277.78, 0.0, 0.0))
    t, f = overhead_pass_doppler(track)
    sign = np.sign(f)
    flips = np.flatnonzero(np.diff(sign) != 0)
    assert len(flips) == 1
    t_ca = closest_approach_time(track)
    assert t[flips[0]] <= t_ca <= t[flips[0] + 1]


def test_overhead_pass_odd_symmetry_and_max_rate():
    track = FlightTrack((-30e3, 2e3, 10e3), (277.78, 0.0, 0.0))
    t_ca = closest_approach_time(track)
    dt = np.linspace(-100, 100, 2001)
    _, f = overhead_pass_doppler(track, times=t_ca + dt)
    assert np.allclose(f, -f[::-1], atol=1e-9)
    rate = np.abs(np.gradient(f, dt))
    assert abs(dt[np.argmax(rate)]) <= dt[1] - dt[0]


def test_max_doppler_near_one_khz():
    track = FlightTrack((-300e3, 0.0, 10e3), (277.78, 0.0, 0.0))
    _, f = overhead_pass_doppler(track, times=[0.0])
    assert f[0] == pytest.approx(277.78 / C_LIGHT * 1.08e9, rel=2e-3)
