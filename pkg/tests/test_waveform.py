import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aerosim.waveform import (
    FrameSpec,
    OfdmParams,
    SignalBuffer,
    demodulate_symbol,
    extract_nulls,
    modulate_frame,
    qpsk,
    qpsk_hard,
    random_qpsk,
    used_values,
)


@pytest.fixture
def params():
    return OfdmParams()


@pytest.fixture
def spec(params):
    return FrameSpec.default(params, n_pilot_syms=3, n_data_syms=2)


def random_frame(rng, params, spec):
    pil = random_qpsk(rng, (spec.n_pilot_syms, len(spec.pilot_subcarrier_idx)))
    dat = random_qpsk(rng, (spec.n_data_syms, len(spec.data_subcarrier_idx(params))))
    return pil, dat, modulate_frame(params, spec, pil, dat)


def test_symbol_duration_is_102_4_us(params):
    assert params.sample_rate == 625e3
    assert params.useful_duration == pytest.approx(102.4e-6, rel=1e-12)


def test_frame_length_formula(params, spec):
    pil, dat, buf = random_frame(np.random.default_rng(0), params, spec)
    short = spec.n_short_syms * (params.fft_size // spec.short_decimation + round(params.cp_len / spec.short_decimation))
    assert len(buf) == short + (spec.n_pilot_syms + spec.n_data_syms) * (params.fft_size + params.cp_len)


def test_all_zero_frame_gives_zero_buffer(params, spec):
    pil = np.zeros((spec.n_pilot_syms, len(spec.pilot_subcarrier_idx)))
    dat = np.zeros((spec.n_data_syms, len(spec.data_subcarrier_idx(params))))
    n_short = len(spec.short_index(params))
    buf = modulate_frame(params, spec, pil, dat, short_values=np.zeros(n_short))
    assert np.all(buf.samples == 0)


def test_round_trip(params, spec):
    pil, dat, buf = random_frame(np.random.default_rng(1), params, spec)
    for i, off in enumerate(spec.pilot_offsets(params)):
        fd = demodulate_symbol(buf, params, off)
        got = used_values(fd, params, spec.pilot_subcarrier_idx)
        assert np.linalg.norm(got - pil[i]) <= 1e-9 * np.linalg.norm(pil[i])
    for i, off in enumerate(spec.data_offsets(params)):
        fd = demodulate_symbol(buf, params, off)
        got = used_values(fd, params, spec.data_subcarrier_idx(params))
        assert np.linalg.norm(got - dat[i]) <= 1e-9 * np.linalg.norm(dat[i])


def test_shape_mismatch_raises(params, spec):
    with pytest.raises(ValueError):
        modulate_frame(params, spec, np.zeros((1, 3)), np.zeros((spec.n_data_syms, 42)))


def test_pilot_outside_used_band_raises(params):
    spec = FrameSpec(null_subcarrier_idx=(1,), pilot_subcarrier_idx=(30,), n_pilot_syms=1)
    with pytest.raises(ValueError):
        modulate_frame(params, spec, np.ones((1, 1)), np.zeros((0, 49)))


def test_demodulate_out_of_range_offset(params, spec):
    _, _, buf = random_frame(np.random.default_rng(2), params, spec)
    with pytest.raises(IndexError):
        demodulate_symbol(buf, params, len(buf) - 10)


def tone_symbol(params, k):
    grid = np.zeros(params.fft_size, dtype=complex)
    grid[k % params.fft_size] = 1.0
    body = np.fft.ifft(grid, norm="ortho")
    return np.r_[body[-params.cp_len :], body]


def test_single_tone_energy_only_at_its_subcarrier(params):
    k = 7
    fd = demodulate_symbol(SignalBuffer(tone_symbol(params, k), params.sample_rate), params, 0)
    mag = np.abs(fd)
    peak = np.argmax(mag)
    assert params.used_index[peak] == k
    assert np.all(np.delete(mag, peak) <= 1e-10 * mag[peak])


@pytest.mark.parametrize("d", [0, 1, 5, 11])
def test_delay_within_cp_is_phase_ramp(params, d):
    rng = np.random.default_rng(d)
    vals = random_qpsk(rng, params.used_subcarriers)
    grid = np.zeros(params.fft_size, dtype=complex)
    grid[params.bins(params.used_index)] = vals
    body = np.fft.ifft(grid, norm="ortho")
    sym = np.r_[body[-params.cp_len :], body]
    fd = demodulate_symbol(SignalBuffer(np.r_[np.zeros(d), sym], params.sample_rate), params, 0)
    k = params.used_index
    expected = vals * np.exp(-2j * np.pi * k * d / params.fft_size)
    assert np.max(np.abs(np.abs(fd) - np.abs(vals))) <= 1e-9
    assert np.max(np.abs(fd - expected)) <= 1e-9


def test_parseval(params):
    rng = np.random.default_rng(3)
    x = rng.normal(size=params.symbol_len) + 1j * rng.normal(size=params.symbol_len)
    full = np.fft.fft(x[params.cp_len :], norm="ortho")
    assert np.sum(np.abs(full) ** 2) == pytest.approx(np.sum(np.abs(x[params.cp_len :]) ** 2), rel=1e-9)


def test_nulls_of_transmitted_frame_are_empty(params, spec):
    _, _, buf = random_frame(np.random.default_rng(4), params, spec)
    for off in spec.pilot_offsets(params):
        nulls = extract_nulls(demodulate_symbol(buf, params, off), spec, params)
        assert len(nulls) == len(spec.null_subcarrier_idx)
        assert np.max(np.abs(nulls)) <= 1e-12


def test_nulls_see_only_interference(params, spec):
    rng = np.random.default_rng(5)
    _, _, buf = random_frame(rng, params, spec)
    interf = rng.normal(size=len(buf)) + 1j * rng.normal(size=len(buf))
    off = spec.pilot_offsets(params)[0]
    both = demodulate_symbol(SignalBuffer(buf.samples + interf, params.sample_rate), params, off)
    alone = demodulate_symbol(SignalBuffer(interf, params.sample_rate), params, off)
    assert np.allclose(extract_nulls(both, spec, params), extract_nulls(alone, spec, params), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(0, 3))
def test_round_trip_property(seed, n_pil, n_dat):
    params = OfdmParams()
    spec = FrameSpec.default(params, n_pilot_syms=n_pil, n_data_syms=n_dat)
    pil, dat, buf = random_frame(np.random.default_rng(seed), params, spec)
    fds = [demodulate_symbol(buf, params, o) for o in spec.pilot_offsets(params)]
    got = np.array([used_values(f, params, spec.pilot_subcarrier_idx) for f in fds])
    assert np.linalg.norm(got - pil) <= 1e-9 * np.linalg.norm(pil)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=2, max_size=64).filter(lambda b: len(b) % 2 == 0))
def test_qpsk_hard_inverts_qpsk(bits):
    assert np.array_equal(qpsk_hard(qpsk(np.array(bits))), np.array(bits))
