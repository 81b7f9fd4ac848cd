import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpnfdm.channel import LinkConfig, add_ase, propagate_ssfm
from dpnfdm.core import PHYSICAL, DualPolSignal, TimeGrid, average_power, map_distance, watt_to_dbm
from dpnfdm.experiments import transmit_frame
from dpnfdm.rx import (
    EVM_FLOOR_DB,
    RxConfig,
    apply_frequency_offset,
    bandwidth_20db,
    ber_count,
    ber_from_evm,
    blind_phase_search,
    channel_inverse,
    cma_equalize,
    continuous_band_reference,
    dd_pll,
    estimate_cfo,
    evm,
    frame_sync,
    lowpass_and_rescale,
    nft_domain_equalize,
    qpsk_decide,
    receive,
    resolve_ambiguity,
    total_ber,
)
from dpnfdm.tx import NfdmFrameConfig, bits_to_qpsk, raised_cosine

NOMINAL = NfdmFrameConfig()


def qpsk(rng, n):
    return bits_to_qpsk(rng.integers(0, 2, 2 * n))


def awgn(rng, x, snr_db):
    sigma = math.sqrt(10 ** (-snr_db / 10) / 2)
    return x + sigma * (rng.normal(size=x.shape) + 1j * rng.normal(size=x.shape))


def qpsk_waveform(rng, n_sym=2048, sps=16, baud=10e9):
    """Physical raised-cosine QPSK in both polarizations."""
    n = n_sym * sps
    grid = TimeGrid(0.0, 1 / (baud * sps), n, PHYSICAL)
    up = np.zeros((2, n), complex)
    up[:, ::sps] = qpsk(rng, 2 * n_sym).reshape(2, -1)
    t = (np.arange(n) - n // 2) / sps
    h = np.fft.ifftshift(raised_cosine(t, 1.0, 0.5))
    s = np.fft.ifft(np.fft.fft(up, axis=-1) * np.fft.fft(h), axis=-1) * 1e-2
    return DualPolSignal.from_array(grid, s)


@pytest.fixture(scope="module")
def frame(norm):
    return transmit_frame(NOMINAL, norm, 24, seed=3)


# -- front end -------------------------------------------------------------------


@pytest.mark.parametrize("offset", [0.0, 50e6, -120e6])
def test_cfo_estimate(offset):
    sig = qpsk_waveform(np.random.default_rng(2))
    assert estimate_cfo(apply_frequency_offset(sig, offset)) == pytest.approx(offset, abs=0.5e6)


def test_lowpass_suppresses_out_of_band_tone(norm):
    ref = continuous_band_reference(NOMINAL, norm)
    b20 = bandwidth_20db(ref)
    grid = TimeGrid(0.0, ref.grid.dt, 8 * ref.grid.n_samples, PHYSICAL)
    t = grid.t
    f_tone = 3 * b20
    inband = 1e-2 * np.exp(2j * np.pi * 0.2 * b20 * t)
    tone = 1e-2 * np.exp(2j * np.pi * f_tone * t)
    sig = DualPolSignal(grid, inband + tone, np.zeros_like(t, dtype=complex))
    out = lowpass_and_rescale(sig, ref, 1e-4, subtract_noise=False)
    spec = np.abs(np.fft.fft(out.pol1)) ** 2
    f = np.fft.fftfreq(grid.n_samples, grid.dt)
    k_in, k_tone = np.argmin(np.abs(f - 0.2 * b20)), np.argmin(np.abs(f - f_tone))
    assert 10 * np.log10(spec[k_in] / max(spec[k_tone], 1e-300)) > 40


def test_noiseless_rescale_restores_launch_power(frame, norm):
    launch = float(np.mean(frame.waveform.power()))
    out = lowpass_and_rescale(frame.waveform, continuous_band_reference(NOMINAL, norm), launch, subtract_noise=False)
    assert watt_to_dbm(average_power(out)) == pytest.approx(watt_to_dbm(launch), abs=1e-9)
    assert watt_to_dbm(launch) == pytest.approx(-9.2, abs=0.1)
    err = np.linalg.norm(out.samples - frame.waveform.samples) / np.linalg.norm(frame.waveform.samples)
    assert err < 1e-3


def test_frame_sync_exact_shift(frame):
    ref = frame.waveform
    for shift in (0, 1000, -257):
        moved = ref.with_samples(*np.roll(ref.samples, shift, axis=-1))
        aligned, lag = frame_sync(moved, ref)
        assert lag == shift
        assert np.array_equal(aligned.samples, ref.samples)


@given(st.integers(-2000, 2000), st.integers(0, 2**16))
def test_frame_sync_under_noise(frame, shift, seed):
    ref = frame.waveform
    moved = add_ase(ref.with_samples(*np.roll(ref.samples, shift, axis=-1)), 20.0, rng=seed)
    _, lag = frame_sync(moved, ref)
    assert abs(lag - shift) <= 1


def test_frame_sync_window_limits_search(frame):
    ref = frame.waveform
    moved = ref.with_samples(*np.roll(ref.samples, 3000, axis=-1))
    _, lag = frame_sync(moved, ref, max_lag=100)
    assert abs(lag) <= 100


# -- continuous path -------------------------------------------------------------


def test_channel_inverse_at_zero_distance():
    lam = np.linspace(-3, 3, 7)
    rho = np.exp(1j * lam)
    np.testing.assert_array_equal(channel_inverse(rho, lam, 0.0), rho)


def test_cma_restores_constant_modulus():
    rng = np.random.default_rng(4)
    x = qpsk(rng, 8000).reshape(2, -1)
    th = 0.4
    mix = np.array([[math.cos(th), -math.sin(th) * 1j], [-math.sin(th) * 1j, math.cos(th)]])
    y, w = cma_equalize(mix @ x, taps=1, mu=5e-3, passes=2)
    assert np.std(np.abs(y[:, -1000:])) < 1e-2
    assert w.shape == (2, 2, 1)


def test_pll_tracks_slow_phase_drift():
    rng = np.random.default_rng(5)
    x = qpsk(rng, 20000)
    drift = 2e-4 * np.arange(x.size) + 0.1
    y = dd_pll(x * np.exp(1j * drift), bandwidth=1e-2)
    np.testing.assert_array_equal(qpsk_decide(y[2000:]), x[2000:])


def test_ambiguity_resolution():
    rng = np.random.default_rng(6)
    x = qpsk(rng, 100)
    for k in range(4):
        np.testing.assert_allclose(resolve_ambiguity(x * 1j**k, x[:20]), x)


# -- discrete path ---------------------------------------------------------------


def test_bps_removes_constant_rotation():
    rng = np.random.default_rng(7)
    x = awgn(rng, qpsk(rng, 2000), 20.0)
    phi = blind_phase_search(x * np.exp(0.3j))
    assert np.median(phi) == pytest.approx(0.3, abs=0.05)


def test_eigenvalue_phase_is_a_constant_for_bps(norm):
    # for a purely imaginary eigenvalue the channel factor exp(4i lam^2 z) is
    # a z-dependent constant, so BPS alone strips it
    rng = np.random.default_rng(8)
    x = awgn(rng, qpsk(rng, 500), 25.0)
    z = map_distance(2000e3, norm)
    y = x * np.exp(4j * (0.6j) ** 2 * z)
    rot = y * np.exp(-1j * blind_phase_search(y))
    rot = resolve_ambiguity(rot, qpsk_decide(x[:50]))
    np.testing.assert_array_equal(qpsk_decide(rot), qpsk_decide(x))


def test_nft_equalizer_recovers_sensitivity():
    rng = np.random.default_rng(9)
    n = 400
    b_true = qpsk(rng, n)
    dl = 0.01j * rng.normal(size=n) + 0.003 * rng.normal(size=n)
    c0 = 40.0 - 25.0j
    b_hat = b_true * np.exp(c0 * dl)
    out, s = nft_domain_equalize(b_hat, dl, b_true, slice(0, 100))
    assert abs(s - c0) / abs(c0) < 0.05
    np.testing.assert_allclose(out, b_true, atol=1e-9)


def test_nft_equalizer_ab_reduces_error():
    rng = np.random.default_rng(10)
    n = 2000
    b_true = qpsk(rng, n)
    dl = 0.01j + 0.004j * rng.normal(size=n) + 0.002 * rng.normal(size=n)
    b_hat = awgn(rng, b_true * np.exp((30 - 10j) * (dl - 0.01j)), 30.0)
    out, _ = nft_domain_equalize(b_hat, dl - 0.01j, b_true, slice(0, 200))
    pay = slice(200, None)
    assert np.var(out[pay] - b_true[pay]) < 0.5 * np.var(b_hat[pay] - b_true[pay])


def test_nft_equalizer_passes_through_without_displacement():
    b = qpsk(np.random.default_rng(1), 50)
    with pytest.warns(RuntimeWarning):
        out, s = nft_domain_equalize(b, np.zeros(50), b, slice(0, 10))
    assert s == 0 and np.array_equal(out, b)


# -- metrics ---------------------------------------------------------------------


def test_evm_values():
    rng = np.random.default_rng(11)
    x = qpsk(rng, 200000)
    assert evm(x, x) == (EVM_FLOOR_DB, 0.0)
    assert evm(2 * x, x)[0] == pytest.approx(0.0, abs=1e-12)
    assert evm(awgn(rng, x, 20.0), x)[0] == pytest.approx(-20.0, abs=0.3)
    with pytest.raises(ValueError):
        evm(x, np.zeros_like(x))


def test_ber_counting():
    bits = np.zeros(10**6, np.uint8)
    assert ber_count(bits, bits) == (0, 10**6, 0.0)
    flipped = bits.copy()
    flipped[12345] = 1
    assert ber_count(flipped, bits)[2] == pytest.approx(1e-6)
    with pytest.raises(ValueError):
        ber_count(bits[:5], bits)


def test_ber_from_evm():
    assert ber_from_evm(10 ** (-11.4 / 20)) == pytest.approx(1e-4, rel=0.05)
    assert ber_from_evm(0.0) == 0.0


def test_total_ber_weighting():
    assert total_ber(1e-3, 1e-2, NOMINAL) == pytest.approx((64e-3 + 8e-2) / 72)


def test_rx_config_validation():
    with pytest.raises(ValueError):
        RxConfig(cma_taps=2)
    with pytest.raises(ValueError):
        RxConfig(bps_phases=1)
    with pytest.raises(ValueError):
        RxConfig(n_train_slots=0)


# -- full chain ------------------------------------------------------------------


def test_digital_loopback_is_error_free(frame, norm):
    res = receive(frame.waveform, frame, norm, 0.0)
    assert res.errors["cont"][0] == 0 and res.errors["disc"][0] == 0
    assert res.evm_db["cont"] < -25
    again = receive(frame.waveform, frame, norm, 0.0)
    assert np.array_equal(again.continuous_symbols, res.continuous_symbols)


def test_carrier_offset_is_removed_before_the_nft(frame, norm):
    res = receive(apply_frequency_offset(frame.waveform, 100e6), frame, norm, 0.0)
    assert res.cfo_hz == pytest.approx(100e6, abs=1e6)
    assert res.ber["total"] == 0.0


def test_lossless_800km(frame, norm):
    out = propagate_ssfm(frame.waveform, LinkConfig(n_spans=16), 800.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = receive(out, frame, norm, map_distance(800e3, norm))
    assert res.ber["total"] < 3.8e-3
