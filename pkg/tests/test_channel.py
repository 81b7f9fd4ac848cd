import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from dpnfdm.channel import (
    CHANNEL_PHASE_SIGN,
    IDEAL_LOSSLESS,
    FiberParams,
    GainProfile,
    LinkConfig,
    PropagationError,
    add_ase,
    amplifier_ase_psd,
    estimate_osnr,
    linear_dispersion,
    lpa_effective_gamma,
    propagate_ssfm,
    span_noise_psd,
)
from dpnfdm.core import (
    PHYSICAL,
    DualPolSignal,
    TimeGrid,
    UnitsError,
    average_power,
    dbm_to_watt,
    denormalize,
    map_distance,
    normalize,
    signal_energy,
    watt_to_dbm,
)
from dpnfdm.experiments import transmit_frame
from dpnfdm.scatter import EigenvalueSearchConfig, continuous_spectrum, find_eigenvalues
from dpnfdm.tx import NfdmFrameConfig

from conftest import gaussian_pulse, sech_soliton

LOSSLESS = LinkConfig(n_spans=16)


def physical(norm, q):
    return denormalize(q, norm)


def test_zero_distance_is_identity(norm):
    q = physical(norm, gaussian_pulse(TimeGrid.centered(20.0, 256), 0.5))
    out = propagate_ssfm(q, LOSSLESS, 0.0)
    assert np.array_equal(out.samples, q.samples)
    assert out is not q


def test_distance_must_be_whole_spans(norm):
    q = physical(norm, gaussian_pulse(TimeGrid.centered(20.0, 256), 0.5))
    with pytest.raises(ValueError):
        propagate_ssfm(q, LOSSLESS, 75.0)
    with pytest.raises(ValueError):
        propagate_ssfm(q, LOSSLESS, -50.0)
    with pytest.raises(UnitsError):
        propagate_ssfm(normalize(q, norm), LOSSLESS, 50.0)


def test_nan_is_reported(norm):
    q = physical(norm, gaussian_pulse(TimeGrid.centered(20.0, 256), 0.5))
    bad = q.with_samples(np.full(256, np.nan), q.pol2)
    with pytest.raises(PropagationError):
        propagate_ssfm(bad, LOSSLESS, 50.0)


def test_soliton_eigenvalue_survives_800km(norm):
    grid = TimeGrid.centered(40.0, 2048)
    q0 = sech_soliton(grid, 0.45, pol=(1.0, 0.3 + 0.2j))
    out = normalize(propagate_ssfm(physical(norm, q0), LOSSLESS, 800.0), norm)
    cfg = EigenvalueSearchConfig(initial_guesses=(0.4j,))
    before, after = find_eigenvalues(q0, cfg), find_eigenvalues(out, cfg)
    assert abs(before[0] - 0.45j) < 1e-5
    assert abs(after[0] - before[0]) < 1e-3


def test_lossless_propagation_conserves_energy(norm):
    q = physical(norm, gaussian_pulse(TimeGrid.centered(30.0, 1024), 0.9, chirp=0.3))
    out = propagate_ssfm(q, LOSSLESS, 400.0)
    assert signal_energy(out) == pytest.approx(signal_energy(q), rel=1e-6)


def test_low_power_matches_linear_dispersion(fiber, norm):
    q = physical(norm, gaussian_pulse(TimeGrid.centered(60.0, 2048), 1e-3, width=1.0))
    out = propagate_ssfm(q, LinkConfig(n_spans=8), 400.0)
    ref = linear_dispersion(q, fiber.beta2, 400e3)
    err = np.linalg.norm(out.samples - ref.samples) / np.linalg.norm(ref.samples)
    assert err < 1e-3


def test_continuous_phase_sign_calibration(norm):
    # the forward channel multiplies rho by exp(s * 4i lambda^2 z); this fixes s
    grid = TimeGrid.centered(60.0, 2048)
    q0 = gaussian_pulse(grid, 0.3, width=0.8, pol=(1.0, 0.7j))
    lam = np.linspace(-1.5, 1.5, 61)
    length = 1600.0
    z = map_distance(length * 1e3, norm)
    out = normalize(propagate_ssfm(physical(norm, q0), LinkConfig(n_spans=32), length), norm)
    r0 = np.stack(continuous_spectrum(q0, lam))
    r1 = np.stack(continuous_spectrum(out, lam, boundary="ignore"))
    np.testing.assert_allclose(np.abs(r1), np.abs(r0), atol=1e-3)
    for s in (CHANNEL_PHASE_SIGN, -CHANNEL_PHASE_SIGN):
        pred = r0 * np.exp(s * 4j * lam**2 * z)
        err = np.abs(r1 - pred).max() / np.abs(r0).max()
        if s == CHANNEL_PHASE_SIGN:
            assert err < 1e-3
        else:
            assert err > 0.1


# -- path-averaged nonlinearity ---------------------------------------------------


def test_lpa_flat_profile():
    assert lpa_effective_gamma(IDEAL_LOSSLESS, 0.6e-3) == 0.6e-3
    flat = GainProfile(np.array([0.0, 50.0]), np.zeros(2))
    assert lpa_effective_gamma(flat, 0.6e-3) == pytest.approx(0.6e-3, rel=1e-12)


def test_lpa_pure_loss_closed_form():
    alpha = 0.155 * math.log(10) / 10  # 1/km
    al = alpha * 50.0
    prof = GainProfile.lossy(0.155, 50.0)
    ratio = lpa_effective_gamma(prof, 1.0)
    assert ratio == pytest.approx((1 - math.exp(-al)) / al, rel=1e-4)
    assert ratio == pytest.approx(0.4663, abs=1e-4)


def test_lpa_ripple_profile_bounds():
    # +-1.5 dB ripple over the span, checked against adaptive quadrature
    d = np.linspace(0, 50.0, 401)
    p = 1.5 * np.sin(2 * np.pi * d / 50.0)
    ratio = lpa_effective_gamma(GainProfile(d, p), 1.0)
    oracle = quad(lambda x: 10 ** (1.5 * np.sin(2 * np.pi * x / 50.0) / 10), 0, 50.0)[0] / 50.0
    assert ratio == pytest.approx(oracle, rel=1e-4)
    assert 0.84 <= ratio <= 1.19


def test_raman_profile_is_transparent():
    prof = GainProfile.backward_raman(0.155, 50.0)
    assert prof.power_db[-1] == pytest.approx(0.0, abs=1e-9)
    assert prof.power_db.min() < 0


def test_profile_from_csv(tmp_path):
    path = tmp_path / "profile.csv"
    path.write_text("l_km,power_dB\n0,0\n25,-1.5\n50,0\n")
    prof = GainProfile.from_csv(path)
    assert prof.length_km == 50.0
    assert prof.power_ratio(12.5) == pytest.approx(10 ** (-0.075))
    LinkConfig(gain_profile=prof)
    with pytest.raises(ValueError):
        LinkConfig(fiber=FiberParams(span_length_km=100.0), gain_profile=prof)


@pytest.mark.parametrize(
    "kwargs",
    [dict(span_length_km=0.0), dict(D_ps_nm_km=-17.0), dict(gamma_per_W_km=0.0)],
)
def test_fiber_validation(kwargs):
    with pytest.raises(ValueError):
        FiberParams(**kwargs)


def test_link_validation():
    with pytest.raises(ValueError):
        LinkConfig(max_step_km=0.0)
    with pytest.raises(ValueError):
        LinkConfig(gain_profile="flat")
    with pytest.raises(ValueError):
        LinkConfig(noise=("snr", 20.0))


# -- noise loading -----------------------------------------------------------------


def test_osnr_on_launch_frame(norm):
    frame = transmit_frame(NfdmFrameConfig(), norm, 24, seed=1).waveform
    sig = frame.with_samples(*(frame.samples * math.sqrt(dbm_to_watt(-9.2) / average_power(frame))))
    assert watt_to_dbm(average_power(sig)) == pytest.approx(-9.2)
    noisy = add_ase(sig, 33.8, rng=7)
    assert estimate_osnr(noisy, 20e9) == pytest.approx(33.8, abs=0.1)


def test_infinite_osnr_is_identity(norm):
    q = physical(norm, gaussian_pulse(TimeGrid.centered(20.0, 256), 0.5))
    assert np.array_equal(add_ase(q, math.inf).samples, q.samples)


@given(st.integers(0, 2**32 - 1))
def test_noise_is_seed_deterministic(seed):
    grid = TimeGrid.centered(1e-9, 128, PHYSICAL)
    q = DualPolSignal(grid, np.full(128, 1e-2 + 0j), np.zeros(128, complex))
    a, b = add_ase(q, 20.0, rng=seed), add_ase(q, 20.0, rng=seed)
    assert np.array_equal(a.samples, b.samples)


def test_add_ase_rejects_bad_arguments(norm):
    q = physical(norm, gaussian_pulse(TimeGrid.centered(20.0, 256), 0.5))
    with pytest.raises(ValueError):
        add_ase(q, 0.0)
    with pytest.raises(ValueError):
        add_ase(q, 20.0, ref_bandwidth=0.0)
    with pytest.raises(ValueError):
        add_ase(DualPolSignal.zeros(q.grid), 20.0)


def test_amplifier_ase_psd():
    # n_sp h nu (G - 1) at 1550 nm, 20 dB gain, n_sp = 1.5
    h_nu = 6.62607015e-34 * 299792458.0 / 1550e-9
    assert amplifier_ase_psd(20.0, 1.5) == pytest.approx(1.5 * h_nu * 99.0, rel=1e-12)
    assert amplifier_ase_psd(0.0) == 0.0
    with pytest.raises(ValueError):
        amplifier_ase_psd(10.0, nsp=0.5)


def test_target_osnr_is_split_over_spans():
    link = LinkConfig(n_spans=4, noise=("osnr", 20.0))
    total = 4 * span_noise_psd(link, 1e-3)
    assert 1e-3 / (total * 2 * 12.5e9) == pytest.approx(100.0)
    assert span_noise_psd(LinkConfig(n_spans=4, noise=("psd", 1e-18)), 1e-3) == 1e-18
