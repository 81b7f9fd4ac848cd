import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dpnfdm.core import (
    NORMALIZED,
    PHYSICAL,
    DiscreteComponent,
    DualPolSignal,
    NonlinearSpectrum,
    NormalizationParams,
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

from conftest import sech_soliton

# beta2 = -D lambda^2 / (2 pi c) at 1550 nm, then P and L from their definitions,
# evaluated by hand with c = 299792458 m/s.
BETA2_PS2_KM = -28.0599
P_NORM_W = 8.83705e-4
L_NORM_M = 4.24350e6
Z_3200KM = -0.754095


def test_nominal_normalization_constants(norm):
    assert norm.beta2 * 1e27 == pytest.approx(BETA2_PS2_KM, rel=1e-4)
    assert norm.P_norm == pytest.approx(P_NORM_W, rel=1e-4)
    assert norm.L_norm == pytest.approx(L_NORM_M, rel=1e-4)
    assert map_distance(3200e3, norm) == pytest.approx(Z_3200KM, rel=1e-4)


def test_from_fiber_matches_fiber_params(norm):
    direct = NormalizationParams.from_fiber(244e-12, 22.0, 0.6)
    assert direct == norm


@pytest.mark.parametrize("kwargs", [dict(T0=0.0), dict(beta2=1e-27), dict(gamma=0.0)])
def test_normalization_rejects_bad_parameters(kwargs):
    base = dict(T0=244e-12, beta2=-2.8e-26, gamma=6e-4)
    base.update(kwargs)
    with pytest.raises(ValueError):
        NormalizationParams(**base)


def test_map_distance_examples(norm):
    assert map_distance(0.0, norm) == 0.0
    assert map_distance(norm.L_norm, norm) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        map_distance(-1.0, norm)


@given(st.floats(0, 1e7), st.floats(0, 1e7))
def test_map_distance_linear_and_nonpositive(norm, l1, l2):
    z1, z2 = map_distance(l1, norm), map_distance(l2, norm)
    assert z1 <= 0 and z2 <= 0
    assert map_distance(l1 + l2, norm) == pytest.approx(z1 + z2, rel=1e-12, abs=1e-15)


samples = arrays(np.complex128, 64, elements=st.complex_numbers(max_magnitude=1e-1, allow_nan=False))


@given(samples, samples)
def test_normalize_roundtrip(norm, s1, s2):
    grid = TimeGrid(-1e-9, 2e-11, 64, PHYSICAL)
    sig = DualPolSignal(grid, s1, s2)
    back = denormalize(normalize(sig, norm), norm)
    assert back.units == PHYSICAL
    np.testing.assert_allclose(back.samples, sig.samples, rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(back.grid.t, grid.t, rtol=1e-12, atol=1e-21)


@given(samples, samples)
def test_energy_scaling_law(norm, s1, s2):
    grid = TimeGrid(-1e-9, 2e-11, 64, PHYSICAL)
    sig = DualPolSignal(grid, s1, s2)
    e_norm = signal_energy(normalize(sig, norm))
    assert signal_energy(sig) == pytest.approx(e_norm * norm.P_norm * norm.T0, rel=1e-10, abs=1e-300)


def test_units_flag_enforced(norm):
    grid = TimeGrid(0.0, 1.0, 8, NORMALIZED)
    with pytest.raises(UnitsError):
        normalize(DualPolSignal.zeros(grid), norm)
    with pytest.raises(UnitsError):
        denormalize(DualPolSignal.zeros(grid.scaled(1.0, PHYSICAL)), norm)


def test_zero_signal_stays_zero(norm):
    grid = TimeGrid(0.0, 1e-12, 16, PHYSICAL)
    out = normalize(DualPolSignal.zeros(grid), norm)
    assert not out.samples.any()
    assert signal_energy(out) == 0.0


def test_launch_power_survives_roundtrip(norm):
    grid = TimeGrid.centered(8e-9, 1280, PHYSICAL)
    rng = np.random.default_rng(3)
    s = rng.normal(size=(2, 1280)) + 1j * rng.normal(size=(2, 1280))
    s *= np.sqrt(dbm_to_watt(-9.2) / np.mean(np.sum(np.abs(s) ** 2, axis=0)))
    sig = DualPolSignal.from_array(grid, s)
    back = denormalize(normalize(sig, norm), norm)
    assert watt_to_dbm(average_power(back)) == pytest.approx(-9.2, abs=1e-9)


def test_unit_energy_pulse_maps_to_energy_unit(norm):
    grid = TimeGrid.centered(40.0, 4000)
    p = np.exp(-grid.t**2)
    p /= np.sqrt(signal_energy(DualPolSignal(grid, p, 0 * p)))
    sig = DualPolSignal(grid, p, 0 * p)
    assert signal_energy(denormalize(sig, norm)) == pytest.approx(norm.energy_unit, rel=1e-9)


def test_soliton_energy_is_four_eta():
    grid = TimeGrid.centered(40.0, 4096)
    assert signal_energy(sech_soliton(grid, 0.5)) == pytest.approx(2.0, rel=1e-3)


def test_energy_additive_over_disjoint_bursts():
    grid = TimeGrid.centered(40.0, 4096)
    t = grid.t
    a = np.exp(-((t + 10) ** 2))
    b = 0.5j * np.exp(-((t - 10) ** 2))
    ea = signal_energy(DualPolSignal(grid, a, 0 * a))
    eb = signal_energy(DualPolSignal(grid, 0 * b, b))
    assert signal_energy(DualPolSignal(grid, a, b)) == pytest.approx(ea + eb, rel=1e-12)


def test_dbm_conversions():
    assert dbm_to_watt(0.0) == pytest.approx(1e-3)
    assert watt_to_dbm(dbm_to_watt(-9.2)) == pytest.approx(-9.2)


def test_time_grid_invariants():
    g = TimeGrid.centered(8.0, 1280)
    assert g.duration == pytest.approx(8.0)
    assert g.n_samples == 1280
    lam = g.lambda_grid()
    assert lam.size == 1280 and np.all(np.diff(lam) > 0)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 0.0, 10)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 1)


def test_spectrum_rejects_lower_half_plane_eigenvalue():
    lam = np.linspace(-1, 1, 8)
    with pytest.raises(ValueError):
        NonlinearSpectrum(lam, np.zeros(8), np.zeros(8), [DiscreteComponent(-0.1j, np.ones(2))])
    with pytest.raises(ValueError):
        NonlinearSpectrum(lam, np.zeros(7), np.zeros(8), [])
