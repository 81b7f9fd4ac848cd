"""Shared domain types, grids and unit conversions.

Physical fields are in sqrt(W) on a time axis in seconds; normalized fields
follow the Manakov scaling

    q = A / sqrt(P),   t_norm = t / T0,   z = -l / L

with ``P = |beta2| / (8/9 gamma T0^2)`` and ``L = 2 T0^2 / |beta2|``.
The units flag travels with every signal so that a normalized waveform is
never fed to a routine expecting watts (and vice versa).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Sequence

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.integrate import trapezoid

PHYSICAL = "physical"
NORMALIZED = "normalized"
_UNITS = (PHYSICAL, NORMALIZED)

# Manakov averaging factor on the Kerr term.
MANAKOV_FACTOR = 8.0 / 9.0

# Carrier wavelength used for the D -> beta2 conversion.
DEFAULT_WAVELENGTH = 1550e-9


class UnitsError(ValueError):
    """Raised when a signal carries the wrong units flag for an operation."""


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    dt: float
    n_samples: int
    units: str = NORMALIZED

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_samples < 2:
            raise ValueError(f"need at least 2 samples, got {self.n_samples}")
        if self.units not in _UNITS:
            raise ValueError(f"unknown units flag {self.units!r}")

    @classmethod
    def centered(cls, duration: float, n_samples: int, units: str = NORMALIZED) -> "TimeGrid":
        """Grid of ``n_samples`` points spanning ``duration`` centred on t=0."""
        dt = duration / n_samples
        return cls(-0.5 * duration, dt, n_samples, units)

    @property
    def t(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_samples)

    @property
    def duration(self) -> float:
        return self.n_samples * self.dt

    @property
    def t_end(self) -> float:
        return self.t_start + (self.n_samples - 1) * self.dt

    def angular_frequencies(self) -> np.ndarray:
        """Angular frequencies in FFT order (numpy convention, e^{-i w t} forward)."""
        return 2 * np.pi * np.fft.fftfreq(self.n_samples, self.dt)

    def lambda_grid(self) -> np.ndarray:
        """Ascending spectral-parameter grid dual to this time grid.

        The linear limit of the scattering problem maps angular frequency
        ``w`` to ``lambda = -w / 2``, so the FFT bins map one-to-one onto the
        returned grid.
        """
        return np.sort(-0.5 * self.angular_frequencies())

    def scaled(self, factor: float, units: str) -> "TimeGrid":
        return TimeGrid(self.t_start * factor, self.dt * factor, self.n_samples, units)


@dataclass
class DualPolSignal:
    grid: TimeGrid
    pol1: np.ndarray
    pol2: np.ndarray

    def __post_init__(self):
        self.pol1 = np.asarray(self.pol1, dtype=np.complex128)
        self.pol2 = np.asarray(self.pol2, dtype=np.complex128)
        n = self.grid.n_samples
        if self.pol1.shape != (n,) or self.pol2.shape != (n,):
            raise ValueError(
                f"polarization arrays must have shape ({n},), got {self.pol1.shape} and {self.pol2.shape}"
            )

    @classmethod
    def zeros(cls, grid: TimeGrid) -> "DualPolSignal":
        n = grid.n_samples
        return cls(grid, np.zeros(n, complex), np.zeros(n, complex))

    @classmethod
    def from_array(cls, grid: TimeGrid, samples: np.ndarray) -> "DualPolSignal":
        samples = np.asarray(samples)
        return cls(grid, samples[0], samples[1])

    @property
    def units(self) -> str:
        return self.grid.units

    @property
    def samples(self) -> np.ndarray:
        """Both polarizations stacked, shape ``(2, n_samples)``."""
        return np.stack([self.pol1, self.pol2])

    @property
    def t(self) -> np.ndarray:
        return self.grid.t

    def power(self) -> np.ndarray:
        return np.abs(self.pol1) ** 2 + np.abs(self.pol2) ** 2

    def with_samples(self, pol1, pol2) -> "DualPolSignal":
        return DualPolSignal(self.grid, pol1, pol2)

    def copy(self) -> "DualPolSignal":
        return DualPolSignal(self.grid, self.pol1.copy(), self.pol2.copy())

    def __add__(self, other: "DualPolSignal") -> "DualPolSignal":
        if other.grid != self.grid:
            raise ValueError("cannot add signals on different grids")
        return DualPolSignal(self.grid, self.pol1 + other.pol1, self.pol2 + other.pol2)


@dataclass(frozen=True)
class NormalizationParams:
    """Manakov normalization constants (SI units: s, s^2/m, 1/(W m))."""

    T0: float
    beta2: float
    gamma: float

    def __post_init__(self):
        if not self.T0 > 0:
            raise ValueError(f"T0 must be positive, got {self.T0}")
        if not self.beta2 < 0:
            raise ValueError("beta2 must be negative (anomalous dispersion)")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @classmethod
    def from_fiber(
        cls,
        T0: float,
        D_ps_nm_km: float,
        gamma_per_W_km: float,
        wavelength: float = DEFAULT_WAVELENGTH,
    ) -> "NormalizationParams":
        D = D_ps_nm_km * 1e-6  # ps/(nm km) -> s/m^2
        return cls(T0, dispersion_to_beta2(D, wavelength), gamma_per_W_km * 1e-3)

    @property
    def P_norm(self) -> float:
        return abs(self.beta2) / (MANAKOV_FACTOR * self.gamma * self.T0**2)

    @property
    def L_norm(self) -> float:
        return 2 * self.T0**2 / abs(self.beta2)

    @property
    def energy_unit(self) -> float:
        """Joules per unit of normalized energy."""
        return self.P_norm * self.T0


def dispersion_to_beta2(D: float, wavelength: float = DEFAULT_WAVELENGTH) -> float:
    """beta2 [s^2/m] from dispersion parameter D [s/m^2]."""
    return -D * wavelength**2 / (2 * np.pi * SPEED_OF_LIGHT)


def normalize(signal: DualPolSignal, params: NormalizationParams) -> DualPolSignal:
    if signal.units != PHYSICAL:
        raise UnitsError("normalize expects a physical signal")
    scale = 1 / np.sqrt(params.P_norm)
    grid = signal.grid.scaled(1 / params.T0, NORMALIZED)
    return DualPolSignal(grid, signal.pol1 * scale, signal.pol2 * scale)


def denormalize(signal: DualPolSignal, params: NormalizationParams) -> DualPolSignal:
    if signal.units != NORMALIZED:
        raise UnitsError("denormalize expects a normalized signal")
    scale = np.sqrt(params.P_norm)
    grid = signal.grid.scaled(params.T0, PHYSICAL)
    return DualPolSignal(grid, signal.pol1 * scale, signal.pol2 * scale)


def signal_energy(signal: DualPolSignal) -> float:
    """Trapezoidal quadrature of |q1|^2 + |q2|^2 over the grid."""
    p = signal.power()
    return float(signal.grid.dt * (p.sum() - 0.5 * (p[0] + p[-1])))


def average_power(signal: DualPolSignal) -> float:
    return float(np.mean(signal.power()))


def map_distance(length: float, params: NormalizationParams) -> float:
    """Normalized distance z = -l / L for a physical length in metres."""
    if length < 0:
        raise ValueError("length must be non-negative")
    return -length / params.L_norm


def dbm_to_watt(p_dbm):
    return 1e-3 * 10 ** (np.asarray(p_dbm) / 10)


def watt_to_dbm(p_w):
    return 10 * np.log10(np.asarray(p_w) / 1e-3)


# -- nonlinear spectrum container ------------------------------------------


@dataclass
class DiscreteComponent:
    eigenvalue: complex
    b: np.ndarray

    def __post_init__(self):
        self.eigenvalue = complex(self.eigenvalue)
        self.b = np.asarray(self.b, dtype=np.complex128).reshape(2)
        if not self.eigenvalue.imag > 0:
            raise ValueError(f"eigenvalue {self.eigenvalue} is not in the upper half plane")


@dataclass
class NonlinearSpectrum:
    lambda_grid: np.ndarray
    rho1: np.ndarray
    rho2: np.ndarray
    discrete: List[DiscreteComponent] = field(default_factory=list)

    def __post_init__(self):
        self.lambda_grid = np.asarray(self.lambda_grid, dtype=float)
        self.rho1 = np.asarray(self.rho1, dtype=np.complex128)
        self.rho2 = np.asarray(self.rho2, dtype=np.complex128)
        n = self.lambda_grid.shape
        if self.rho1.shape != n or self.rho2.shape != n:
            raise ValueError("rho arrays must match the lambda grid")
        self.discrete = [
            d if isinstance(d, DiscreteComponent) else DiscreteComponent(*d) for d in self.discrete
        ]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([d.eigenvalue for d in self.discrete], dtype=complex)

    @property
    def rho(self) -> np.ndarray:
        return np.stack([self.rho1, self.rho2])

    def continuous_energy(self) -> float:
        """(1/pi) * integral of log(1 + |rho|^2) over the grid."""
        return continuous_energy(self.lambda_grid, self.rho1, self.rho2)

    def discrete_energy(self) -> float:
        return float(4 * sum(d.eigenvalue.imag for d in self.discrete))

    def without_discrete(self) -> "NonlinearSpectrum":
        return replace(self, discrete=[])


def continuous_energy(lambda_grid, rho1, rho2) -> float:
    density = np.log1p(np.abs(rho1) ** 2 + np.abs(rho2) ** 2)
    return float(trapezoid(density, lambda_grid) / np.pi)


# -- linear (Fourier) limit of the scattering map ---------------------------
#
# For |q| -> 0 the scattering coefficient reduces to
#     b_j(lambda) = -conj( integral q_j(t) exp(2 i lambda t) dt ),
# i.e. minus the conjugate Fourier transform evaluated at w = -2 lambda. The
# two helpers below implement that map and its exact discrete inverse on the
# lambda grid returned by TimeGrid.lambda_grid().


def _fft_order(grid: TimeGrid) -> np.ndarray:
    """Indices into the ascending lambda grid for each FFT bin."""
    lam_fft = -0.5 * grid.angular_frequencies()
    return np.searchsorted(grid.lambda_grid(), lam_fft)


def linear_spectrum(samples: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Linear-limit continuous spectrum of ``samples`` (shape (..., n))."""
    w = grid.angular_frequencies()
    spec = grid.dt * np.exp(-1j * w * grid.t_start) * np.fft.fft(samples, axis=-1)
    out = np.empty_like(spec)
    out[..., _fft_order(grid)] = -np.conj(spec)
    return out


def inverse_linear_spectrum(rho: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Exact inverse of :func:`linear_spectrum` on the dual lambda grid."""
    rho = np.asarray(rho)
    w = grid.angular_frequencies()
    spec = -np.conj(rho[..., _fft_order(grid)])
    return np.fft.ifft(spec * np.exp(1j * w * grid.t_start) / grid.dt, axis=-1)


def check_dual_grid(lambda_grid: np.ndarray, grid: TimeGrid, rtol: float = 1e-9) -> None:
    expected = grid.lambda_grid()
    if lambda_grid.shape != expected.shape or not np.allclose(
        lambda_grid, expected, rtol=rtol, atol=rtol * np.abs(expected).max()
    ):
        raise ValueError("lambda grid is not the dual grid of the time grid")


def rms_relative_error(estimate: np.ndarray, reference: np.ndarray) -> float:
    ref = np.sqrt(np.sum(np.abs(reference) ** 2))
    err = np.sqrt(np.sum(np.abs(np.asarray(estimate) - reference) ** 2))
    if ref == 0:
        return float(err)
    return float(err / ref)


def as_complex_array(values: Sequence[complex]) -> np.ndarray:
    return np.asarray(values, dtype=np.complex128)
