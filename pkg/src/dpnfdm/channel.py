"""Split-step fibre channel for the Manakov equation, with a prescribed
power profile and ASE noise loading.

Physical model (field in sqrt(W), distance in m, time in s)::

    dA/dl = -i beta2/2 d^2A/dt^2 + i (8/9) gamma |A|^2 A + (g(l)/2) A

where ``g`` is the net power gain per metre implied by the loop power
profile. The ``ideal-lossless`` profile drops the last term.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from scipy import fft as sfft
from scipy.integrate import trapezoid
from scipy.signal import welch

from .core import (
    MANAKOV_FACTOR,
    PHYSICAL,
    DEFAULT_WAVELENGTH,
    DualPolSignal,
    NormalizationParams,
    UnitsError,
    dispersion_to_beta2,
)

log = logging.getLogger(__name__)

PLANCK = 6.62607015e-34
LIGHT_SPEED = 299792458.0
OSNR_REF_BANDWIDTH = 12.5e9  # 0.1 nm at 1550 nm

# Sign s of the forward channel on the continuous spectrum in our conventions:
# rho(lambda, z) = rho(lambda, 0) * exp(s * 4i lambda^2 z), z = -l / L.
# Fixed by the short-distance calibration test in the suite.
CHANNEL_PHASE_SIGN = -1


class PropagationError(RuntimeError):
    """NaN/overflow or step-control violation during split-step integration."""


@dataclass(frozen=True)
class FiberParams:
    alpha_db_km: float = 0.155
    D_ps_nm_km: float = 22.0
    gamma_per_W_km: float = 0.6
    span_length_km: float = 50.0
    wavelength: float = DEFAULT_WAVELENGTH

    def __post_init__(self):
        if self.span_length_km <= 0:
            raise ValueError("span length must be positive")
        if self.D_ps_nm_km <= 0:
            raise ValueError("only anomalous dispersion (D > 0) is supported")
        if self.gamma_per_W_km <= 0 or self.alpha_db_km < 0:
            raise ValueError("invalid loss or nonlinearity")

    @property
    def beta2(self) -> float:
        return dispersion_to_beta2(self.D_ps_nm_km * 1e-6, self.wavelength)

    @property
    def gamma(self) -> float:
        return self.gamma_per_W_km * 1e-3

    def normalization(self, T0: float, gamma_scale: float = 1.0) -> NormalizationParams:
        return NormalizationParams(T0, self.beta2, self.gamma * gamma_scale)


@dataclass(frozen=True)
class GainProfile:
    """Net signal power evolution over one span, in dB relative to launch.

    Sampled at ``distance_km`` (starting at 0); linearly interpolated.
    """

    distance_km: np.ndarray
    power_db: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.distance_km, dtype=float)
        p = np.asarray(self.power_db, dtype=float)
        if d.ndim != 1 or d.size < 2 or d.shape != p.shape:
            raise ValueError("profile needs matching distance and power samples (>= 2)")
        if d[0] != 0 or np.any(np.diff(d) <= 0):
            raise ValueError("profile distances must start at 0 and increase")
        object.__setattr__(self, "distance_km", d)
        object.__setattr__(self, "power_db", p)

    @property
    def length_km(self) -> float:
        return float(self.distance_km[-1])

    def power_ratio(self, l_km) -> np.ndarray:
        """Linear power relative to launch at ``l_km`` within the span."""
        return 10 ** (np.interp(l_km, self.distance_km, self.power_db) / 10)

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "GainProfile":
        """Two columns ``l_km, power_dB``; a header row is skipped if present."""
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    if rows:
                        raise
        if not rows:
            raise ValueError(f"no profile samples in {path}")
        d, p = np.array(rows).T
        return cls(d, p)

    @classmethod
    def lossy(cls, alpha_db_km: float, span_km: float, n: int = 201) -> "GainProfile":
        d = np.linspace(0, span_km, n)
        return cls(d, -alpha_db_km * d)

    @classmethod
    def backward_raman(
        cls, alpha_db_km: float, span_km: float, pump_alpha_db_km: float = 0.25, n: int = 201
    ) -> "GainProfile":
        """Backward-pumped distributed Raman span with zero net gain."""
        d = np.linspace(0, span_km, n)
        a_s = alpha_db_km * math.log(10) / 10
        a_p = pump_alpha_db_km * math.log(10) / 10
        pump = np.exp(-a_p * (span_km - d))
        # integral of the pump over [0, l], scaled so the span is transparent
        cum = (pump - math.exp(-a_p * span_km)) / a_p
        g = a_s * span_km / cum[-1]
        ln_p = -a_s * d + g * cum
        return cls(d, 10 / math.log(10) * ln_p)


IDEAL_LOSSLESS = "ideal-lossless"


@dataclass(frozen=True)
class LinkConfig:
    """Span layout, power profile, noise loading and step control.

    ``noise`` is either ``None``, ``("osnr", dB)`` for a target OSNR after
    all ``n_spans`` spans (split evenly over them, so shorter distances see
    proportionally less noise), or ``("psd", W/Hz)`` for the ASE power
    spectral density per polarization added at every span end.
    """

    fiber: FiberParams = field(default_factory=FiberParams)
    n_spans: int = 1
    gain_profile: Union[str, GainProfile] = IDEAL_LOSSLESS
    noise: Optional[Tuple[str, float]] = None
    max_step_km: float = 5.0
    max_nl_phase: float = 2e-3

    def __post_init__(self):
        if self.n_spans < 0:
            raise ValueError("n_spans must be non-negative")
        if self.max_step_km <= 0 or self.max_nl_phase <= 0:
            raise ValueError("step control values must be positive")
        if isinstance(self.gain_profile, GainProfile):
            if not math.isclose(self.gain_profile.length_km, self.fiber.span_length_km, rel_tol=1e-9):
                raise ValueError("gain profile length must match the span length")
        elif self.gain_profile != IDEAL_LOSSLESS:
            raise ValueError(f"unknown gain profile {self.gain_profile!r}")
        if self.noise is not None:
            kind, value = self.noise
            if kind not in ("osnr", "psd"):
                raise ValueError(f"unknown noise specification {kind!r}")
            if kind == "psd" and value < 0:
                raise ValueError("noise PSD must be non-negative")

    @property
    def length_km(self) -> float:
        return self.n_spans * self.fiber.span_length_km

    def with_spans(self, n_spans: int) -> "LinkConfig":
        return replace(self, n_spans=n_spans)


def lpa_effective_gamma(profile: Union[str, GainProfile], gamma: float, span_length_km=None) -> float:
    """Path-averaged nonlinearity gamma * (1/L) * integral G(l) dl."""
    if isinstance(profile, str):
        if profile != IDEAL_LOSSLESS:
            raise ValueError(f"unknown gain profile {profile!r}")
        return gamma
    d = profile.distance_km
    if d.size == 0:
        raise ValueError("empty profile")
    length = span_length_km if span_length_km is not None else profile.length_km
    fine = np.linspace(0, length, max(2001, 4 * d.size))
    return float(gamma * trapezoid(profile.power_ratio(fine), fine) / length)


# -- split-step integration ----------------------------------------------------


def _check_finite(samples: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(samples)):
        raise PropagationError(f"non-finite field during propagation ({where})")


def _span_steps(link: LinkConfig, peak_power: float) -> np.ndarray:
    """Step boundaries (m) inside one span."""
    f = link.fiber
    gain_max = 1.0
    if isinstance(link.gain_profile, GainProfile):
        gain_max = float(link.gain_profile.power_ratio(link.gain_profile.distance_km).max())
    nl = MANAKOV_FACTOR * f.gamma * peak_power * gain_max
    h = link.max_step_km * 1e3
    if nl > 0:
        h = min(h, link.max_nl_phase / nl)
    span = f.span_length_km * 1e3
    n = max(1, math.ceil(span / h - 1e-9))
    return np.linspace(0.0, span, n + 1)


def propagate_span(signal: DualPolSignal, link: LinkConfig) -> DualPolSignal:
    """One span of symmetric split-step integration.

    Adjacent half dispersion steps are fused, so each step costs one FFT
    pair: D(h1/2) N D((h1+h2)/2) N ... N D(hn/2).
    """
    f = link.fiber
    g = signal.grid
    w2 = g.angular_frequencies() ** 2
    bounds = _span_steps(link, float(signal.power().max()))
    profile = link.gain_profile if isinstance(link.gain_profile, GainProfile) else None
    gamma_m = MANAKOV_FACTOR * f.gamma
    cache = {}

    def dispersion(dl):
        key = round(dl, 9)
        if key not in cache:
            cache[key] = np.exp(0.5j * f.beta2 * w2 * dl)
        return cache[key]

    steps = np.diff(bounds)
    spec = sfft.fft(signal.samples, axis=-1) * dispersion(steps[0] / 2)
    for k, (l0, l1) in enumerate(zip(bounds[:-1], bounds[1:])):
        dl = l1 - l0
        A = sfft.ifft(spec, axis=-1)
        power = A[0].real ** 2 + A[0].imag ** 2 + A[1].real ** 2 + A[1].imag ** 2
        if profile is not None:
            # midpoint power relative to the start of the step sets the
            # effective nonlinear length; the gain is applied as a ratio
            r0, r1 = profile.power_ratio([l0 / 1e3, l1 / 1e3])
            rm = profile.power_ratio(0.5 * (l0 + l1) / 1e3)
            A *= np.exp(1j * gamma_m * (rm / r0) * dl * power) * math.sqrt(r1 / r0)
        else:
            A *= np.exp(1j * gamma_m * dl * power)
        nxt = 0.5 * (dl + steps[k + 1]) if k + 1 < steps.size else 0.5 * dl
        spec = sfft.fft(A, axis=-1) * dispersion(nxt)
    A = sfft.ifft(spec, axis=-1)
    _check_finite(A, "span end")
    return signal.with_samples(A[0], A[1])


def linear_dispersion(signal: DualPolSignal, beta2: float, length_m: float) -> DualPolSignal:
    """Chromatic dispersion alone over ``length_m``: exp(i beta2 w^2 l / 2)."""
    if signal.units != PHYSICAL:
        raise UnitsError("dispersion works on physical signals")
    w = 2 * np.pi * np.fft.fftfreq(signal.grid.n_samples, signal.grid.dt)
    A = np.fft.ifft(np.fft.fft(signal.samples, axis=-1) * np.exp(0.5j * beta2 * w**2 * length_m), axis=-1)
    return signal.with_samples(A[0], A[1])


def ase_psd_for_osnr(signal_power: float, osnr_db: float, ref_bandwidth: float = OSNR_REF_BANDWIDTH) -> float:
    """ASE PSD per polarization (W/Hz) giving ``osnr_db`` for ``signal_power``."""
    return signal_power / (10 ** (osnr_db / 10) * 2 * ref_bandwidth)


def add_ase(
    signal: DualPolSignal,
    osnr_db: float,
    rng: Union[np.random.Generator, int, None] = None,
    ref_bandwidth: float = OSNR_REF_BANDWIDTH,
) -> DualPolSignal:
    """Add white circular Gaussian noise for the requested OSNR.

    OSNR is total signal power over the noise power of both polarizations in
    ``ref_bandwidth``. ``osnr_db = inf`` returns the input unchanged.
    """
    if signal.units != PHYSICAL:
        raise UnitsError("ASE loading works on physical signals")
    if ref_bandwidth <= 0:
        raise ValueError("reference bandwidth must be positive")
    if math.isinf(osnr_db) and osnr_db > 0:
        return signal.copy()
    if not osnr_db > 0:
        raise ValueError("OSNR must be positive (in dB)")
    p_sig = float(np.mean(signal.power()))
    if p_sig <= 0:
        raise ValueError("cannot set an OSNR on a zero signal")
    return add_ase_psd(signal, ase_psd_for_osnr(p_sig, osnr_db, ref_bandwidth), rng)


def add_ase_psd(signal: DualPolSignal, psd: float, rng=None) -> DualPolSignal:
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    fs = 1.0 / signal.grid.dt
    sigma = math.sqrt(psd * fs / 2)
    n = signal.grid.n_samples
    noise = sigma * (rng.standard_normal((2, n)) + 1j * rng.standard_normal((2, n)))
    s = signal.samples + noise
    return signal.with_samples(s[0], s[1])


def estimate_osnr(
    signal: DualPolSignal,
    signal_band: float,
    ref_bandwidth: float = OSNR_REF_BANDWIDTH,
    nperseg: int = 4096,
) -> float:
    """OSNR (dB) from the out-of-band noise floor of the periodogram.

    The noise density is the mean Welch density for ``|f| > signal_band``;
    signal power is total power minus the white noise it implies.
    """
    fs = 1.0 / signal.grid.dt
    total_noise_density = 0.0
    p_total = 0.0
    for pol in signal.samples:
        f, pxx = welch(pol, fs=fs, nperseg=min(nperseg, pol.size), return_onesided=False, detrend=False)
        mask = np.abs(f) > signal_band
        if not np.any(mask):
            raise ValueError("no out-of-band region to measure the noise floor")
        total_noise_density += float(np.mean(pxx[mask]))
        p_total += float(np.mean(np.abs(pol) ** 2))
    p_noise = total_noise_density * fs
    p_sig = p_total - p_noise
    if p_sig <= 0:
        return -math.inf
    return 10 * math.log10(p_sig / (total_noise_density * ref_bandwidth))


def amplifier_ase_psd(gain_db: float, nsp: float = 1.5, wavelength: float = DEFAULT_WAVELENGTH) -> float:
    """ASE PSD per polarization, n_sp h nu (G - 1), for one amplified span."""
    if nsp < 1:
        raise ValueError("spontaneous emission factor must be >= 1")
    g = 10 ** (gain_db / 10)
    return nsp * PLANCK * LIGHT_SPEED / wavelength * max(g - 1, 0.0)


def span_noise_psd(link: LinkConfig, launch_power: float) -> float:
    """Per-span ASE PSD (per polarization) implied by ``link.noise``."""
    if link.noise is None or link.n_spans == 0:
        return 0.0
    kind, value = link.noise
    if kind == "psd":
        return value
    return ase_psd_for_osnr(launch_power, value) / link.n_spans


def propagate_ssfm(
    signal: DualPolSignal,
    link: LinkConfig,
    distance_km: Optional[float] = None,
    rng: Union[np.random.Generator, int, None] = None,
) -> DualPolSignal:
    """Propagate over ``distance_km`` (a multiple of the span length).

    Noise, when configured, is added at the end of every span.
    """
    if signal.units != PHYSICAL:
        raise UnitsError("propagation works on physical signals")
    span = link.fiber.span_length_km
    if distance_km is None:
        distance_km = link.length_km
    if distance_km < 0:
        raise ValueError("distance must be non-negative")
    n = distance_km / span
    if not math.isclose(n, round(n), abs_tol=1e-9):
        raise ValueError(f"distance {distance_km} km is not a multiple of the span length {span} km")
    n = int(round(n))
    if n == 0:
        return signal.copy()
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    psd = span_noise_psd(link, float(np.mean(signal.power())))
    out = signal
    for k in range(n):
        out = propagate_span(out, link)
        if psd > 0:
            out = add_ase_psd(out, psd, rng)
        log.debug("span %d/%d done", k + 1, n)
    return out
