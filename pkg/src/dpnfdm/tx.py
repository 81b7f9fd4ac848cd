"""Transmitter: bits to QPSK bursts and b-constellations, joint INFT, frame
assembly and modulator predistortion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.signal import max_len_seq

from .core import (
    NORMALIZED,
    DiscreteComponent,
    DualPolSignal,
    NonlinearSpectrum,
    NormalizationParams,
    TimeGrid,
    continuous_energy,
    dbm_to_watt,
    denormalize,
    inverse_linear_spectrum,
    linear_spectrum,
    watt_to_dbm,
)
from .inft import InftReport, JointInftConfig, inft_joint

SQRT2 = math.sqrt(2.0)

# Gray map: first bit selects the sign of the real rail, second the imaginary
# rail, 0 -> +. Hence 00 -> (1+1j)/sqrt(2), 01 -> (1-1j)/sqrt(2), ...
GRAY_QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / SQRT2


@dataclass(frozen=True)
class NfdmFrameConfig:
    """Geometry and modulation of one NFDM symbol (burst plus guard).

    ``b_radius_mode`` selects how ``b_radii`` are read: ``"norm"`` makes the
    2-vector norm of every b equal to the radius (each polarization carries
    a QPSK point of radius r/sqrt(2)); ``"component"`` uses radius r for each
    polarization separately.

    ``continuous_energy_pj`` sets the continuous-spectrum energy per NFDM
    symbol by scaling the NIS spectrum; ``None`` keeps ``nis_scale``. With
    ``energy_mode="frame"`` one scale serves the whole frame and the energy
    target holds on average, so the receiver sees a constant amplitude;
    ``"slot"`` meets the target exactly in every NFDM symbol.
    """

    baud: float = 10e9
    samples_per_symbol: int = 16
    burst_symbols: int = 16
    guard_symbols: int = 64
    rolloff: float = 1.0
    eigenvalues: Tuple[complex, ...] = (0.3j, 0.6j)
    b_radii: Tuple[float, ...] = (5 * SQRT2, 0.05 * SQRT2)
    b_radius_mode: str = "norm"
    T0: float = 244e-12
    continuous_energy_pj: Optional[float] = 0.18
    nis_scale: float = 1.0
    energy_mode: str = "frame"
    fec_overhead: float = 0.07
    prbs_order: int = 15

    def __post_init__(self):
        if self.baud <= 0 or self.T0 <= 0:
            raise ValueError("baud and T0 must be positive")
        if self.samples_per_symbol < 2 or self.burst_symbols < 1 or self.guard_symbols < 0:
            raise ValueError("invalid burst geometry")
        if not 0 <= self.rolloff <= 1:
            raise ValueError("roll-off must lie in [0, 1]")
        if len(self.eigenvalues) != len(self.b_radii):
            raise ValueError("one b radius per eigenvalue is required")
        for ev in self.eigenvalues:
            if not complex(ev).imag > 0:
                raise ValueError(f"eigenvalue {ev} is not in the upper half plane")
        if any(r < 0 for r in self.b_radii):
            raise ValueError("b radii must be non-negative")
        if self.energy_mode not in ("frame", "slot"):
            raise ValueError(f"unknown energy_mode {self.energy_mode!r}")
        if self.b_radius_mode not in ("norm", "component"):
            raise ValueError(f"unknown b_radius_mode {self.b_radius_mode!r}")
        if self.continuous_energy_pj is not None and self.continuous_energy_pj < 0:
            raise ValueError("continuous energy must be non-negative")

    @property
    def symbols_per_slot(self) -> int:
        return self.burst_symbols + self.guard_symbols

    @property
    def samples_per_slot(self) -> int:
        return self.symbols_per_slot * self.samples_per_symbol

    @property
    def slot_duration(self) -> float:
        return self.symbols_per_slot / self.baud

    @property
    def symbol_period_norm(self) -> float:
        return 1.0 / (self.baud * self.T0)

    @property
    def continuous_bits(self) -> int:
        return 2 * 2 * self.burst_symbols

    @property
    def active_eigenvalues(self) -> Tuple[complex, ...]:
        return tuple(complex(e) for e, r in zip(self.eigenvalues, self.b_radii) if r > 0)

    @property
    def discrete_bits(self) -> int:
        return 2 * 2 * len(self.active_eigenvalues)

    @property
    def bits_per_slot(self) -> int:
        return self.continuous_bits + self.discrete_bits

    def grid(self) -> TimeGrid:
        """Normalized time grid of one NFDM symbol, centred on the burst."""
        return TimeGrid.centered(self.slot_duration / self.T0, self.samples_per_slot, NORMALIZED)

    def component_radii(self) -> Tuple[float, ...]:
        scale = 1 / SQRT2 if self.b_radius_mode == "norm" else 1.0
        return tuple(r * scale for r in self.b_radii if r > 0)

    def burst_window(self) -> Tuple[float, float]:
        """Normalized time span occupied by the burst symbols."""
        half = 0.5 * self.burst_symbols * self.symbol_period_norm
        return -half, half


def net_line_rate(cfg: NfdmFrameConfig) -> float:
    """Net bit rate after FEC overhead, in bit/s."""
    return cfg.bits_per_slot / cfg.slot_duration / (1 + cfg.fec_overhead)


def discrete_energy_pj(cfg: NfdmFrameConfig, norm: NormalizationParams) -> float:
    """Energy of the solitonic part of one NFDM symbol, 4 * sum(Im lam_k), in pJ."""
    e = 4 * sum(ev.imag for ev in cfg.active_eigenvalues)
    return e * norm.energy_unit * 1e12


def launch_power_dbm(cfg: NfdmFrameConfig, norm: NormalizationParams, energy_pj: Optional[float] = None) -> float:
    """Average frame power for a given continuous energy per NFDM symbol."""
    e = cfg.continuous_energy_pj if energy_pj is None else energy_pj
    total = (e + discrete_energy_pj(cfg, norm)) * 1e-12
    return watt_to_dbm(total / cfg.slot_duration)


def energy_for_power(cfg: NfdmFrameConfig, norm: NormalizationParams, power_dbm: float) -> float:
    """Continuous energy (pJ) giving the requested average frame power."""
    e = dbm_to_watt(power_dbm) * cfg.slot_duration * 1e12 - discrete_energy_pj(cfg, norm)
    if e <= 0:
        raise ValueError(f"{power_dbm} dBm is below the power of the discrete spectrum alone")
    return e


# -- bits and symbols ---------------------------------------------------------


def prbs_bits(n_bits: int, order: int = 15, seed: int = 1) -> np.ndarray:
    """``n_bits`` of the maximal-length sequence of the given order.

    The seed selects the starting register state, so different seeds give
    cyclic shifts of the same sequence.
    """
    period = 2**order - 1
    state_int = seed % period + 1
    state = np.array([(state_int >> k) & 1 for k in range(order)], dtype=np.int8)
    reps = -(-n_bits // period)
    seq, _ = max_len_seq(order, state=state, length=reps * period)
    return seq[:n_bits].astype(np.uint8)


def bits_to_qpsk(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size % 2:
        raise ValueError("QPSK mapping needs an even number of bits")
    idx = 2 * bits[0::2] + bits[1::2]
    return GRAY_QPSK[idx]


def qpsk_to_bits(symbols) -> np.ndarray:
    """Hard decisions for the map of :func:`bits_to_qpsk`."""
    s = np.asarray(symbols).ravel()
    out = np.empty(2 * s.size, dtype=np.uint8)
    out[0::2] = s.real < 0
    out[1::2] = s.imag < 0
    return out


# -- continuous part ----------------------------------------------------------


def raised_cosine(t: np.ndarray, period: float, rolloff: float) -> np.ndarray:
    """Raised-cosine impulse response with unit value at t = 0."""
    x = np.asarray(t, dtype=float) / period
    out = np.sinc(x)
    if rolloff == 0:
        return out
    den = 1 - (2 * rolloff * x) ** 2
    singular = np.abs(den) < 1e-10
    safe = np.where(singular, 1.0, den)
    out = out * np.cos(np.pi * rolloff * x) / safe
    out[singular] = np.pi / 4 * np.sinc(1 / (2 * rolloff))
    return out


def symbol_times(cfg: NfdmFrameConfig) -> np.ndarray:
    """Normalized centre times of the burst symbols."""
    k = np.arange(cfg.burst_symbols) - 0.5 * (cfg.burst_symbols - 1)
    return k * cfg.symbol_period_norm


def build_burst(symbols, cfg: NfdmFrameConfig, grid: Optional[TimeGrid] = None) -> DualPolSignal:
    """Raised-cosine burst centred in the slot.

    ``symbols`` has shape ``(2, burst_symbols)`` (one row per polarization).
    """
    grid = grid or cfg.grid()
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.shape != (2, cfg.burst_symbols):
        raise ValueError(f"expected symbols of shape (2, {cfg.burst_symbols})")
    pulses = raised_cosine(
        grid.t[None, :] - symbol_times(cfg)[:, None], cfg.symbol_period_norm, cfg.rolloff
    )
    wave = symbols @ pulses
    return DualPolSignal(grid, wave[0], wave[1])


def nis_map(waveform: DualPolSignal, scale: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """Continuous spectrum whose linear limit is ``scale * waveform``."""
    if waveform.units != NORMALIZED:
        raise ValueError("NIS mapping works in normalized units")
    rho = scale * linear_spectrum(waveform.samples, waveform.grid)
    return rho[0], rho[1]


def nis_demap(rho1, rho2, grid: TimeGrid, scale: float = 1.0) -> DualPolSignal:
    """Inverse of :func:`nis_map`."""
    wave = inverse_linear_spectrum(np.stack([rho1, rho2]), grid) / scale
    return DualPolSignal(grid, wave[0], wave[1])


def scale_for_energy(rho1, rho2, lambda_grid, target: float) -> float:
    """Factor s such that s * rho carries normalized continuous energy ``target``.

    ``rho1`` and ``rho2`` may hold one spectrum per row; the target then
    applies to the mean energy over rows.
    """
    if target == 0:
        return 0.0
    r1 = np.atleast_2d(rho1)
    r2 = np.atleast_2d(rho2)

    def energy(s):
        return float(np.mean([continuous_energy(lambda_grid, s * a, s * b) for a, b in zip(r1, r2)]))

    base = energy(1.0)
    if base == 0:
        raise ValueError("cannot scale an empty spectrum to nonzero energy")

    def f(log_s):
        return energy(math.exp(log_s)) - target

    # energy grows at least like s^2 / (1 + s^2 max|rho|^2); bracket generously
    lo = 0.5 * math.log(target / base) - 1.0
    hi = lo + 2.0
    while f(hi) < 0:
        hi += 2.0
    while f(lo) > 0:
        lo -= 2.0
    return math.exp(brentq(f, lo, hi, xtol=1e-14, rtol=1e-14))


# -- discrete part ------------------------------------------------------------


def b_modulate(bits, cfg: NfdmFrameConfig) -> List[DiscreteComponent]:
    """One b 2-vector per active eigenvalue from ``discrete_bits`` bits.

    Bits are consumed eigenvalue by eigenvalue, polarization 1 first.
    """
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size != cfg.discrete_bits:
        raise ValueError(f"expected {cfg.discrete_bits} discrete bits, got {bits.size}")
    sym = bits_to_qpsk(bits).reshape(-1, 2)
    return [
        DiscreteComponent(ev, r * s)
        for ev, r, s in zip(cfg.active_eigenvalues, cfg.component_radii(), sym)
    ]


def b_demodulate(b_values, cfg: NfdmFrameConfig) -> np.ndarray:
    b_values = np.asarray(b_values, dtype=complex).reshape(-1, 2)
    return qpsk_to_bits(b_values.ravel())


# -- frame synthesis ----------------------------------------------------------


@dataclass
class TxFrame:
    """A sequence of NFDM symbols and everything needed to score it."""

    cfg: NfdmFrameConfig
    continuous_bits: np.ndarray  # (n_slots, continuous_bits)
    discrete_bits: np.ndarray  # (n_slots, discrete_bits)
    symbols: np.ndarray  # (n_slots, 2, burst_symbols)
    b_reference: np.ndarray  # (n_slots, n_eigs, 2)
    spectra: List[NonlinearSpectrum]
    normalized: DualPolSignal
    waveform: DualPolSignal  # physical
    nis_scales: np.ndarray
    reports: List[InftReport] = field(default_factory=list)

    @property
    def n_slots(self) -> int:
        return self.continuous_bits.shape[0]

    def slot(self, k: int) -> DualPolSignal:
        n = self.cfg.samples_per_slot
        g = self.cfg.grid()
        s = self.normalized.samples[:, k * n : (k + 1) * n]
        return DualPolSignal(g, s[0], s[1])


def _energy_target(cfg: NfdmFrameConfig, norm: Optional[NormalizationParams]) -> float:
    if norm is None:
        raise ValueError("energy targeting needs normalization parameters")
    return cfg.continuous_energy_pj * 1e-12 / norm.energy_unit


def _unit_spectrum(continuous_bits, cfg: NfdmFrameConfig):
    symbols = bits_to_qpsk(continuous_bits).reshape(2, cfg.burst_symbols)
    rho1, rho2 = nis_map(build_burst(symbols, cfg, cfg.grid()), 1.0)
    return symbols, rho1, rho2


def frame_nis_scale(continuous_bits, cfg: NfdmFrameConfig, norm: Optional[NormalizationParams]) -> float:
    """Common NIS scale giving the target continuous energy on average over the frame."""
    if cfg.continuous_energy_pj is None:
        return cfg.nis_scale
    rows = [_unit_spectrum(cb, cfg)[1:] for cb in np.atleast_2d(continuous_bits)]
    r1 = np.array([r[0] for r in rows])
    r2 = np.array([r[1] for r in rows])
    return scale_for_energy(r1, r2, cfg.grid().lambda_grid(), _energy_target(cfg, norm))


def slot_spectrum(
    continuous_bits,
    discrete_bits,
    cfg: NfdmFrameConfig,
    norm: Optional[NormalizationParams] = None,
    scale: Optional[float] = None,
) -> Tuple[NonlinearSpectrum, np.ndarray, float]:
    """Nonlinear spectrum of one NFDM symbol, its QPSK symbols and NIS scale.

    Without an explicit ``scale`` the energy target is met by this symbol
    alone (or ``nis_scale`` is used when there is no target).
    """
    lam = cfg.grid().lambda_grid()
    symbols, rho1, rho2 = _unit_spectrum(continuous_bits, cfg)
    if scale is None:
        if cfg.continuous_energy_pj is not None:
            scale = scale_for_energy(rho1, rho2, lam, _energy_target(cfg, norm))
        else:
            scale = cfg.nis_scale
    discrete = b_modulate(discrete_bits, cfg) if cfg.discrete_bits else []
    return NonlinearSpectrum(lam, scale * rho1, scale * rho2, discrete), symbols, scale


def synthesize_frame(
    continuous_bits,
    discrete_bits,
    cfg: NfdmFrameConfig,
    norm: NormalizationParams,
    inft_cfg: Optional[JointInftConfig] = None,
) -> TxFrame:
    """Bits to a physical dual-polarization waveform, one slot per row of bits."""
    cbits = np.atleast_2d(np.asarray(continuous_bits, dtype=np.uint8))
    dbits = np.asarray(discrete_bits, dtype=np.uint8).reshape(cbits.shape[0], -1)
    if cbits.shape[1] != cfg.continuous_bits or dbits.shape[1] != cfg.discrete_bits:
        raise ValueError("bit counts do not match the frame configuration")
    grid = cfg.grid()
    common = frame_nis_scale(cbits, cfg, norm) if cfg.energy_mode == "frame" else None
    spectra, symbols, scales, reports, slots = [], [], [], [], []
    for cb, db in zip(cbits, dbits):
        spec, sym, scale = slot_spectrum(cb, db, cfg, norm, common)
        q, rep = inft_joint(spec, grid, inft_cfg, return_report=True)
        spectra.append(spec)
        symbols.append(sym)
        scales.append(scale)
        reports.append(rep)
        slots.append(q.samples)
    samples = np.concatenate(slots, axis=1)
    full = TimeGrid(grid.t_start, grid.dt, samples.shape[1], NORMALIZED)
    normalized = DualPolSignal(full, samples[0], samples[1])
    b_ref = np.array([[d.b for d in s.discrete] for s in spectra]).reshape(
        cbits.shape[0], len(cfg.active_eigenvalues), 2
    )
    return TxFrame(
        cfg,
        cbits,
        dbits,
        np.array(symbols),
        b_ref,
        spectra,
        normalized,
        denormalize(normalized, norm),
        np.array(scales),
        reports,
    )


def predistort_arcsin(waveform: DualPolSignal, drive_limit: float) -> DualPolSignal:
    """Arcsine predistortion of the I and Q rails for a sine-law modulator."""
    if drive_limit <= 0:
        raise ValueError("drive limit must be positive")
    s = waveform.samples
    if max(np.abs(s.real).max(), np.abs(s.imag).max()) > drive_limit:
        raise ValueError("waveform exceeds the drive limit")
    out = drive_limit * (np.arcsin(s.real / drive_limit) + 1j * np.arcsin(s.imag / drive_limit))
    return waveform.with_samples(out[0], out[1])


def sine_modulator(waveform: DualPolSignal, drive_limit: float) -> DualPolSignal:
    """Ideal sine transfer of a nested Mach-Zehnder modulator."""
    s = waveform.samples / drive_limit
    out = drive_limit * (np.sin(s.real) + 1j * np.sin(s.imag))
    return waveform.with_samples(out[0], out[1])
