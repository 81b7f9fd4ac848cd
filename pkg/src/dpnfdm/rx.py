"""Receiver: front-end conditioning, direct NFT, continuous and discrete
demodulation paths, and performance metrics."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import erfc

from .channel import CHANNEL_PHASE_SIGN, linear_dispersion
from .core import (
    NORMALIZED,
    DualPolSignal,
    NormalizationParams,
    TimeGrid,
    denormalize,
    normalize,
)
from .scatter import (
    EigenvalueSearchConfig,
    EigenvalueSearchError,
    continuous_spectrum,
    refine_eigenvalue,
    scattering_arrays,
)
from .tx import NfdmFrameConfig, TxFrame, nis_demap, qpsk_to_bits, raised_cosine, symbol_times

log = logging.getLogger(__name__)

EVM_FLOOR_DB = -60.0


@dataclass(frozen=True)
class RxConfig:
    """Receiver DSP knobs; none of them are given by the experiment."""

    cma_taps: int = 1
    cma_step: float = 1e-3
    cma_passes: int = 2
    pll_bandwidth: float = 1e-3  # normalized to the symbol rate
    pll_damping: float = 0.707
    bps_phases: int = 32
    bps_window: int = 64
    n_train_slots: int = 16
    boundary: str = "warn"
    cfo_search_hz: float = 2e9
    cfo_refine: bool = True
    sync_search: int = 3
    equalize_discrete: bool = True

    def __post_init__(self):
        if self.cma_taps < 1 or self.cma_taps % 2 == 0:
            raise ValueError("cma_taps must be a positive odd number")
        if self.bps_phases < 2 or self.bps_window < 1:
            raise ValueError("invalid BPS parameters")
        if self.n_train_slots < 1:
            raise ValueError("at least one training slot is needed")


# -- front end ----------------------------------------------------------------


def estimate_cfo(signal: DualPolSignal, search_hz: float = 2e9, oversample: int = 4) -> float:
    """Carrier offset (Hz) from the peak of the 4th-power spectrum."""
    s4 = signal.samples**4
    dt = signal.grid.dt
    n = s4.shape[1]
    nfft = 1 << int(math.ceil(math.log2(n * oversample)))
    spec = np.sum(np.abs(np.fft.fft(s4, nfft, axis=-1)) ** 2, axis=0)
    f = np.fft.fftfreq(nfft, dt)
    mask = np.abs(f) <= 4 * search_hz
    idx = np.flatnonzero(mask)[np.argmax(spec[mask])]
    f0 = f[idx]
    df = 1.0 / (nfft * dt)
    t = signal.grid.t - signal.grid.t_start

    def neg_peak(f4):
        return -abs(np.sum(s4 * np.exp(-2j * np.pi * f4 * t)))

    res = minimize_scalar(neg_peak, bounds=(f0 - df, f0 + df), method="bounded", options={"xatol": df * 1e-4})
    return float(res.x) / 4


def cfo_compensate(signal: DualPolSignal, search_hz: float = 2e9) -> Tuple[DualPolSignal, float]:
    """Remove the estimated carrier offset; returns the signal and the offset."""
    f = estimate_cfo(signal, search_hz)
    rot = np.exp(-2j * np.pi * f * (signal.grid.t - signal.grid.t_start))
    s = signal.samples * rot
    return signal.with_samples(s[0], s[1]), f


def cfo_from_eigenvalues(eigenvalues: np.ndarray, nominal: Sequence[complex], T0: float) -> float:
    """Residual carrier offset (Hz) from the real parts of recovered eigenvalues.

    A frequency shift f moves every eigenvalue by ``-pi f T0`` along the real
    axis. The median over NFDM symbols makes the estimate robust to slots
    where the search failed (``nan``).
    """
    d = np.asarray(eigenvalues) - np.asarray(nominal)[None, :]
    d = d[np.isfinite(d)]
    if d.size == 0:
        return 0.0
    return float(-np.median(d.real) / (np.pi * T0))


def cfo_from_b(b: np.ndarray, slot_duration: float, oversample: int = 16) -> float:
    """Residual carrier offset (Hz) from the slot-to-slot rotation of b.

    ``b`` holds one QPSK b-vector per NFDM symbol, shape (n_slots, 2). The
    modulation is stripped by the 4th power and the offset is the peak of
    the periodogram of the result, refined by a bounded search; the
    unambiguous range is +-1 / (8 * slot_duration).
    """
    b = np.asarray(b, dtype=complex)
    u = np.where(np.abs(b) > 0, b / np.where(np.abs(b) > 0, np.abs(b), 1), 0) ** 4
    n = u.shape[0]
    if n < 4:
        return 0.0
    nfft = 1 << int(math.ceil(math.log2(n * oversample)))
    spec = np.sum(np.abs(np.fft.fft(u, nfft, axis=0)) ** 2, axis=1)
    k = int(np.argmax(spec))
    f4 = np.fft.fftfreq(nfft, slot_duration)[k]
    df = 1.0 / (nfft * slot_duration)
    idx = np.arange(n)[:, None] * slot_duration

    def neg_peak(f):
        return -float(np.sum(np.abs(np.sum(u * np.exp(-2j * np.pi * f * idx), axis=0)) ** 2))

    res = minimize_scalar(neg_peak, bounds=(f4 - df, f4 + df), method="bounded", options={"xatol": df * 1e-4})
    # b rotates against the optical carrier
    return -float(res.x) / 4


def apply_frequency_offset(signal: DualPolSignal, offset_hz: float) -> DualPolSignal:
    rot = np.exp(2j * np.pi * offset_hz * (signal.grid.t - signal.grid.t_start))
    s = signal.samples * rot
    return signal.with_samples(s[0], s[1])


def bandwidth_20db(signal: DualPolSignal) -> float:
    """Two-sided width (Hz) of the band where the spectrum is within 20 dB of its peak."""
    f = np.fft.fftfreq(signal.grid.n_samples, signal.grid.dt)
    psd = np.sum(np.abs(np.fft.fft(signal.samples, axis=-1)) ** 2, axis=0)
    inside = f[psd >= psd.max() * 1e-2]
    return float(inside.max() - inside.min())


def lowpass(signal: DualPolSignal, cutoff_hz: float) -> DualPolSignal:
    """Brick-wall filter keeping |f| <= cutoff_hz."""
    f = np.fft.fftfreq(signal.grid.n_samples, signal.grid.dt)
    spec = np.fft.fft(signal.samples, axis=-1)
    spec[:, np.abs(f) > cutoff_hz] = 0
    s = np.fft.ifft(spec, axis=-1)
    return signal.with_samples(s[0], s[1])


def continuous_band_reference(cfg: NfdmFrameConfig, norm: NormalizationParams) -> DualPolSignal:
    """One raised-cosine pulse on the slot grid, in physical units.

    Its 20-dB width is the bandwidth of the continuous-spectrum data. The
    full transmit spectrum is not used for this: the narrowband soliton
    peaks sit far above the burst and would shrink the filter into it.
    """
    g = cfg.grid()
    pulse = raised_cosine(g.t, cfg.symbol_period_norm, cfg.rolloff).astype(complex)
    return denormalize(DualPolSignal(g, pulse, np.zeros_like(pulse)), norm)


def inband_noise_power(signal: DualPolSignal, bandwidth: float, guard: float = 2.0) -> float:
    """White-noise power in ``|f| <= bandwidth`` from the floor beyond ``guard * bandwidth``.

    Returns 0 when the sampled band leaves no room to measure the floor.
    """
    n = signal.grid.n_samples
    f = np.fft.fftfreq(n, signal.grid.dt)
    outside = np.abs(f) > guard * bandwidth
    if outside.sum() < 16:
        return 0.0
    psd = np.sum(np.abs(np.fft.fft(signal.samples, axis=-1)) ** 2, axis=0) / n**2
    # per-bin power; median is robust to residual signal leakage
    return float(np.median(psd[outside]) * np.count_nonzero(np.abs(f) <= bandwidth))


def lowpass_and_rescale(
    signal: DualPolSignal, reference: DualPolSignal, launch_power: float, subtract_noise: bool = True
) -> DualPolSignal:
    """Filter at twice the 20-dB bandwidth of ``reference`` and restore the power.

    ``B20`` is the two-sided 20-dB width; the brick-wall passband is
    ``|f| <= B20``, i.e. a total width of ``2 * B20``. With
    ``subtract_noise`` the in-band ASE estimated from the out-of-band floor
    is excluded, so the signal part (not signal plus noise) is rescaled to
    ``launch_power``.
    """
    b20 = bandwidth_20db(reference)
    out = lowpass(signal, b20)
    p = float(np.mean(out.power()))
    if subtract_noise:
        p_sig = p - inband_noise_power(signal, b20)
        p = p_sig if p_sig > 0.1 * p else p
    if p <= 0:
        raise ValueError("received signal has no power")
    s = out.samples * math.sqrt(launch_power / p)
    return out.with_samples(s[0], s[1])


def frame_sync(
    signal: DualPolSignal, reference: DualPolSignal, max_lag: Optional[int] = None
) -> Tuple[DualPolSignal, int]:
    """Circularly align ``signal`` to ``reference`` by cross-correlation.

    Returns the aligned signal and the detected delay in samples (the amount
    the received frame lags the reference). ``max_lag`` bounds the search;
    solitons with the same eigenvalues recur in every NFDM symbol, so a
    one-symbol reference correlates almost equally at every slot offset.
    """
    n = signal.grid.n_samples
    ref = np.zeros((2, n), dtype=complex)
    m = min(reference.grid.n_samples, n)
    ref[:, :m] = reference.samples[:, :m]
    corr = np.fft.ifft(np.fft.fft(signal.samples, axis=-1) * np.conj(np.fft.fft(ref, axis=-1)), axis=-1)
    score = np.sum(np.abs(corr), axis=0)
    lags = np.arange(n)
    lags[lags > n // 2] -= n
    if max_lag is not None:
        score = np.where(np.abs(lags) <= max_lag, score, -np.inf)
    lag = int(lags[np.argmax(score)])
    s = np.roll(signal.samples, -lag, axis=-1)
    return signal.with_samples(s[0], s[1]), lag


def split_slots(signal: DualPolSignal, cfg: NfdmFrameConfig) -> List[DualPolSignal]:
    """Cut a normalized frame into per-slot signals on the slot grid."""
    if signal.units != NORMALIZED:
        raise ValueError("slots are cut from a normalized frame")
    n = cfg.samples_per_slot
    if signal.grid.n_samples % n:
        raise ValueError("frame length is not a whole number of slots")
    g = cfg.grid()
    return [
        DualPolSignal(g, signal.pol1[k : k + n], signal.pol2[k : k + n])
        for k in range(0, signal.grid.n_samples, n)
    ]


# -- continuous path ----------------------------------------------------------


def channel_inverse(rho: np.ndarray, lam: np.ndarray, z: float) -> np.ndarray:
    """Undo the forward phase ``exp(CHANNEL_PHASE_SIGN * 4i lam^2 z)``."""
    return rho * np.exp(-CHANNEL_PHASE_SIGN * 4j * lam**2 * z)


def slot_symbols_continuous(
    q: DualPolSignal, z: float, cfg: NfdmFrameConfig, boundary: str = "warn"
) -> np.ndarray:
    """Burst symbols of one slot, shape (2, burst_symbols), before equalization."""
    lam = q.grid.lambda_grid()
    rho1, rho2 = continuous_spectrum(q, lam, boundary=boundary)
    rho = channel_inverse(np.stack([rho1, rho2]), lam, z)
    wave = nis_demap(rho[0], rho[1], q.grid)
    idx = np.rint((symbol_times(cfg) - q.grid.t_start) / q.grid.dt).astype(int)
    return wave.samples[:, idx]


def training_sync(
    signal: DualPolSignal,
    norm: NormalizationParams,
    z: float,
    cfg: NfdmFrameConfig,
    training_symbols: np.ndarray,
    search: int = 3,
    boundary: str = "ignore",
) -> Tuple[DualPolSignal, int]:
    """Integer-sample alignment that best reproduces the training symbols.

    For every shift in ``[-search, search]`` the training NFDM symbols are
    demodulated (continuous path, no equalizer) and compared with the known
    symbols after a per-polarization complex gain fit.
    """
    n_train = training_symbols.shape[0]
    n = cfg.samples_per_slot
    best, best_err = 0, np.inf
    for shift in range(-search, search + 1):
        s = np.roll(signal.samples[:, : (n_train + 1) * n], -shift, axis=-1)[:, : n_train * n]
        part = DualPolSignal(TimeGrid(signal.grid.t_start, signal.grid.dt, n_train * n, signal.units), s[0], s[1])
        slots = split_slots(normalize(part, norm), cfg)
        got = np.stack([slot_symbols_continuous(q, z, cfg, boundary) for q in slots])
        err = 0.0
        for p in range(2):
            x = got[:, p].ravel()
            y = training_symbols[:, p].ravel()
            g = np.vdot(x, y) / max(np.vdot(x, x).real, 1e-300)
            err += float(np.mean(np.abs(g * x - y) ** 2))
        if err < best_err:
            best, best_err = shift, err
    out = np.roll(signal.samples, -best, axis=-1)
    return signal.with_samples(out[0], out[1]), best


def cma_equalize(x: np.ndarray, taps: int = 1, mu: float = 1e-3, passes: int = 2, radius: float = 1.0):
    """Blind 2x2 butterfly equalizer with the constant-modulus error.

    For QPSK the radius-directed error reduces to a single radius. ``x`` has
    shape (2, n) at one sample per symbol; returns the equalized (2, n)
    stream and the final taps (2, 2, taps).
    """
    x = np.asarray(x, dtype=complex)
    n = x.shape[1]
    half = taps // 2
    xp = np.pad(x, ((0, 0), (half, half)))
    w = np.zeros((2, 2, taps), dtype=complex)
    w[0, 0, half] = w[1, 1, half] = 1.0
    r2 = radius**2
    for _ in range(passes):
        for k in range(n):
            seg = xp[:, k : k + taps][:, ::-1]
            y = np.einsum("ijt,jt->i", w, seg)
            e = y * (np.abs(y) ** 2 - r2)
            w -= mu * e[:, None, None] * np.conj(seg)[None, :, :]
            if not np.all(np.isfinite(w)):
                raise FloatingPointError("equalizer diverged")
    out = np.empty_like(x)
    for k in range(n):
        seg = xp[:, k : k + taps][:, ::-1]
        out[:, k] = np.einsum("ijt,jt->i", w, seg)
    return out, w


def qpsk_decide(y: np.ndarray) -> np.ndarray:
    return (np.sign(y.real) + 1j * np.sign(y.imag)) / math.sqrt(2)


def dd_pll(y: np.ndarray, bandwidth: float = 1e-3, damping: float = 0.707) -> np.ndarray:
    """Second-order decision-directed phase-locked loop on one symbol stream.

    ``bandwidth`` is the loop noise bandwidth relative to the symbol rate.
    """
    wn = 2 * bandwidth / (damping + 1 / (4 * damping))
    k1 = 2 * damping * wn
    k2 = wn**2
    phase, integ = 0.0, 0.0
    out = np.empty_like(y)
    for k, v in enumerate(y):
        u = v * np.exp(-1j * phase)
        out[k] = u
        d = qpsk_decide(u)
        err = np.angle(u * np.conj(d))
        integ += k2 * err
        phase += k1 * err + integ
    return out


def resolve_ambiguity(y: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Remove the k*pi/2 rotation that best matches the known ``reference``.

    ``reference`` covers the leading training part of ``y``.
    """
    reference = np.asarray(reference)
    m = reference.size
    best, best_err = y, np.inf
    for k in range(4):
        cand = y * 1j**k
        err = np.mean(np.abs(qpsk_decide(cand[:m]) - reference) ** 2)
        if err < best_err:
            best, best_err = cand, err
    return best


def _unit_power(x: np.ndarray) -> np.ndarray:
    p = np.mean(np.abs(x) ** 2, axis=-1, keepdims=True)
    return x / np.sqrt(np.where(p > 0, p, 1))


def demod_continuous(
    slots: Sequence[DualPolSignal],
    z: float,
    cfg: NfdmFrameConfig,
    reference_symbols: np.ndarray,
    rx: Optional[RxConfig] = None,
):
    """Continuous-path symbols and bits.

    ``reference_symbols`` (n_slots, 2, burst_symbols) is used only on the
    training slots to resolve the QPSK phase ambiguity. Returns
    ``(symbols, bits)`` with symbols shaped like the reference.
    """
    rx = rx or RxConfig()
    raw = np.stack([slot_symbols_continuous(q, z, cfg, rx.boundary) for q in slots])
    n_slots = raw.shape[0]
    stream = raw.transpose(1, 0, 2).reshape(2, -1)
    stream = _unit_power(stream)
    eq, _ = cma_equalize(stream, rx.cma_taps, rx.cma_step, rx.cma_passes)
    ref = np.asarray(reference_symbols).transpose(1, 0, 2).reshape(2, -1)
    n_train = min(rx.n_train_slots, n_slots) * cfg.burst_symbols
    out = np.empty_like(eq)
    for p in range(2):
        locked = dd_pll(eq[p], rx.pll_bandwidth, rx.pll_damping)
        out[p] = resolve_ambiguity(locked, ref[p, :n_train])
    symbols = out.reshape(2, n_slots, cfg.burst_symbols).transpose(1, 0, 2)
    bits = np.stack([qpsk_to_bits(s.ravel()) for s in symbols])
    return symbols, bits


# -- discrete path ------------------------------------------------------------


def slot_discrete(
    q: DualPolSignal, cfg: NfdmFrameConfig, search: Optional[EigenvalueSearchConfig] = None
):
    """Refined eigenvalues and b-vectors of one slot.

    A failed search yields ``nan`` for that eigenvalue and ``b = 0``.
    """
    search = search or EigenvalueSearchConfig(initial_guesses=cfg.active_eigenvalues)
    eigs, bs = [], []
    for guess in cfg.active_eigenvalues:
        try:
            ev = refine_eigenvalue(q, guess, search)
            _, b = scattering_arrays(q, [ev])
            eigs.append(ev)
            bs.append(b[:, 0])
        except EigenvalueSearchError as exc:
            log.debug("eigenvalue %s lost: %s", guess, exc)
            eigs.append(complex(np.nan, np.nan))
            bs.append(np.zeros(2, dtype=complex))
    return np.array(eigs), np.array(bs)


def blind_phase_search(x: np.ndarray, n_phases: int = 32, window: int = 64) -> np.ndarray:
    """QPSK blind phase search with a centred sliding window.

    Returns the phase estimate per symbol (modulo pi/2, unwrapped).
    """
    x = np.asarray(x, dtype=complex)
    phases = np.arange(n_phases) * (np.pi / 2) / n_phases - np.pi / 4
    rot = x[None, :] * np.exp(-1j * phases)[:, None]
    dist = np.abs(rot - qpsk_decide(rot)) ** 2
    kernel = np.ones(min(window, x.size))
    cost = np.array([np.convolve(d, kernel, mode="same") for d in dist])
    est = phases[np.argmin(cost, axis=0)]
    return np.unwrap(4 * est) / 4


def nft_domain_equalize(
    b_hat: np.ndarray,
    delta_lambda: np.ndarray,
    b_train: np.ndarray,
    train: slice,
    min_variance: float = 1e-14,
) -> Tuple[np.ndarray, complex]:
    """Remove the eigenvalue-correlated part of the b error.

    Model ``b_hat = b * exp(s * delta_lambda)`` with complex sensitivity
    ``s`` fitted by least squares on the training symbols; the payload is
    corrected by ``exp(-s * delta_lambda)``. Returns the corrected stream and
    ``s``. With (near-)zero displacement variance the input passes through.
    """
    b_hat = np.asarray(b_hat, dtype=complex)
    dl = np.asarray(delta_lambda, dtype=complex)
    ok = np.isfinite(dl) & (b_hat != 0)
    ok_t = np.zeros_like(ok)
    ok_t[train] = ok[train]
    ok_t &= np.asarray(b_train if b_train.shape == b_hat.shape else np.ones_like(b_hat)) != 0
    x = dl[ok_t]
    if x.size == 0 or np.sum(np.abs(x) ** 2) < min_variance * max(x.size, 1):
        warnings.warn("NFT-domain equalizer is ill-conditioned; passing through", RuntimeWarning, stacklevel=2)
        return b_hat.copy(), 0j
    y = np.log(b_hat[ok_t] / b_train[ok_t])
    # keep log phase on the branch closest to zero
    y = y.real + 1j * np.angle(np.exp(1j * y.imag))
    s = complex(np.sum(np.conj(x) * y) / np.sum(np.abs(x) ** 2))
    out = b_hat.copy()
    out[ok] = b_hat[ok] * np.exp(-s * dl[ok])
    return out, s


def demod_discrete(
    slots: Sequence[DualPolSignal],
    z: float,
    cfg: NfdmFrameConfig,
    reference_b: np.ndarray,
    rx: Optional[RxConfig] = None,
):
    """Discrete-path b estimates, bits and recovered eigenvalues.

    ``reference_b`` (n_slots, n_eigs, 2) is used on the training slots for
    the phase ambiguity and the NFT-domain equalizer fit.
    """
    rx = rx or RxConfig()
    eig_nom = np.array(cfg.active_eigenvalues)
    radii = np.array(cfg.component_radii())
    found = [slot_discrete(q, cfg) for q in slots]
    eigs = np.array([f[0] for f in found])  # (n_slots, n_eigs)
    b = np.array([f[1] for f in found])  # (n_slots, n_eigs, 2)
    n_slots = b.shape[0]
    # deterministic part of the channel: exp(CHANNEL_PHASE_SIGN * 4i lam^2 z)
    lam_use = np.where(np.isfinite(eigs), eigs, eig_nom[None, :])
    b = b * np.exp(-CHANNEL_PHASE_SIGN * 4j * lam_use**2 * z)[:, :, None]
    train = slice(0, min(rx.n_train_slots, n_slots))
    out = np.empty_like(b)
    for k in range(len(eig_nom)):
        dl = eigs[:, k] - eig_nom[k]
        for p in range(2):
            x = b[:, k, p] / radii[k]
            ref = reference_b[:, k, p] / radii[k]
            phi = blind_phase_search(x, rx.bps_phases, rx.bps_window)
            y = resolve_ambiguity(x * np.exp(-1j * phi), ref[train])
            if rx.equalize_discrete:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    y, _ = nft_domain_equalize(y, dl, ref, train)
            out[:, k, p] = y * radii[k]
    bits = np.stack([qpsk_to_bits((out[s] / radii[:, None]).ravel()) for s in range(n_slots)])
    return out, bits, eigs


# -- metrics ------------------------------------------------------------------


def evm(symbols, reference) -> Tuple[float, float]:
    """(EVM in dB, linear RMS EVM) relative to the RMS reference magnitude."""
    s = np.asarray(symbols).ravel()
    r = np.asarray(reference).ravel()
    ref_rms = math.sqrt(float(np.mean(np.abs(r) ** 2)))
    if ref_rms == 0:
        raise ValueError("reference has zero power")
    lin = math.sqrt(float(np.mean(np.abs(s - r) ** 2))) / ref_rms
    db = 20 * math.log10(lin) if lin > 0 else EVM_FLOOR_DB
    return max(db, EVM_FLOOR_DB), lin


def ber_count(bits_rx, bits_tx) -> Tuple[int, int, float]:
    a = np.asarray(bits_rx, dtype=np.uint8).ravel()
    b = np.asarray(bits_tx, dtype=np.uint8).ravel()
    if a.shape != b.shape:
        raise ValueError("bit streams differ in length")
    errors = int(np.count_nonzero(a != b))
    return errors, a.size, errors / a.size if a.size else 0.0


def q_function(x):
    return 0.5 * erfc(np.asarray(x) / math.sqrt(2))


def ber_from_evm(evm_rms: float) -> float:
    """Gray QPSK in Gaussian noise: BER = Q(1 / EVM_rms)."""
    if evm_rms <= 0:
        return 0.0
    return float(q_function(1.0 / evm_rms))


def total_ber(ber_cont: float, ber_disc: float, cfg: NfdmFrameConfig) -> float:
    nc, nd = cfg.continuous_bits, cfg.discrete_bits
    return (nc * ber_cont + nd * ber_disc) / (nc + nd)


# -- full chain ---------------------------------------------------------------


@dataclass
class RxResult:
    continuous_symbols: np.ndarray
    discrete_b: np.ndarray
    continuous_bits: np.ndarray
    discrete_bits: np.ndarray
    eigenvalues: np.ndarray
    ber: Dict[str, float] = field(default_factory=dict)
    errors: Dict[str, Tuple[int, int]] = field(default_factory=dict)
    evm_db: Dict[str, float] = field(default_factory=dict)
    evm_lin: Dict[str, float] = field(default_factory=dict)
    cfo_hz: float = 0.0
    delay_samples: int = 0

    def summary(self) -> Dict[str, float]:
        out = {f"ber_{k}": v for k, v in self.ber.items()}
        out.update({f"evm_{k}_db": v for k, v in self.evm_db.items()})
        return out


def score(
    tx: TxFrame, cont_sym, cont_bits, disc_b, disc_bits, eigs, rx: RxConfig
) -> RxResult:
    """Error counts and EVMs on the non-training slots."""
    cfg = tx.cfg
    pay = slice(min(rx.n_train_slots, tx.n_slots - 1) if tx.n_slots > 1 else 0, None)
    res = RxResult(cont_sym, disc_b, cont_bits, disc_bits, eigs)
    e_c, n_c, ber_c = ber_count(cont_bits[pay], tx.continuous_bits[pay])
    res.errors["cont"] = (e_c, n_c)
    res.ber["cont"] = ber_c
    res.evm_db["cont"], lin_c = evm(cont_sym[pay], tx.symbols[pay])
    res.evm_lin["cont"] = lin_c
    res.ber["cont_est"] = ber_from_evm(lin_c)
    e_d = n_d = 0
    if cfg.discrete_bits:
        radii = np.array(cfg.component_radii())
        for k, ev in enumerate(cfg.active_eigenvalues):
            rb = disc_bits[pay].reshape(disc_bits[pay].shape[0], -1, 4)[:, k]
            tb = tx.discrete_bits[pay].reshape(rb.shape[0], -1, 4)[:, k]
            e, n, b = ber_count(rb, tb)
            tag = f"disc_{ev.imag:g}"
            res.errors[tag] = (e, n)
            res.ber[tag] = b
            res.evm_db[tag], res.evm_lin[tag] = evm(
                disc_b[pay][:, k] / radii[k], tx.b_reference[pay][:, k] / radii[k]
            )
            e_d += e
            n_d += n
        res.ber["disc"] = e_d / n_d
        res.errors["disc"] = (e_d, n_d)
    else:
        res.ber["disc"] = 0.0
    res.ber["total"] = (e_c + e_d) / (n_c + n_d)
    res.errors["total"] = (e_c + e_d, n_c + n_d)
    return res


def receive(
    received: DualPolSignal,
    tx: TxFrame,
    norm: NormalizationParams,
    z: float,
    rx: Optional[RxConfig] = None,
    front_end: bool = True,
) -> RxResult:
    """Full receiver chain on a physical received frame."""
    rx = rx or RxConfig()
    cfo, lag = 0.0, 0
    sig = received
    if front_end:
        sig, cfo = cfo_compensate(sig, rx.cfo_search_hz)
        band = continuous_band_reference(tx.cfg, norm)
        sig = lowpass_and_rescale(sig, band, float(np.mean(tx.waveform.power())))
        n = tx.cfg.samples_per_slot
        first = DualPolSignal(
            TimeGrid(tx.waveform.grid.t_start, tx.waveform.grid.dt, n, tx.waveform.units),
            tx.waveform.pol1[:n],
            tx.waveform.pol2[:n],
        )
        # the burst disperses while the solitons do not; matching the
        # reference to the known accumulated dispersion keeps the
        # correlation peak on the right NFDM symbol
        first = linear_dispersion(first, norm.beta2, -z * norm.L_norm)
        filtered = sig
        max_lag = n // 2
        sig, lag = frame_sync(filtered, first, max_lag)
    slots = split_slots(normalize(sig, norm), tx.cfg)
    if front_end and rx.cfo_refine and tx.cfg.discrete_bits:
        # The 4th-power line of a dispersed NFDM frame is weak and the
        # estimate can lock onto a slot-rate harmonic. The eigenvalue real
        # parts resolve that ambiguity, then the rotation of the strongest
        # b constellation from one NFDM symbol to the next gives the fine
        # value. Synchronization is repeated after each correction.
        strongest = int(np.argmax(tx.cfg.component_radii()))
        for stage in ("eigenvalue", "b", "b"):
            found = [slot_discrete(q, tx.cfg) for q in slots]
            if stage == "eigenvalue":
                eigs = np.array([f[0] for f in found])
                df = cfo_from_eigenvalues(eigs, tx.cfg.active_eigenvalues, norm.T0)
            else:
                b = np.array([f[1][strongest] for f in found])
                df = cfo_from_b(b, tx.cfg.slot_duration)
            filtered = apply_frequency_offset(filtered, -df)
            cfo += df
            sig, lag = frame_sync(filtered, first, max_lag)
            slots = split_slots(normalize(sig, norm), tx.cfg)
    if front_end and rx.sync_search > 0 and tx.n_slots > 1:
        n_train = min(rx.n_train_slots, tx.n_slots - 1)
        sig, extra = training_sync(sig, norm, z, tx.cfg, tx.symbols[:n_train], rx.sync_search)
        lag += extra
        slots = split_slots(normalize(sig, norm), tx.cfg)
    with warnings.catch_warnings():
        if rx.boundary != "raise":
            warnings.simplefilter("ignore", RuntimeWarning)
        cont_sym, cont_bits = demod_continuous(slots, z, tx.cfg, tx.symbols, rx)
        if tx.cfg.discrete_bits:
            disc_b, disc_bits, eigs = demod_discrete(slots, z, tx.cfg, tx.b_reference, rx)
        else:
            disc_b = np.zeros((len(slots), 0, 2), complex)
            disc_bits = np.zeros((len(slots), 0), np.uint8)
            eigs = np.zeros((len(slots), 0), complex)
    res = score(tx, cont_sym, cont_bits, disc_b, disc_bits, eigs, rx)
    res.cfo_hz = cfo
    res.delay_samples = lag
    return res
