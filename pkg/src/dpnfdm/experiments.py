"""Experiment drivers behind the command-line interface.

Each driver returns plain rows (dicts) in a deterministic order; the CLI
layer only formats and persists them.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .channel import IDEAL_LOSSLESS, add_ase, lpa_effective_gamma, propagate_ssfm
from .config import ExperimentConfig
from .core import DualPolSignal, NormalizationParams, map_distance, rms_relative_error
from .inft import JointInftConfig, inft_joint
from .rx import RxResult, evm, receive, slot_discrete, slot_symbols_continuous
from .scatter import continuous_spectrum
from .tx import (
    NfdmFrameConfig,
    TxFrame,
    energy_for_power,
    launch_power_dbm,
    prbs_bits,
    slot_spectrum,
    synthesize_frame,
)

log = logging.getLogger(__name__)

DEFAULT_FEC_THRESHOLD = 3.8e-3


def continuous_only(frame: NfdmFrameConfig) -> NfdmFrameConfig:
    return dataclasses.replace(frame, eigenvalues=(), b_radii=())


def link_normalization(cfg: ExperimentConfig) -> Tuple[NormalizationParams, float]:
    """Normalization for the link and its path-averaged power ratio.

    For a non-flat power profile the lossless path-averaged model replaces
    gamma by gamma times the mean power ratio; quoted powers then refer to
    the path-averaged power, which keeps the energy-to-power map of the
    flat link.
    """
    link = cfg.link_config()
    if link.gain_profile == IDEAL_LOSSLESS:
        return cfg.norm, 1.0
    g = lpa_effective_gamma(link.gain_profile, 1.0, cfg.fiber.span_length_km)
    return cfg.fiber.normalization(cfg.frame.T0, gamma_scale=g), g


def payload_bits(frame: NfdmFrameConfig, n_symbols: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """PRBS payload split into continuous and discrete bits per NFDM symbol."""
    bits = prbs_bits(n_symbols * frame.bits_per_slot, frame.prbs_order, seed)
    bits = bits.reshape(n_symbols, frame.bits_per_slot)
    return bits[:, : frame.continuous_bits], bits[:, frame.continuous_bits :]


def transmit_frame(
    frame: NfdmFrameConfig,
    norm: NormalizationParams,
    n_symbols: int,
    seed: int,
    inft_cfg: Optional[JointInftConfig] = None,
) -> TxFrame:
    cbits, dbits = payload_bits(frame, n_symbols, seed)
    return synthesize_frame(cbits, dbits, frame, norm, inft_cfg)


# -- round trip ---------------------------------------------------------------


def roundtrip_frame(
    frame: NfdmFrameConfig, norm: NormalizationParams, inft_cfg: JointInftConfig, rng: np.random.Generator
) -> Dict[str, float]:
    """INFT then NFT of one random NFDM symbol; relative errors and EVMs."""
    cbits = rng.integers(0, 2, frame.continuous_bits, dtype=np.uint8)
    dbits = rng.integers(0, 2, frame.discrete_bits, dtype=np.uint8)
    spec, symbols, scale = slot_spectrum(cbits, dbits, frame, norm)
    grid = frame.grid()
    q = inft_joint(spec, grid, inft_cfg)
    lam = grid.lambda_grid()
    r1, r2 = continuous_spectrum(q, lam, boundary="ignore")
    row = {"rho_rms_err": rms_relative_error(np.stack([r1, r2]), np.stack([spec.rho1, spec.rho2]))}
    sym = slot_symbols_continuous(q, 0.0, frame, "ignore") / scale
    row["evm_cont_db"] = evm(sym, symbols)[0]
    eig_err = b_err = 0.0
    if spec.discrete:
        eigs, bs = slot_discrete(q, frame)
        for d, ev, b in zip(spec.discrete, eigs, bs):
            eig_err = max(eig_err, abs(ev - d.eigenvalue) / abs(d.eigenvalue))
            b_err = max(b_err, float(np.linalg.norm(b - d.b) / np.linalg.norm(d.b)))
    row["eig_rel_err"] = float(eig_err) if math.isfinite(eig_err) else math.inf
    row["b_rel_err"] = float(b_err) if math.isfinite(b_err) else math.inf
    return row


def run_roundtrip(cfg: ExperimentConfig, discrete: bool = True) -> Tuple[List[Dict], bool]:
    frame = cfg.frame if discrete else continuous_only(cfg.frame)
    frame = dataclasses.replace(frame, energy_mode="slot")
    tol = cfg.roundtrip
    rows, ok = [], True
    for k in range(tol.n_frames):
        rng = np.random.default_rng([cfg.seed, k])
        row = {"frame": k, **roundtrip_frame(frame, cfg.norm, cfg.inft, rng)}
        row["pass"] = int(
            row["rho_rms_err"] < tol.rho_tol
            and row["eig_rel_err"] < tol.discrete_tol
            and row["b_rel_err"] < tol.discrete_tol
        )
        ok &= bool(row["pass"])
        rows.append(row)
    return rows, ok


# -- back to back ---------------------------------------------------------------


def _result_row(res: RxResult) -> Dict[str, float]:
    row = {
        "ber_cont": res.ber["cont"],
        "ber_disc": res.ber["disc"],
        "ber_total": res.ber["total"],
        "ber_cont_est": res.ber["cont_est"],
        "evm_cont_db": res.evm_db["cont"],
        "evm_cont_unfloored_db": 20 * math.log10(res.evm_lin["cont"]) if res.evm_lin["cont"] > 0 else -math.inf,
        "errors_total": res.errors["total"][0],
        "bits_total": res.errors["total"][1],
    }
    disc = [k for k in res.evm_db if k.startswith("disc_")]
    for k in disc:
        row[f"ber_{k}"] = res.ber[k]
        row[f"evm_{k}_db"] = res.evm_db[k]
    if disc:
        row["evm_disc_db"] = max(res.evm_db[k] for k in disc)
    return row


def b2b_point(args) -> Dict[str, float]:
    cfg, mode, energy, osnr_db, index = args
    frame = cfg.frame if mode == "joint" else continuous_only(cfg.frame)
    frame = dataclasses.replace(frame, continuous_energy_pj=energy)
    norm = cfg.norm
    seed = cfg.seed
    tx = transmit_frame(frame, norm, cfg.n_symbols, seed, cfg.b2b_inft)
    sig = tx.waveform
    if osnr_db is not None:
        sig = add_ase(sig, osnr_db, np.random.default_rng([seed, index]))
    res = receive(sig, tx, norm, 0.0, cfg.rx, front_end=osnr_db is not None)
    row = {"mode": mode, "energy_pj": energy, "power_dbm": launch_power_dbm(frame, norm)}
    row.update(_result_row(res))
    row["seed"] = seed
    return row


def _pool_map(fn, jobs: Sequence, workers: int) -> List:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def run_b2b(cfg: ExperimentConfig, osnr_db: Optional[float] = None, discrete: bool = True) -> List[Dict]:
    """EVM against continuous energy, joint and continuous-only modulation."""
    modes = ("joint", "continuous-only") if discrete else ("continuous-only",)
    jobs = []
    for mode in modes:
        for e in cfg.sweep.energy_pj:
            jobs.append((cfg, mode, float(e), osnr_db, len(jobs)))
    return _pool_map(b2b_point, jobs, cfg.workers)


def b2b_minimum(rows: Sequence[Dict], mode: str = "joint") -> Tuple[float, bool]:
    """Energy of the EVM minimum and whether it is interior to the sweep."""
    pts = sorted((r["energy_pj"], r["evm_cont_unfloored_db"]) for r in rows if r["mode"] == mode)
    k = int(np.argmin([p[1] for p in pts]))
    return pts[k][0], 0 < k < len(pts) - 1


# -- transmission ---------------------------------------------------------------


def prepare_transmission(
    cfg: ExperimentConfig, power_dbm: Optional[float] = None, discrete: bool = True
) -> Tuple[TxFrame, NormalizationParams]:
    """Transmitted frame for the configured link.

    ``power_dbm`` is the path-averaged power; ``None`` keeps the continuous
    energy of the frame configuration.
    """
    norm, avg_gain = link_normalization(cfg)
    frame = cfg.frame if discrete else continuous_only(cfg.frame)
    if power_dbm is not None:
        launch = power_dbm - 10 * math.log10(avg_gain)
        frame = dataclasses.replace(frame, continuous_energy_pj=energy_for_power(frame, norm, launch))
    return transmit_frame(frame, norm, cfg.n_symbols, cfg.seed, cfg.inft), norm


def propagate_link(
    cfg: ExperimentConfig,
    signal: DualPolSignal,
    distance_km: float,
    rng: np.random.Generator,
    osnr_db: Optional[float] = None,
    load_tx: bool = True,
) -> DualPolSignal:
    """Transmitter noise loading (optional) followed by SSFM over ``distance_km``."""
    link = cfg.link_config()
    if osnr_db is not None:
        link = dataclasses.replace(link, noise=("osnr", osnr_db))
    if load_tx and cfg.link.tx_osnr_db is not None and link.noise is not None:
        signal = add_ase(signal, cfg.link.tx_osnr_db, rng)
    if distance_km > 0:
        signal = propagate_ssfm(signal, link, distance_km, rng)
    return signal


def transmit_power(args) -> List[Dict]:
    """All distances at one launch power, reusing the propagated field."""
    cfg, power_dbm, index, osnr_db, discrete = args
    tx, norm = prepare_transmission(cfg, power_dbm, discrete)
    rng = np.random.default_rng([cfg.seed, index])
    sig = tx.waveform
    rows, done = [], None
    for d in sorted(cfg.sweep.distance_km):
        sig = propagate_link(cfg, sig, d - (done or 0.0), rng, osnr_db, load_tx=done is None)
        done = d
        res = receive(sig, tx, norm, map_distance(d * 1e3, norm), cfg.rx)
        row = {"power_dbm": power_dbm, "distance_km": d}
        row.update(_result_row(res))
        row["seed"] = cfg.seed
        rows.append(row)
        log.info("P=%.2f dBm d=%g km BER=%.3e", power_dbm, d, res.ber["total"])
    return rows


def run_transmit(
    cfg: ExperimentConfig, osnr_db: Optional[float] = None, discrete: bool = True
) -> List[Dict]:
    """BER over the power by distance grid, ordered by (power, distance)."""
    jobs = [(cfg, float(p), i, osnr_db, discrete) for i, p in enumerate(cfg.sweep.power_dbm)]
    out: List[Dict] = []
    for rows in _pool_map(transmit_power, jobs, cfg.workers):
        out.extend(rows)
    return out
