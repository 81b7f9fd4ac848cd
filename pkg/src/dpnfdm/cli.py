"""Command-line entry point: ``dpnfdm {roundtrip,b2b,transmit,synth,demod}``.

Every CSV starts with ``#`` comment lines carrying the config hash, the seed
and the fields that differ from the defaults, so a result file is traceable
to the run that produced it. Outputs are byte-identical for identical inputs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, overridden_fields
from .core import map_distance
from .experiments import (
    DEFAULT_FEC_THRESHOLD,
    b2b_minimum,
    prepare_transmission,
    propagate_link,
    run_b2b,
    run_roundtrip,
    run_transmit,
)
from .rx import receive
from .tx import net_line_rate
from .waveio import read_waveform, write_waveform

log = logging.getLogger("dpnfdm")

EXIT_OK, EXIT_BREACH, EXIT_CONFIG = 0, 1, 2


def _fmt(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v) or math.isnan(v):
            return str(v)
        return f"{v:.6g}"
    return str(v)


def header_lines(cfg: ExperimentConfig, command: str) -> List[str]:
    lines = [
        f"# dpnfdm {__version__} {command}",
        f"# config_hash {cfg.config_hash()}",
        f"# seed {cfg.seed}",
    ]
    for key, value in sorted(overridden_fields(cfg).items()):
        lines.append(f"# override {key}={json.dumps(value)}")
    return lines


def write_csv(path: Path, rows: Sequence[Dict[str, Any]], cfg: ExperimentConfig, command: str) -> Path:
    columns: List[str] = []
    for row in rows:
        columns.extend(k for k in row if k not in columns)
    buf = io.StringIO()
    buf.write("\n".join(header_lines(cfg, command)) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c, "")) for c in columns])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return path


def write_json(path: Path, payload: Dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n")
    return path


# -- subcommands ----------------------------------------------------------------


def cmd_roundtrip(cfg: ExperimentConfig, args) -> int:
    rows, ok = run_roundtrip(cfg, discrete=not args.no_discrete)
    path = write_csv(Path(cfg.out) / "roundtrip.csv", rows, cfg, "roundtrip")
    worst = max(r["rho_rms_err"] for r in rows)
    print(f"roundtrip: {sum(r['pass'] for r in rows)}/{len(rows)} frames within tolerance, "
          f"worst rho error {worst:.3e} -> {path}")
    return EXIT_OK if ok else EXIT_BREACH


def cmd_b2b(cfg: ExperimentConfig, args) -> int:
    rows = run_b2b(cfg, args.osnr_db, discrete=not args.no_discrete)
    path = write_csv(Path(cfg.out) / "b2b.csv", rows, cfg, "b2b")
    worst = max(r["ber_cont_est"] for r in rows)
    for mode in dict.fromkeys(r["mode"] for r in rows):
        e_min, interior = b2b_minimum(rows, mode)
        print(f"b2b {mode}: EVM minimum at {e_min:g} pJ ({'interior' if interior else 'at sweep edge'})")
    print(f"b2b: worst estimated BER {worst:.2e} -> {path}")
    return EXIT_OK


def cmd_transmit(cfg: ExperimentConfig, args) -> int:
    rows = run_transmit(cfg, args.osnr_db, discrete=not args.no_discrete)
    path = write_csv(Path(cfg.out) / "transmit.csv", rows, cfg, "transmit")
    for r in rows:
        print(f"P={r['power_dbm']:+.1f} dBm  L={r['distance_km']:g} km  BER={r['ber_total']:.3e} "
              f"({r['errors_total']}/{r['bits_total']})")
    below = sum(r["ber_total"] < DEFAULT_FEC_THRESHOLD for r in rows)
    print(f"transmit: {below}/{len(rows)} points below {DEFAULT_FEC_THRESHOLD:g} -> {path}")
    return EXIT_OK


def cmd_synth(cfg: ExperimentConfig, args) -> int:
    tx, norm = prepare_transmission(cfg, args.power_dbm, discrete=not args.no_discrete)
    sig = tx.waveform
    if args.distance_km:
        rng = np.random.default_rng([cfg.seed, 0])
        sig = propagate_link(cfg, sig, args.distance_km, rng, args.osnr_db)
    extra = {
        "config_hash": cfg.config_hash(),
        "distance_km": args.distance_km,
        "power_dbm": args.power_dbm,
        "net_rate_bps": net_line_rate(tx.cfg),
        "n_symbols": tx.n_slots,
    }
    path = write_waveform(Path(cfg.out) / "waveform.bin", sig, seed=cfg.seed, extra=extra)
    print(f"synth: {tx.n_slots} NFDM symbols, {sig.grid.n_samples} samples -> {path}")
    return EXIT_OK


def cmd_demod(cfg: ExperimentConfig, args) -> int:
    try:
        sig, header = read_waveform(args.waveform)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read waveform {args.waveform}: {exc}") from exc
    extra = header.get("extra", {})
    power = args.power_dbm if args.power_dbm is not None else extra.get("power_dbm")
    distance = args.distance_km if args.distance_km is not None else extra.get("distance_km") or 0.0
    tx, norm = prepare_transmission(cfg, power, discrete=not args.no_discrete)
    if sig.grid.n_samples != tx.waveform.grid.n_samples:
        raise ConfigError("waveform length does not match the configured frame")
    res = receive(sig, tx, norm, map_distance(distance * 1e3, norm), cfg.rx)
    summary = {
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "distance_km": distance,
        "power_dbm": power,
        "cfo_hz": res.cfo_hz,
        "delay_samples": res.delay_samples,
        "errors": {k: list(v) for k, v in res.errors.items()},
        **res.summary(),
    }
    path = write_json(Path(cfg.out) / "rx_result.json", summary)
    print(f"demod: BER {res.ber['total']:.3e} ({res.errors['total'][0]}/{res.errors['total'][1]}) -> {path}")
    return EXIT_OK


COMMANDS = {
    "roundtrip": cmd_roundtrip,
    "b2b": cmd_b2b,
    "transmit": cmd_transmit,
    "synth": cmd_synth,
    "demod": cmd_demod,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment configuration")
    common.add_argument("--seed", type=int, help="payload and noise seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int, help="parallel sweep points")
    common.add_argument("--no-discrete", action="store_true", help="continuous-only modulation")
    common.add_argument("--osnr-db", type=float, help="OSNR loading instead of the configured noise")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dpnfdm", description="Dual-polarization NFDM simulation toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("roundtrip", parents=[common], help="INFT then NFT on random payloads")
    sub.add_parser("b2b", parents=[common], help="EVM against continuous-spectrum energy")
    sub.add_parser("transmit", parents=[common], help="BER over launch power and distance")
    p = sub.add_parser("synth", parents=[common], help="write a (propagated) frame waveform")
    p.add_argument("--power-dbm", type=float, help="path-averaged launch power")
    p.add_argument("--distance-km", type=float, default=0.0)
    p = sub.add_parser("demod", parents=[common], help="demodulate a waveform file")
    p.add_argument("waveform", type=Path)
    p.add_argument("--power-dbm", type=float)
    p.add_argument("--distance-km", type=float)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out, workers=args.workers)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
