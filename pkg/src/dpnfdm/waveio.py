"""Waveform files: a JSON sidecar plus raw little-endian float64 samples
interleaved as (re1, im1, re2, im2) per time sample."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from .core import DualPolSignal, TimeGrid

FORMAT_VERSION = 1
_DTYPE = np.dtype("<f8")

PathLike = Union[str, Path]


def sidecar_path(path: PathLike) -> Path:
    return Path(str(path) + ".json")


def write_waveform(
    path: PathLike, signal: DualPolSignal, seed: Optional[int] = None, extra: Optional[Dict[str, Any]] = None
) -> Path:
    """Write ``signal`` to ``path`` and its header to ``path + '.json'``."""
    path = Path(path)
    s = signal.samples
    raw = np.empty((s.shape[1], 4), dtype=_DTYPE)
    raw[:, 0], raw[:, 1] = s[0].real, s[0].imag
    raw[:, 2], raw[:, 3] = s[1].real, s[1].imag
    path.parent.mkdir(parents=True, exist_ok=True)
    raw.tofile(path)
    header = {
        "format_version": FORMAT_VERSION,
        "n_samples": int(s.shape[1]),
        "dt": float(signal.grid.dt),
        "t_start": float(signal.grid.t_start),
        "units": signal.units,
        "n_pol": 2,
        "seed": seed,
    }
    if extra:
        header["extra"] = extra
    sidecar_path(path).write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return path


def read_waveform(path: PathLike) -> Tuple[DualPolSignal, Dict[str, Any]]:
    """Read a waveform written by :func:`write_waveform`."""
    path = Path(path)
    header = json.loads(sidecar_path(path).read_text())
    if header.get("n_pol") != 2:
        raise ValueError("only dual-polarization waveforms are supported")
    n = int(header["n_samples"])
    raw = np.fromfile(path, dtype=_DTYPE)
    if raw.size != 4 * n:
        raise ValueError(f"{path}: expected {4 * n} values, found {raw.size}")
    raw = raw.reshape(n, 4)
    grid = TimeGrid(float(header.get("t_start", 0.0)), float(header["dt"]), n, header["units"])
    sig = DualPolSignal(grid, raw[:, 0] + 1j * raw[:, 1], raw[:, 2] + 1j * raw[:, 3])
    return sig, header
