import json

import numpy as np
import pytest

from dpnfdm.config import ConfigError, ExperimentConfig, config_from_dict, load_config, overridden_fields
from dpnfdm.core import PHYSICAL, DualPolSignal, TimeGrid
from dpnfdm.waveio import read_waveform, sidecar_path, write_waveform


def test_defaults_describe_the_experiment():
    cfg = ExperimentConfig()
    assert cfg.frame.eigenvalues == (0.3j, 0.6j)
    assert cfg.frame.guard_symbols == 64
    assert cfg.fiber.span_length_km == 50.0
    assert cfg.link.tx_osnr_db == 33.8
    assert overridden_fields(cfg) == {}


def test_json_roundtrip(tmp_path):
    cfg = ExperimentConfig()
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    again = load_config(path)
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


def test_complex_eigenvalues_parse():
    cfg = config_from_dict({"frame": {"eigenvalues": ["0.3j", [0.0, 0.6]]}})
    assert cfg.frame.eigenvalues == (0.3j, 0.6j)


def test_overrides_change_hash_and_are_listed():
    base = ExperimentConfig()
    cfg = config_from_dict({"frame": {"guard_symbols": 96}, "n_symbols": 40})
    assert cfg.config_hash() != base.config_hash()
    assert overridden_fields(cfg) == {"frame.guard_symbols": 96, "n_symbols": 40}


def test_output_location_does_not_change_hash():
    a = load_config(out="a", workers=1)
    b = load_config(out="b", workers=4)
    assert a.config_hash() == b.config_hash()
    assert load_config(seed=7).config_hash() != a.config_hash()


@pytest.mark.parametrize(
    "data",
    [
        {"bogus": 1},
        {"frame": {"bogus": 1}},
        {"frame": 3},
        {"frame": {"rolloff": 2.0}},
        {"n_symbols": 4},
        {"sweep": {"distance_km": [75.0]}},
        {"sweep": {"power_dbm": []}},
        {"link": {"gain": "no-such-profile.csv"}},
    ],
)
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        cfg = config_from_dict(data)
        cfg.link_config()


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_link_resolution():
    cfg = config_from_dict({"link": {"gain": "ideal-lossless", "noise": None}})
    link = cfg.link_config()
    assert link.gain_profile == "ideal-lossless" and link.noise is None
    assert link.n_spans == 64
    raman = ExperimentConfig().link_config()
    assert raman.noise[0] == "psd" and raman.noise[1] > 0
    osnr = config_from_dict({"link": {"noise": {"osnr_db": 20}}}).link_config()
    assert osnr.noise == ("osnr", 20.0)


def test_waveform_file_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    grid = TimeGrid(-1e-9, 1e-12, 100, PHYSICAL)
    sig = DualPolSignal.from_array(grid, rng.normal(size=(2, 100)) + 1j * rng.normal(size=(2, 100)))
    path = write_waveform(tmp_path / "w.bin", sig, seed=3, extra={"note": "x"})
    back, header = read_waveform(path)
    assert np.array_equal(back.samples, sig.samples)
    assert back.grid == grid
    assert header["seed"] == 3 and header["extra"] == {"note": "x"}
    assert path.stat().st_size == 100 * 4 * 8


def test_waveform_length_checked(tmp_path):
    grid = TimeGrid(0.0, 1e-12, 10, PHYSICAL)
    path = write_waveform(tmp_path / "w.bin", DualPolSignal.zeros(grid))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        read_waveform(path)
    header = json.loads(sidecar_path(path).read_text())
    header["n_pol"] = 1
    sidecar_path(path).write_text(json.dumps(header))
    with pytest.raises(ValueError):
        read_waveform(path)
