import pytest
import yaml

from vecoffload.config import (
    ConfigError,
    EnvConfig,
    env_config_from_mapping,
    env_config_to_mapping,
    load_env_config,
)


def test_table_defaults():
    cfg = EnvConfig()
    assert cfg.n_vehicles == 5
    assert cfg.queue_size == 10
    assert cfg.tasks.size_range_bits == (0.2e6, 1.0e6)
    assert cfg.tasks.density_range == (20.0, 50.0)
    assert cfg.compute.vec_cpu_hz == 10e9
    assert cfg.compute.hold_wait_ttis == 20
    assert (cfg.thresholds.thr1_s, cfg.thresholds.thr2_s, cfg.thresholds.thr3_s) == (0.010, 0.040, 0.100)
    r = cfg.reward
    assert (r.l1, r.l2, r.l3, r.g1, r.g2, r.g3, r.g4, r.g5) == (-0.4, -0.2, 0.5, 0.8, 0.5, 0.5, 0.5, 0.5)


def test_speed_units():
    cfg = env_config_from_mapping({"vehicle_speed_kmh": [30, 50]})
    lo, hi = cfg.speed_range_mps
    assert lo == pytest.approx(8.333333, abs=1e-5)
    assert hi == pytest.approx(13.888889, abs=1e-5)


def test_mapping_round_trip():
    cfg = env_config_from_mapping(
        {"number_of_vehicles": 9, "hold_wait_ms": 50, "uplink_channels": 4, "reward": {"gamma1": 0.9}}
    )
    assert cfg.compute.hold_wait_ttis == 50
    assert cfg.radio.n_uplink_channels == 4
    assert cfg.reward.g1 == 0.9
    again = env_config_from_mapping(env_config_to_mapping(cfg))
    assert again.fingerprint() == cfg.fingerprint()


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        env_config_from_mapping({"number_of_cars": 3})
    with pytest.raises(ConfigError):
        env_config_from_mapping({"reward": {"gamma9": 1.0}})


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        env_config_from_mapping({"task_mix": {"CA": 0.5, "HPA": 0.5, "LPA": 0.5}})
    with pytest.raises(ConfigError):
        env_config_from_mapping({"hold_wait_ms": 0.5})
    with pytest.raises(ConfigError):
        env_config_from_mapping({"uplink_channels": 0})
    with pytest.raises(ConfigError):
        env_config_from_mapping({"delay_threshold_ms": [10, 40]})


def test_fingerprint_tracks_content():
    assert EnvConfig().fingerprint() == EnvConfig().fingerprint()
    assert EnvConfig().fingerprint() != EnvConfig(n_vehicles=7).fingerprint()


def test_load_yaml(tmp_path):
    path = tmp_path / "env.yaml"
    path.write_text(yaml.safe_dump({"environment": {"number_of_vehicles": 3, "vehicle_speed_kmh": [50, 80]}}))
    cfg = load_env_config(path)
    assert cfg.n_vehicles == 3
    assert cfg.speed_range_mps[1] == pytest.approx(80 / 3.6)
