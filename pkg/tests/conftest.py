import pytest
import yaml


def small_run_dict(**overrides) -> dict:
    """A fast configuration: 12 vehicles, 4 subchannels, 3 short periods."""
    data = {
        "scenario": {
            "vehicle_count": 12,
            "tx_fraction": 0.25,
            "comm_range_m": 150.0,
            "road": {"length_m": 600.0, "lane_count": 2},
        },
        "channel": {"subchannel_count": 4},
        "time": {"periods_per_run": 3, "sps_period_slots": 5,
                 "latency_deadline_s": 5e-3},
        "seeds": [0],
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key].update(value)
        else:
            data[key] = value
    return data


@pytest.fixture
def small_dict():
    return small_run_dict()


@pytest.fixture
def write_yaml(tmp_path):
    def _write(data, name="config.yaml"):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data), encoding="utf-8")
        return path
    return _write
