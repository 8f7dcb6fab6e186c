import math

import numpy as np
import pytest

from noma_v2x.channel import (
    ChannelConfig,
    FadingSampler,
    PeriodChannel,
    ShadowingSampler,
    dbm_to_watts,
    link_gain,
    path_loss_gain,
)
from noma_v2x.scenario import ROLE_RX, ROLE_TX, RoadConfig, Vehicle


def test_gain_at_reference_distance():
    cfg = ChannelConfig()
    assert path_loss_gain(cfg.reference_distance_m, cfg) == pytest.approx(
        10.0 ** (-47.0 / 10.0), rel=1e-15)


def test_square_law_decade():
    cfg = ChannelConfig(pathloss_exponent=2.0)
    ratio = path_loss_gain(10.0 * cfg.reference_distance_m, cfg) / path_loss_gain(
        cfg.reference_distance_m, cfg)
    assert ratio == pytest.approx(0.01, rel=1e-12)


def test_gain_monotonically_decreasing():
    cfg = ChannelConfig()
    rng = np.random.default_rng(0)
    ds = np.sort(rng.uniform(1.0, 500.0, size=50))
    gains = [path_loss_gain(float(d), cfg) for d in ds]
    assert all(a > b for a, b in zip(gains, gains[1:]))


def test_below_reference_clamped():
    cfg = ChannelConfig()
    assert path_loss_gain(0.01, cfg) == path_loss_gain(cfg.reference_distance_m, cfg)


def test_shadowing_zero_sigma():
    s = ShadowingSampler(seed=1, sigma_db=0.0, n_vehicles=5)
    assert np.all(s.period_offsets_db(3) == 0.0)


def test_shadowing_deterministic_and_symmetric():
    a = ShadowingSampler(seed=9, sigma_db=3.0, n_vehicles=6)
    b = ShadowingSampler(seed=9, sigma_db=3.0, n_vehicles=6)
    m1 = a.period_offsets_db(4)
    m2 = b.period_offsets_db(4)
    assert np.array_equal(m1, m2)
    assert np.array_equal(m1, m1.T)
    assert a.offset_db(2, 5, 4) == a.offset_db(5, 2, 4)
    # different periods resample
    assert not np.array_equal(m1, a.period_offsets_db(5))


def test_shadowing_empirical_std():
    sigma = 3.0
    s = ShadowingSampler(seed=5, sigma_db=sigma, n_vehicles=142)
    samples = []
    iu = np.triu_indices(142, 1)
    for period in range(10):
        samples.append(s.period_offsets_db(period)[iu])
    samples = np.concatenate(samples)
    assert samples.size >= 100_000
    assert abs(samples.std() - sigma) / sigma < 0.02


def test_fading_unit_mean_and_positive():
    f = FadingSampler(seed=2, n_vehicles=100, n_subchannels=10)
    g = f.slot_gains(0)
    assert g.size == 100_000
    assert 0.98 <= g.mean() <= 1.02
    assert np.all(g > 0.0)


def test_fading_deterministic_per_index():
    f1 = FadingSampler(seed=3, n_vehicles=4, n_subchannels=2)
    f2 = FadingSampler(seed=3, n_vehicles=4, n_subchannels=2)
    assert f1.gain(1, 2, 0, 17) == f2.gain(1, 2, 0, 17)
    assert np.array_equal(f1.slot_gains(5), f2.slot_gains(5))
    assert not np.array_equal(f1.slot_gains(5), f1.slot_gains(6))


class _FixedShadow:
    def __init__(self, db, n):
        self._m = np.full((n, n), db, dtype=float)

    def period_offsets_db(self, period):
        return self._m


class _FixedFading:
    def __init__(self, value, n, k):
        self._g = np.full((n, n, k), value, dtype=float)

    def slot_gains(self, slot):
        return self._g

    def gain(self, tx, rx, subchannel, slot):
        return float(self._g[tx, rx, subchannel])


def _two_vehicle_channel(shadow_db: float, d: float = 100.0):
    road = RoadConfig(length_m=1000.0, lane_count=1, wraparound=False)
    vehicles = [
        Vehicle(0, 0, 0.0, 0.0, ROLE_TX),
        Vehicle(1, 0, d, 0.0, ROLE_RX),
    ]
    cfg = ChannelConfig(pathloss_exponent=3.0, reference_loss_db=47.0)
    return PeriodChannel.build(vehicles, road, 150.0, cfg, _FixedShadow(shadow_db, 2), 0)


def test_link_gain_spot_value():
    # 100 m at exponent 3 and 47 dB reference loss, +3 dB shadow, fading 0.5:
    # 0.5 * 10 ** (-(47 + 30*log10(100) - 3) / 10)
    chan = _two_vehicle_channel(shadow_db=3.0)
    fading = _FixedFading(0.5, 2, 1)
    got = link_gain(0, 1, 0, 0, chan, fading)
    assert got == pytest.approx(1.990535852767486e-11, rel=1e-12)
    expected = 0.5 * 10.0 ** (-(47.0 + 30.0 * math.log10(100.0) - 3.0) / 10.0)
    assert got == pytest.approx(expected, rel=1e-12)


def test_link_gain_identity_factors():
    chan = _two_vehicle_channel(shadow_db=0.0)
    fading = _FixedFading(1.0, 2, 1)
    assert link_gain(0, 1, 0, 0, chan, fading) == pytest.approx(
        path_loss_gain(100.0, ChannelConfig()), rel=1e-12)


def test_link_gain_linear_in_fading():
    chan = _two_vehicle_channel(shadow_db=2.0)
    one = link_gain(0, 1, 0, 0, chan, _FixedFading(1.0, 2, 1))
    two = link_gain(0, 1, 0, 0, chan, _FixedFading(2.0, 2, 1))
    assert two == pytest.approx(2.0 * one, rel=1e-12)


def test_period_channel_symmetric_positive_and_reproducible():
    road = RoadConfig(length_m=500.0, lane_count=2, wraparound=True)
    rng = np.random.default_rng(12)
    vehicles = [
        Vehicle(i, int(rng.integers(0, 2)), float(rng.uniform(0, 500)), 0.0, ROLE_RX)
        for i in range(8)
    ]
    cfg = ChannelConfig()
    sh1 = ShadowingSampler(seed=4, sigma_db=3.0, n_vehicles=8)
    sh2 = ShadowingSampler(seed=4, sigma_db=3.0, n_vehicles=8)
    c1 = PeriodChannel.build(vehicles, road, 150.0, cfg, sh1, 2)
    c2 = PeriodChannel.build(vehicles, road, 150.0, cfg, sh2, 2)
    assert np.array_equal(c1.large_scale, c2.large_scale)
    assert np.allclose(c1.large_scale, c1.large_scale.T)
    assert np.all(c1.large_scale > 0.0)
    assert np.isfinite(c1.large_scale).all()
    assert not c1.disk.diagonal().any()


def test_disk_matches_distance():
    chan = _two_vehicle_channel(shadow_db=0.0, d=100.0)
    assert chan.disk[0, 1] and chan.disk[1, 0]
    far = _two_vehicle_channel(shadow_db=0.0, d=200.0)
    assert not far.disk[0, 1]


def test_noise_defaults_to_thermal_integration():
    cfg = ChannelConfig()
    expected_dbm = -174.0 + 10.0 * math.log10(180e3)
    assert cfg.noise_dbm == pytest.approx(expected_dbm, rel=1e-12)
    assert cfg.noise_power_w == pytest.approx(dbm_to_watts(expected_dbm), rel=1e-12)
    override = ChannelConfig(noise_power_dbm_per_subchannel=-110.0)
    assert override.noise_power_w == pytest.approx(1e-14, rel=1e-12)
