import numpy as np
import pytest

from isacdet.config import SystemConfig
from isacdet.montecarlo.engine import derive_trial_stream
from isacdet.scenario import (
    draw_clutter,
    generate_scenario,
    path_loss_db,
    snr_like_summary,
    target_steering,
)


@pytest.mark.parametrize("d,expected", [(1.0, 61.4), (10.0, 81.4), (40.0, 93.44)])
def test_path_loss(d, expected):
    assert path_loss_db(d, SystemConfig()) == pytest.approx(expected, abs=0.01)


def test_path_loss_rejects_nonpositive_distance():
    with pytest.raises(ValueError):
        path_loss_db(0.0, SystemConfig())


def test_no_paths_gives_zero_clutter():
    s = generate_scenario(SystemConfig(n_paths=0), np.random.default_rng(0))
    assert not np.any(s.h_e)
    assert s.h_e.shape == (16, 8)


def test_deterministic():
    cfg = SystemConfig()
    a = generate_scenario(cfg, derive_trial_stream(3, "s", 0))
    b = generate_scenario(cfg, derive_trial_stream(3, "s", 0))
    assert a.h_e.tobytes() == b.h_e.tobytes()
    assert a.path_gains.tobytes() == b.path_gains.tobytes()


def test_clutter_rebuilds_from_paths():
    s = generate_scenario(SystemConfig(), np.random.default_rng(5))
    np.testing.assert_array_equal(s.rebuild_clutter(), s.h_e)
    assert len(s.clutter_paths) == 3


def test_angles_inside_configured_ranges():
    b = draw_clutter(SystemConfig(), np.random.default_rng(2), 500)
    assert b.aod_deg.min() >= 50 and b.aod_deg.max() <= 60
    assert b.aoa_deg.min() >= 50 and b.aoa_deg.max() <= 60


def test_gain_variance_without_shadowing():
    cfg = SystemConfig()
    b = draw_clutter(cfg, np.random.default_rng(7), 100_000, shadowing=False)
    target = 10 ** (-0.1 * path_loss_db(40.0, cfg))
    emp = np.mean(np.abs(b.gains) ** 2)
    assert emp == pytest.approx(target, rel=0.02)


def test_gain_variance_with_shadowing():
    # E[10^(-x/10)] for x ~ N(pl, s^2) is 10^(-pl/10) exp((s ln10 / 10)^2 / 2)
    cfg = SystemConfig()
    b = draw_clutter(cfg, np.random.default_rng(8), 10_000)
    k = np.log(10) / 10
    target = 10 ** (-0.1 * path_loss_db(40.0, cfg)) * np.exp(0.5 * (k * cfg.shadow_sigma_db) ** 2)
    # paths are i.i.d.; pooling keeps the heavy log-normal tail at about 2% spread
    assert np.mean(np.abs(b.gains) ** 2) == pytest.approx(target, rel=0.05)


def test_target_steering_lengths():
    a_t, b_t = target_steering(SystemConfig())
    assert a_t.shape == (16,) and b_t.shape == (8,)


def test_summary_scaling():
    cfg = SystemConfig(alpha_abs=1e-6)
    s = generate_scenario(cfg, np.random.default_rng(1))
    one = snr_like_summary(s, cfg)
    two = snr_like_summary(s.with_alpha(2e-6), cfg)
    assert two["target_to_noise"] == pytest.approx(4 * one["target_to_noise"])
    assert all(np.isfinite(v) for v in one.values())
    empty = generate_scenario(SystemConfig(n_paths=0), np.random.default_rng(1))
    z = snr_like_summary(empty, SystemConfig(n_paths=0))
    assert z["target_to_noise"] == 0 and z["clutter_to_noise"] == 0
