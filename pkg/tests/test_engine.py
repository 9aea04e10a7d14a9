import math

import numpy as np
import pytest

from isacdet.config import SystemConfig
from isacdet.detectors import data_only_statistic, glrt_statistic, pilot_only_statistic
from isacdet.errors import ExperimentError
from isacdet.montecarlo.engine import (
    Ensemble,
    block_size_for,
    constants,
    derive_trial_stream,
    experiment_plan,
    simulate,
)
from isacdet.scenario import draw_clutter, scenario_from_clutter
from isacdet.statistics import build_null_model, data_only_model, pilot_only_model, sufficient_stats
from isacdet.waveform import H0, H1, synthesize_physical


class TestStreams:
    def test_same_triple_same_draws(self):
        a = derive_trial_stream(7, "exp", 3).standard_normal(1000)
        b = derive_trial_stream(7, "exp", 3).standard_normal(1000)
        np.testing.assert_array_equal(a, b)

    def test_neighbouring_streams_uncorrelated(self):
        # at 1e4 draws the sampling spread of rho is itself 0.01; 1e6 draws give a 10 sigma margin
        base = derive_trial_stream(7, "exp", 0).standard_normal(1_000_000)
        for idx in (1, 2, 3, 4096):
            other = derive_trial_stream(7, "exp", idx).standard_normal(1_000_000)
            assert abs(np.corrcoef(base, other)[0, 1]) < 0.01

    def test_every_coordinate_matters(self):
        draws = {derive_trial_stream(*t).integers(2**63) for t in
                 [(0, "a", 0), (1, "a", 0), (0, "b", 0), (0, "a", 1)]}
        assert len(draws) == 4


def scalar_trial(cfg, label, index, hypothesis):
    """One trial through the frame-level path, consuming the stream in engine order."""
    rng = derive_trial_stream(cfg.seed, label, index)
    scen = scenario_from_clutter(cfg, draw_clutter(cfg, rng, 1))
    plan = experiment_plan(cfg, cfg.seed)
    m = build_null_model(scen, plan, cfg)
    alpha = 0j
    if hypothesis == H1:
        snr = 10 ** (cfg.target_snr_db / 10)
        alpha = math.sqrt(snr / (m.lambda_p_bar_sq * m.beta_bar)) + 0j
    f = synthesize_physical(scen.with_alpha(alpha), plan, hypothesis, rng, sigma2=cfg.noise_power)
    st = sufficient_stats(f, m, plan)
    return (glrt_statistic(st, m).statistic,
            pilot_only_statistic(f, pilot_only_model(scen, plan, cfg), plan),
            data_only_statistic(f, data_only_model(scen, plan, cfg)))


@pytest.mark.parametrize("hyp", [H0, H1])
def test_batched_physical_matches_scalar(hyp):
    cfg = SystemConfig(target_snr_db=5.0)
    out = simulate(Ensemble(cfg, hypothesis=hyp, mode="physical", label="cmp"), 6, block_size=1)
    for i in range(6):
        tau, tp, td = scalar_trial(cfg, "cmp", i, hyp)
        assert out["tau"][i] == pytest.approx(tau, rel=1e-7, abs=1e-12)
        assert out["tau_pilot"][i] == pytest.approx(tp, rel=1e-7, abs=1e-12)
        assert out["tau_data"][i] == pytest.approx(td, rel=1e-7, abs=1e-12)


def test_thread_count_does_not_change_output():
    cfg = SystemConfig(target_snr_db=0.0)
    ens = Ensemble(cfg, hypothesis=H1, label="thr")
    a = simulate(ens, 3000, threads=1, block_size=512)
    b = simulate(ens, 3000, threads=4, block_size=512)
    for k in a:
        assert a[k].tobytes() == b[k].tobytes()


def test_prefix_of_a_longer_run():
    ens = Ensemble(SystemConfig(), label="prefix")
    a = simulate(ens, 1000, block_size=256)
    b = simulate(ens, 600, block_size=256)
    # whole blocks are shared; the partial block draws fewer samples
    np.testing.assert_array_equal(a["tau"][:512], b["tau"][:512])


def test_block_size_depends_on_dimensions_only():
    assert block_size_for(SystemConfig()) == 4096
    assert block_size_for(SystemConfig(frame_length=2048)) == 2**21 // (16 * 2048)


def test_alpha_zero_h1_is_h0():
    cfg = SystemConfig()
    a = simulate(Ensemble(cfg, hypothesis=H0, label="z"), 500)
    b = simulate(Ensemble(cfg, hypothesis=H1, label="z"), 500)
    assert a["tau"].tobytes() == b["tau"].tobytes()


def test_target_snr_is_per_scenario():
    cfg = SystemConfig(target_snr_db=3.0)
    out = simulate(Ensemble(cfg, hypothesis=H1, label="snr"), 200)
    np.testing.assert_allclose(out["pilot_snr"], 10 ** 0.3, rtol=1e-12)


def test_constants_at_defaults():
    c = constants(SystemConfig(), experiment_plan(SystemConfig()))
    assert c.P == pytest.approx(8.0)
    assert 0.05 < c.ratio < 0.1


def test_errors():
    with pytest.raises(ExperimentError):
        simulate(Ensemble(SystemConfig()), 0)
    with pytest.raises(ExperimentError):
        simulate(Ensemble(SystemConfig(), mode="quantum"), 10)
