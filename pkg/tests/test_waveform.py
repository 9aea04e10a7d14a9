import math

import numpy as np
import pytest

from isacdet.config import SystemConfig
from isacdet.errors import FormatError, InvalidSplit
from isacdet.montecarlo.engine import derive_trial_stream
from isacdet.waveform import (
    H0,
    H1,
    ReceivedFrame,
    build_frame_plan,
    build_transmit_plan,
    complex_normal,
    synthesize_physical,
    synthesize_statistical,
)

from conftest import make_setup


class TestFramePlan:
    def test_prefix(self):
        fp = build_frame_plan(4, 2, "prefix")
        assert fp.pilot_positions.tolist() == [0, 1]
        assert fp.data_positions.tolist() == [2, 3]

    def test_interleaved(self):
        fp = build_frame_plan(4, 2, "interleaved")
        assert fp.pilot_positions.tolist() == [0, 2]
        assert fp.data_positions.tolist() == [1, 3]

    def test_interleaved_long_stride_falls_back(self):
        fp = build_frame_plan(10, 4, "interleaved")
        assert fp.n_pilot == 4 and fp.n_data == 6
        assert len(set(fp.pilot_positions)) == 4

    @pytest.mark.parametrize("L,L_p", [(4, 0), (4, 4), (4, 5)])
    def test_bad_split(self, L, L_p):
        with pytest.raises(InvalidSplit):
            build_frame_plan(L, L_p)

    def test_unknown_pattern(self):
        with pytest.raises(InvalidSplit):
            build_frame_plan(8, 2, "random")

    def test_permutation_orthogonality(self, rng):
        fp = build_frame_plan(12, 5)
        np.testing.assert_array_equal(fp.J_p @ fp.J_p.T, np.eye(5))
        np.testing.assert_array_equal(fp.J_d @ fp.J_p.T, np.zeros((7, 5)))
        xp = rng.standard_normal((3, 5))
        xd = rng.standard_normal((3, 7))
        x = fp.assemble(xp, xd)
        np.testing.assert_array_equal(x, xp @ fp.J_p + xd @ fp.J_d)
        back_p, back_d = fp.split(x)
        np.testing.assert_array_equal(back_p, x @ fp.J_p.T)
        np.testing.assert_array_equal(back_d, xd)


def test_transmit_plan_power_constraints():
    cfg, scen, _, _ = make_setup()
    plan = build_transmit_plan(cfg, scen)
    assert np.vdot(plan.f_p, plan.f_p).real == pytest.approx(cfg.pilot_power / cfg.L_p, rel=1e-12)
    assert np.linalg.norm(plan.f_d) ** 2 == pytest.approx(cfg.data_power / cfg.L_d, rel=1e-12)
    np.testing.assert_allclose(np.abs(plan.s_p), 1.0)
    np.testing.assert_allclose(plan.fbar_p, math.sqrt(cfg.L_p) * plan.f_p)


def test_random_phase_pilots_need_a_stream():
    cfg, scen, _, _ = make_setup(SystemConfig(pilot_symbols="random_phase"))
    with pytest.raises(ValueError):
        build_transmit_plan(cfg, scen)
    plan = build_transmit_plan(cfg, scen, np.random.default_rng(0))
    np.testing.assert_allclose(np.abs(plan.s_p), 1.0)


def test_complex_normal_moments():
    a = complex_normal(np.random.default_rng(0), (100_000,))
    b = complex_normal(np.random.default_rng(0), (100_000,))
    np.testing.assert_array_equal(a, b)
    assert abs(a.mean()) < 0.02
    assert 0.98 <= np.mean(np.abs(a) ** 2) <= 1.02
    # circular: real and imaginary parts each carry half the power
    assert np.var(a.real) == pytest.approx(0.5, rel=0.02)
    assert abs(np.mean(a * a)) < 0.02


class TestContainer:
    def test_round_trip(self, tmp_path, rng):
        y = complex_normal(rng, (4, 6))
        f = ReceivedFrame(y, H1, "physical", seed=2**63 + 5)
        f.save(tmp_path / "f.bin")
        g = ReceivedFrame.load(tmp_path / "f.bin")
        np.testing.assert_array_equal(g.y, y)
        assert (g.hypothesis, g.generation_mode, g.seed) == (H1, "physical", 2**63 + 5)

    @pytest.mark.parametrize("mutate", [
        lambda b: b[:10],
        lambda b: b"XXXXXXXX" + b[8:],
        lambda b: b[:-1],
        lambda b: b[:16] + bytes([7]) + b[17:],
    ])
    def test_malformed(self, mutate):
        blob = ReceivedFrame(np.zeros((2, 3), complex), H0, "statistical").to_bytes()
        with pytest.raises(FormatError):
            ReceivedFrame.from_bytes(mutate(blob))


class TestPhysical:
    def test_noise_free_clutter_free_is_zero(self):
        cfg, scen, plan, _ = make_setup(SystemConfig(n_paths=0, p_data_dbm=-math.inf))
        f = synthesize_physical(scen, plan, H0, np.random.default_rng(0), sigma2=0.0)
        assert not np.any(f.y)

    def test_pilot_column_with_target_only(self):
        cfg, scen, plan, _ = make_setup(SystemConfig(n_paths=0))
        alpha = 0.3 - 0.2j
        f = synthesize_physical(scen.with_alpha(alpha), plan, H1, np.random.default_rng(0), sigma2=0.0)
        lam = np.vdot(scen.b_t, plan.f_p)
        for i, l in enumerate(plan.frame.pilot_positions):
            np.testing.assert_allclose(f.y[:, l], alpha * lam * scen.a_t * plan.s_p[i], atol=1e-14)

    def test_alpha_zero_h1_equals_h0(self):
        cfg, scen, plan, _ = make_setup()
        a = synthesize_physical(scen, plan, H0, derive_trial_stream(0, "x", 0), sigma2=cfg.noise_power)
        b = synthesize_physical(scen.with_alpha(0), plan, H1, derive_trial_stream(0, "x", 0),
                                sigma2=cfg.noise_power)
        assert a.y.tobytes() == b.y.tobytes()


class TestStatistical:
    def test_zero_noise_gives_mean(self):
        cfg, scen, plan, model = make_setup()
        z = np.zeros((cfg.n_rx, cfg.L), complex)
        f = synthesize_statistical(model, scen, 0j, H0, None, z=z)
        np.testing.assert_array_equal(f.y, model.u)

    def test_alpha_zero_h1_equals_h0(self):
        cfg, scen, plan, model = make_setup()
        a = synthesize_statistical(model, scen, 0j, H0, np.random.default_rng(4))
        b = synthesize_statistical(model, scen, 0j, H1, np.random.default_rng(4))
        assert a.y.tobytes() == b.y.tobytes()

    def test_column_covariance(self):
        cfg, scen, plan, model = make_setup()
        rng = np.random.default_rng(9)
        cols = []
        for _ in range(10_000 // cfg.L + 1):
            f = synthesize_statistical(model, scen, 0j, H0, rng)
            cols.append(f.y - model.u)
        R = np.concatenate(cols, axis=1)[:, :10_000]
        emp = R @ R.conj().T / R.shape[1]
        err = np.linalg.norm(emp - model.sigma_bar) / np.linalg.norm(model.sigma_bar)
        assert err < 0.05
