import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hover_es.dynamics import hover_rate, plant_rhs
from hover_es.esc import (EscConfig, LiftModel, Objective, TauhatLaw, affine_decomposition,
                          closed_loop_rhs, initial_state, lift_value, modulation, objective_value,
                          resolve)
from hover_es.species import load_species


@pytest.fixture
def hawk_cfg(hawkmoth):
    return EscConfig.for_species(hawkmoth, "altitude")


class TestConfig:
    def test_species_defaults(self, hawkmoth, hawk_cfg):
        assert hawk_cfg.a == 2.56e-5 and hawk_cfg.K == -6900
        assert hawk_cfg.Omega == pytest.approx(2 * math.pi * 26.3)
        assert hawk_cfg.tauhat_law is TauhatLaw.TORQUE
        assert hawk_cfg.n_smooth == 50

    def test_string_enums(self):
        cfg = EscConfig(1e-5, -1, 10, "lift_balance", "body_plus_wing", tauhat_law="inertia_scaled")
        assert cfg.objective is Objective.LIFT_BALANCE
        assert cfg.lift_model is LiftModel.BODY_PLUS_WING
        assert cfg.tauhat_law is TauhatLaw.INERTIA_SCALED

    @pytest.mark.parametrize("kw", [dict(a=-1.0), dict(Omega=0.0), dict(K=math.nan), dict(n_smooth=0),
                                    dict(n_smooth=2.5), dict(objective="speed")])
    def test_rejects(self, kw):
        base = dict(a=1e-5, K=-1.0, Omega=10.0)
        base.update(kw)
        with pytest.raises(ValueError):
            EscConfig(**base)

    def test_any_gain_sign(self):
        assert EscConfig(1e-5, 3.0, 10.0).K == 3.0

    def test_resolve_overrides(self, hawkmoth, hawk_cfg):
        assert resolve(hawkmoth, "altitude", K=0.0).K == 0.0
        assert resolve(hawkmoth, "lift_balance", cfg=hawk_cfg) is hawk_cfg


class TestObjective:
    def test_altitude(self, hawkmoth, hawk_cfg):
        c = hawkmoth.coefficients
        assert objective_value((0, 0, 0, 0, 0), hawk_cfg, c) == 0
        assert objective_value((0.1, 0, 0, 0, 0), hawk_cfg, c) == pytest.approx(0.01)

    def test_lift_balance_zero_at_hover(self, all_species):
        for sp in all_species.values():
            c = sp.coefficients
            cfg = EscConfig.for_species(sp, "lift_balance")
            x = (0, 0, 0, hover_rate(c), 0)
            assert lift_value(x, cfg, c) == pytest.approx(c.m_SI * c.g, rel=1e-12)
            assert objective_value(x, cfg, c) < 1e-24

    def test_no_flapping_no_lift(self, hawkmoth, hawk_cfg):
        assert lift_value((0, 0, 1.0, 0, 0), hawk_cfg, hawkmoth.coefficients) == 0

    @given(st.floats(-500, 500))
    def test_body_term_vanishes_at_zero_speed(self, pd):
        sp = load_species("hoverfly")
        wing = EscConfig.for_species(sp, "lift_balance")
        body = EscConfig.for_species(sp, "lift_balance", lift_model="body_plus_wing")
        x = (0, 0, 0.0, pd, 0)
        assert lift_value(x, body, sp.coefficients) == lift_value(x, wing, sp.coefficients)

    def test_body_lift_is_force(self, hawkmoth):
        c = hawkmoth.coefficients
        cfg = EscConfig.for_species(hawkmoth, "lift_balance", lift_model="body_plus_wing")
        x = (0, 0, 0.3, -50.0, 0)
        assert lift_value(x, cfg, c) == pytest.approx(c.m_SI * (c.k_d1 * 50 * 0.3 + c.k_L * 2500))


class TestModulation:
    def test_values(self, hawk_cfg):
        assert modulation(0.0, hawk_cfg) == pytest.approx(hawk_cfg.a * hawk_cfg.Omega)
        assert abs(modulation(math.pi / (2 * hawk_cfg.Omega), hawk_cfg)) < 1e-18

    def test_hawkmoth_peak(self, hawk_cfg):
        assert hawk_cfg.Omega == pytest.approx(165.25, abs=0.01)
        assert modulation(0.0, hawk_cfg) == pytest.approx(4.23e-3, rel=1e-3)


class TestClosedLoop:
    def test_zero_objective_freezes_estimate(self, hawkmoth, hawk_cfg):
        d = closed_loop_rhs(0.3, (0, 0, 0.2, 40, 1e-5), hawk_cfg, hawkmoth.coefficients)
        assert d[4] == 0

    def test_open_loop_reduction(self, hawkmoth, hawk_cfg):
        from dataclasses import replace
        c = hawkmoth.coefficients
        cfg = replace(hawk_cfg, K=0.0)
        x = (0.2, 0.1, 0.3, 20.0, 2e-5)
        t = 0.01
        d = closed_loop_rhs(t, x, cfg, c)
        assert d[4] == 0
        np.testing.assert_allclose(d[:4], plant_rhs(x, x[4] + modulation(t, cfg), c), rtol=1e-14)

    def test_hawkmoth_rate_inertia_scaled(self, hawkmoth):
        cfg = EscConfig.for_species(hawkmoth, "altitude", tauhat_law="inertia_scaled")
        d = closed_loop_rhs(0.0, (0.1, 0, 0, 0, 0), cfg, hawkmoth.coefficients)
        expected = -6900 * 0.01 * (2.56e-5 / 1.3179e-7) * cfg.Omega
        assert d[4] == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(-6900 * 0.01 * (2.56e-5 / 1.3179e-7) * 165.25, rel=1e-4)

    def test_hawkmoth_rate_torque(self, hawkmoth, hawk_cfg):
        d = closed_loop_rhs(0.0, (0.1, 0, 0, 0, 0), hawk_cfg, hawkmoth.coefficients)
        assert d[4] == pytest.approx(-6900 * 0.01 * 2.56e-5 * hawk_cfg.Omega, rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.sampled_from(["hawkmoth", "bumblebee", "hummingbird"]),
           st.sampled_from(list(Objective)), st.sampled_from(list(LiftModel)),
           st.sampled_from(list(TauhatLaw)), st.booleans(), st.integers(0, 2**32 - 1))
    def test_decomposition_consistency(self, name, obj, lift, law, smoothed, seed):
        sp = load_species(name)
        c = sp.coefficients
        cfg = EscConfig.for_species(sp, obj, lift_model=lift, tauhat_law=law)
        rng = np.random.default_rng(seed)
        x = (rng.normal(0, 0.3), rng.normal(0, 1), rng.normal(0, 0.5), rng.normal(0, 100),
             rng.normal(0, 1e-5))
        drift, g = affine_decomposition(x, cfg, c, smoothed)
        assert g[3] == 1 / c.I_F
        for t in rng.uniform(0, 1, 100):
            rhs = closed_loop_rhs(t, x, cfg, c, smoothed)
            scale = np.maximum(np.abs(rhs), 1.0)
            assert np.max(np.abs(drift + g * modulation(t, cfg) - rhs) / scale) < 1e-12

    def test_direction_zero_at_zero_objective(self, hawkmoth, hawk_cfg):
        _, g = affine_decomposition((0, 0, 1, 1, 1), hawk_cfg, hawkmoth.coefficients)
        assert g[4] == 0

    @given(st.floats(1e-7, 1e-4), st.floats(0, 1))
    def test_affine_in_amplitude(self, a, t):
        sp = load_species("dragonfly")
        c = sp.coefficients
        from dataclasses import replace
        cfg = EscConfig.for_species(sp, "altitude", a=a)
        cfg2 = replace(cfg, a=2 * a)
        cfg0 = replace(cfg, a=0.0)
        x = (0.05, 0.0, 0.1, 30.0, 1e-6)
        d0, d1, d2 = (closed_loop_rhs(t, x, k, c) for k in (cfg0, cfg, cfg2))
        np.testing.assert_allclose(d2[3:] - d0[3:], 2 * (d1[3:] - d0[3:]), rtol=1e-9, atol=1e-9 * np.abs(d0[3]))

    @pytest.mark.parametrize("law", list(TauhatLaw))
    def test_frozen_objective_periodic(self, bumblebee, law):
        cfg = EscConfig.for_species(bumblebee, "altitude", tauhat_law=law)
        c = bumblebee.coefficients
        J = 0.04
        rate = lambda t: J * cfg.K * cfg.tauhat_gain(c) * modulation(t, cfg)
        T = cfg.period
        h = T / 200
        tau = 3e-6
        for i in range(200):
            t = i * h
            k1, k2, k4 = rate(t), rate(t + h / 2), rate(t + h)
            tau += h / 6 * (k1 + 4 * k2 + k4)
        peak = abs(J * cfg.K * cfg.tauhat_gain(c) * cfg.a)
        assert abs(tau - 3e-6) < 1e-10 * max(peak, 1e-300) + 1e-18

    def test_initial_state(self):
        s = initial_state(w0=0.2)
        assert s == (0, 0, 0.2, 0, 0) and s.plant.w == 0.2
