import math

import numpy as np
import pytest

from erlanga.diffusion import (SdeConfig, ed_vhat_reference,
                               qed_vhat_reference, sde_ed, sde_qed,
                               sde_stopped, uhat, vwait_limit)
from erlanga.fluid import ed_constants
from erlanga.simulate import ModelParams, RegimeError

ED = ModelParams(n=1, lam=2.0, mu=1.0, theta=1.0)


class TestSdeConfig:
    def test_dt_cap(self):
        with pytest.raises(ValueError):
            SdeConfig(dt=0.5, horizon=2.0, reps=1)

    def test_grid(self):
        cfg = SdeConfig(dt=0.01, horizon=2.0, reps=1)
        assert cfg.n_steps == 200
        assert cfg.time_grid()[-1] == pytest.approx(2.0)


class TestQed:
    def test_noise_off_positive_decay(self):
        cfg = SdeConfig(dt=1e-3, horizon=2.0, reps=1, seed=0, x0=1.0)
        paths = sde_qed(beta=0.0, mu=1.0, theta=1.0, cfg=cfg, noise=False)
        err = np.max(np.abs(paths.X[0] - np.exp(-paths.t)))
        assert err < 2e-3

    def test_noise_off_error_halves(self):
        errs = []
        for dt in (2e-3, 1e-3):
            cfg = SdeConfig(dt=dt, horizon=2.0, reps=1, seed=0, x0=1.0)
            paths = sde_qed(0.0, 1.0, 1.0, cfg, noise=False)
            errs.append(np.max(np.abs(paths.X[0] - np.exp(-paths.t))))
        assert errs[0] / errs[1] == pytest.approx(2.0, abs=0.3)

    def test_component_balance(self):
        beta, mu = 1.0, 1.0
        cfg = SdeConfig(dt=1e-3, horizon=2.0, reps=50, seed=3, x0=0.0)
        p = sde_qed(beta, mu, theta=0.5, cfg=cfg)
        lhs = p.X + mu * beta * p.t[None, :]
        rhs = p.X[:, [0]] + p.A - p.D - p.L
        assert np.max(np.abs(lhs - rhs)) < 5 * cfg.dt

    def test_ou_reduction_stationary_variance(self):
        # beta = 0, theta = mu: OU with rate mu and diffusion variance 2mu
        cfg = SdeConfig(dt=2e-3, horizon=6.0, reps=4000, seed=4, x0=0.0)
        p = sde_qed(0.0, 1.0, 1.0, cfg)
        v = p.X[:, -1].var(ddof=1)
        se = v * math.sqrt(2.0 / (cfg.reps - 1))
        assert abs(v - 1.0) < 4 * se + 0.01


class TestEd:
    def test_mean_decay(self):
        cfg = SdeConfig(dt=1e-3, horizon=2.0, reps=3000, seed=5, x0=2.0)
        p = sde_ed(2.0, 1.0, 1.0, cfg)
        for t_chk in (1.0, 2.0):
            k = int(round(t_chk / cfg.dt))
            want = 2.0 * math.exp(-t_chk)
            se = p.X[:, k].std(ddof=1) / math.sqrt(cfg.reps)
            assert abs(p.X[:, k].mean() - want) < 3.5 * se + 2e-3

    def test_transient_variance(self):
        lam, theta = 2.0, 1.0
        cfg = SdeConfig(dt=1e-3, horizon=2.0, reps=3000, seed=6, x0=0.0)
        p = sde_ed(lam, 1.0, theta, cfg)
        for t_chk in (0.5, 2.0):
            k = int(round(t_chk / cfg.dt))
            want = (lam / theta) * (1.0 - math.exp(-2.0 * theta * t_chk))
            v = p.X[:, k].var(ddof=1)
            se = want * math.sqrt(2.0 / (cfg.reps - 1))
            assert abs(v - want) < 3.5 * se + 2e-3

    def test_component_balance_exact(self):
        cfg = SdeConfig(dt=1e-3, horizon=1.0, reps=20, seed=7, x0=0.5)
        p = sde_ed(2.0, 1.0, 1.0, cfg)
        rhs = p.X[:, [0]] + p.A - p.D - p.L
        assert np.max(np.abs(p.X - rhs)) < 1e-10

    def test_stationary_start(self):
        lam, theta = 2.0, 0.5
        cfg = SdeConfig(dt=2e-3, horizon=1.0, reps=5000, seed=8, x0="stationary")
        p = sde_ed(lam, 1.0, theta, cfg)
        want = lam / theta
        for k in (0, p.t.size - 1):
            v = p.X[:, k].var(ddof=1)
            assert abs(v - want) < want * math.sqrt(2.0 / cfg.reps) * 4

    def test_regime_guard(self):
        with pytest.raises(RegimeError):
            sde_ed(0.9, 1.0, 1.0, SdeConfig(dt=1e-3, horizon=1.0, reps=1))


class TestStopped:
    def test_noise_off_closed_form(self):
        tau = 1.0
        w = ed_constants(ED).w
        cfg = SdeConfig(dt=1e-3, horizon=3.0, reps=1, seed=0, x0=1.0)
        sp = sde_stopped(ED, [0.0, tau], cfg, noise=False)
        t = sp.t
        for j, tval in enumerate((0.0, tau)):
            early = np.minimum(t, tval + w)
            lateness = np.maximum(t - (tval + w), 0.0)
            want = np.exp(-ED.theta * early) * np.exp(-ED.mu * lateness)
            assert np.max(np.abs(sp.X[j, 0] - want)) < 5e-3

    def test_noise_off_error_halves(self):
        tau, w = 1.0, ed_constants(ED).w
        errs = []
        for dt in (2e-3, 1e-3):
            cfg = SdeConfig(dt=dt, horizon=3.0, reps=1, seed=0, x0=1.0)
            sp = sde_stopped(ED, [tau], cfg, noise=False)
            early = np.minimum(sp.t, tau + w)
            late = np.maximum(sp.t - (tau + w), 0.0)
            want = np.exp(-ED.theta * early) * np.exp(-ED.mu * late)
            errs.append(np.max(np.abs(sp.X[0, 0] - want)))
        assert errs[0] / errs[1] == pytest.approx(2.0, abs=0.4)

    def test_prefix_coupling_across_tau(self):
        cfg = SdeConfig(dt=1e-3, horizon=3.0, reps=20, seed=9, x0=0.0)
        sp = sde_stopped(ED, [1.0, 2.0], cfg)
        keep = sp.t <= 1.0
        assert np.array_equal(sp.X[0][:, keep], sp.X[1][:, keep])
        assert np.array_equal(sp.A[0][:, keep], sp.A[1][:, keep])

    def test_component_balance_exact(self):
        cfg = SdeConfig(dt=1e-3, horizon=3.0, reps=10, seed=10, x0=0.3)
        sp = sde_stopped(ED, [1.0], cfg)
        rhs = sp.X[:, :, [0]] + sp.A - sp.D - sp.L
        assert np.max(np.abs(sp.X - rhs)) < 1e-10

    def test_literal_drift_breaks_balance(self):
        # the printed drift bracket amplifies X before tau + w instead of
        # reverting it, so the components no longer reconstruct the state
        cfg = SdeConfig(dt=1e-3, horizon=3.0, reps=5, seed=11, x0=1.0)
        sp = sde_stopped(ED, [1.0], cfg, noise=False, paper_literal_6_8=True)
        rhs = sp.X[:, :, [0]] + sp.A - sp.D - sp.L
        assert np.max(np.abs(sp.X - rhs)) > 0.5

    def test_uhat_identity_at_tau(self):
        tau = 1.0
        w = ed_constants(ED).w
        cfg = SdeConfig(dt=1e-3, horizon=tau + w + 0.5, reps=200, seed=12, x0=0.0)
        sp = sde_stopped(ED, [tau], cfg)
        u = uhat(tau, tau, sp)
        k = sp.node(tau + w)
        want = sp.X[0, :, k] / ED.mu
        assert np.max(np.abs(u - want)) < 5 * cfg.dt

    def test_uhat_requires_stored_tau(self):
        cfg = SdeConfig(dt=1e-2, horizon=3.0, reps=2, seed=1, x0=0.0)
        sp = sde_stopped(ED, [1.0], cfg)
        with pytest.raises(ValueError):
            uhat(2.0, 1.0, sp)


class TestVwaitLimit:
    def test_qed_positive_part(self):
        cfg = SdeConfig(dt=1e-2, horizon=2.0, reps=40, seed=13, x0=0.0)
        p = sde_qed(1.0, 2.0, 0.5, cfg)
        t, v = vwait_limit("qed", p, mu=2.0)
        assert np.array_equal(t, p.t)
        assert np.all(v >= 0.0)
        assert np.array_equal(v, np.maximum(p.X, 0.0) / 2.0)

    def test_qed_customer_time_rescale(self):
        cfg = SdeConfig(dt=1e-2, horizon=2.0, reps=4, seed=14, x0=0.0)
        p = sde_qed(1.0, 2.0, 0.5, cfg)
        t_cust, v1 = vwait_limit("qed", p, mu=2.0, customer_time=True)
        t_virt, v2 = vwait_limit("qed", p, mu=2.0)
        assert np.allclose(t_cust, 2.0 * t_virt)
        assert np.array_equal(v1, v2)

    def test_ed_shifted_diagonal(self):
        w = ed_constants(ED).w
        taus = np.array([0.0, 0.5, 1.0])
        cfg = SdeConfig(dt=1e-3, horizon=1.0 + w + 0.1, reps=30, seed=15, x0=0.0)
        sp = sde_stopped(ED, taus, cfg)
        t, v = vwait_limit("ed", sp)
        assert np.array_equal(t, taus)
        for j in range(taus.size):
            k = sp.node(taus[j] + w)
            assert np.array_equal(v[:, j], sp.X[j, :, k] / ED.mu)

    def test_ed_horizon_guard(self):
        cfg = SdeConfig(dt=1e-2, horizon=1.5, reps=2, seed=16, x0=0.0)
        sp = sde_stopped(ED, [1.0], cfg)  # 1.0 + w > 1.5
        with pytest.raises(ValueError):
            vwait_limit("ed", sp)

    def test_ed_customer_time(self):
        w = ed_constants(ED).w
        cfg = SdeConfig(dt=1e-2, horizon=1.0 + w + 0.1, reps=2, seed=17, x0=0.0)
        sp = sde_stopped(ED, [0.0, 1.0], cfg)
        t, _ = vwait_limit("ed", sp, customer_time=True)
        assert np.allclose(t, np.array([0.0, 1.0]) * ED.lam)

    def test_ed_noise_off_closed_form(self):
        # the extracted wait limit at tau is x0 e^{-theta (tau + w)} / mu
        w = ed_constants(ED).w
        taus = np.array([0.0, 0.5, 1.0])
        cfg = SdeConfig(dt=1e-3, horizon=1.0 + w + 0.1, reps=1, seed=18, x0=1.0)
        sp = sde_stopped(ED, taus, cfg, noise=False)
        _, v = vwait_limit("ed", sp)
        want = np.exp(-ED.theta * (taus + w)) / ED.mu
        assert np.max(np.abs(v[0] - want)) < 5e-3


class TestReferenceSamplers:
    def test_ed_reference_matches_full_stepper(self):
        tau = 1.0
        w = ed_constants(ED).w
        reps, dt, seed = 100, 1e-3, 21
        fast = ed_vhat_reference(ED, tau, reps, dt, seed)
        cfg = SdeConfig(dt=dt, horizon=tau + w, reps=reps, seed=seed, x0=0.0)
        full = sde_stopped(ED, [tau], cfg)
        assert np.allclose(fast, full.X[0, :, -1] / ED.mu, atol=1e-12)

    def test_ed_reference_variance_closed_form(self):
        # integrate the OU variance through the two phases:
        # Var X(tau+w) = mu/theta - (mu^2/(lam theta)) e^{-2 theta tau}
        lam, mu, theta = ED.lam, ED.mu, ED.theta
        tau, reps = 1.5, 30_000
        vals = ed_vhat_reference(ED, tau, reps, dt=2e-3, seed=22) * mu
        want = mu / theta - (mu ** 2 / (lam * theta)) * math.exp(-2 * theta * tau)
        se = want * math.sqrt(2.0 / reps)
        assert abs(vals.var(ddof=1) - want) < 4 * se + 5e-3
        assert abs(vals.mean()) < 4 * math.sqrt(want / reps)

    def test_qed_reference_nonnegative(self):
        vals = qed_vhat_reference(1.0, 1.0, 0.5, t=2.0, reps=500, dt=1e-3, seed=23)
        assert np.all(vals >= 0.0)
        assert np.any(vals > 0.0)
