import math

import numpy as np
import pytest

from erlanga.fluid import (dl_prime_stopped, ed_constants, ed_ref, fluid_ed,
                           fluid_qed, fluid_stopped, qed_ref, stopped_ref,
                           stopped_xbar_grid, zbar_stopped)
from erlanga.simulate import ModelParams, RegimeError

ED = ModelParams(n=100, lam=2.0, mu=1.0, theta=1.0)
ED_SLOW = ModelParams(n=100, lam=1.5, mu=1.0, theta=0.5)


class TestPlainFluids:
    def test_qed_values(self):
        t = np.array([0.0, 3.0])
        a, d, l, x, v = fluid_qed(t, mu=1.0)
        assert a[0] == 0.0 and d[0] == 0.0
        assert a[1] == 3.0 and d[1] == 3.0
        assert np.all(l == 0.0) and np.all(x == 1.0) and np.all(v == 0.0)

    def test_qed_flow_balance(self):
        t = np.linspace(0, 10, 50)
        a, d, l, x, _ = fluid_qed(t, mu=0.7)
        assert np.max(np.abs(x - (1.0 + a - d - l))) < 1e-12

    def test_ed_baseline(self):
        a, d, l, x, v = fluid_ed(1.0, ED)
        consts = ed_constants(ED)
        assert consts.q == 1.0
        assert consts.w == pytest.approx(0.693147, abs=1e-6)
        assert x == pytest.approx(2.0)
        assert v == pytest.approx(math.log(2.0))

    def test_ed_flow_balance(self):
        t = np.linspace(0, 10, 50)
        for params in (ED, ED_SLOW):
            a, d, l, x, _ = fluid_ed(t, params)
            level = ed_constants(params).xbar_level
            assert np.max(np.abs(x - (level + a - d - l))) < 1e-12

    def test_ed_second_parameterization(self):
        consts = ed_constants(ED_SLOW)
        assert consts.q == pytest.approx(1.0)
        assert consts.w == pytest.approx(2.0 * math.log(1.5), abs=1e-9)
        assert consts.w == pytest.approx(0.810930, abs=1e-6)

    def test_continuity_at_criticality(self):
        for eps in (1e-3, 1e-6):
            p = ModelParams(n=10, lam=1.0 + eps, mu=1.0, theta=1.0)
            consts = ed_constants(p)
            assert consts.q < 2 * eps
            assert consts.w < 2 * eps

    def test_regime_error(self):
        with pytest.raises(RegimeError):
            fluid_ed(1.0, ModelParams(n=10, lam=0.9, mu=1.0, theta=1.0))


class TestStoppedFluid:
    def test_level_before_stop(self):
        x, _, _, _ = fluid_stopped(1.0, np.array([0.0, 0.5, 1.0]), ED)
        assert np.allclose(x, 2.0)

    def test_continuity_at_switch(self):
        tau = 1.0
        w = ed_constants(ED).w
        eps = 1e-9
        x_lo = fluid_stopped(tau, tau + w - eps, ED)[0]
        x_hi = fluid_stopped(tau, tau + w, ED)[0]
        assert x_lo == pytest.approx(1.0, abs=1e-6)
        assert x_hi == pytest.approx(1.0, abs=1e-12)

    def test_long_time_limits(self):
        tau = 1.0
        w = ed_constants(ED).w
        t = np.array([40.0, 50.0])
        x, a, d, l = fluid_stopped(tau, t, ED)
        assert np.all(x < 1e-12)
        assert np.allclose(d, ED.mu * (tau + w) + 1.0, atol=1e-12)
        assert np.allclose(l[0], l[1], atol=1e-15)  # constant after tau + w

    def test_flow_balance_exact(self):
        tau = 1.3
        t = np.linspace(0.0, 8.0, 1234)
        for params in (ED, ED_SLOW):
            level = ed_constants(params).xbar_level
            x, a, d, l = fluid_stopped(tau, t, params)
            resid = np.abs(x - (level + a - d - l))
            assert resid.max() < 1e-12

    def test_printed_coefficient_breaks_balance_when_mu_not_one(self):
        params = ModelParams(n=100, lam=1.5, mu=0.5, theta=1.0)
        level = ed_constants(params).xbar_level
        t = np.linspace(0.0, 10.0, 500)
        x, a, d, l = fluid_stopped(1.0, t, params, paper_literal_6_6=True)
        resid = np.abs(x - (level + a - d - l))
        assert resid.max() > 0.1  # the printed 1/mu coefficient cannot balance
        x, a, d, l = fluid_stopped(1.0, t, params)
        assert np.abs(x - (level + a - d - l)).max() < 1e-12

    def test_nonincreasing_after_stop_and_equals_plain_before(self):
        tau = 2.0
        t = np.linspace(0.0, 10.0, 800)
        x = fluid_stopped(tau, t, ED)[0]
        before = t <= tau
        assert np.allclose(x[before], ed_constants(ED).xbar_level)
        after = x[t >= tau]
        assert np.all(np.diff(after) <= 1e-15)


class TestZbar:
    def test_at_stop_time(self):
        w = ed_constants(ED).w
        assert zbar_stopped(1.0, 1.0, ED) == pytest.approx(1.0 + w, abs=1e-12)

    def test_time_zero_stop(self):
        w = ed_constants(ED).w
        assert zbar_stopped(0.0, 0.0, ED) == pytest.approx(w, abs=1e-12)

    def test_w_shrinks_with_theta(self):
        # fixed q, growing theta: the fluid wait vanishes
        prev = np.inf
        for theta in (1.0, 4.0, 16.0):
            lam = 1.0 + theta  # keeps q = 1
            p = ModelParams(n=10, lam=lam, mu=1.0, theta=theta)
            z = zbar_stopped(1.0, 1.0, p)
            assert z < prev
            prev = z
        assert prev < 1.2

    def test_rejects_t_beyond_tau(self):
        with pytest.raises(ValueError):
            zbar_stopped(1.0, 1.5, ED)

    def test_against_numerical_first_passage(self):
        # independent oracle: scan Dbar + Lbar on a fine grid
        tau = 1.0
        level = ed_constants(ED).xbar_level
        s = np.linspace(0.0, 4.0, 400_001)
        _, a_s, d_s, l_s = fluid_stopped(tau, s, ED)
        for t in (0.0, 0.3, 0.7, 1.0):
            threshold = level + ED.lam * min(t, tau) - 1.0
            idx = np.argmax(d_s + l_s >= threshold)
            assert d_s[idx] + l_s[idx] >= threshold
            assert abs(s[idx] - zbar_stopped(tau, t, ED)) < 1e-4


class TestThroughputDerivative:
    def test_equals_mu_at_switch_from_both_sides(self):
        tau = 1.0
        w = ed_constants(ED).w
        eps = 1e-9
        lo = dl_prime_stopped(tau, tau + w - eps, ED)
        hi = dl_prime_stopped(tau, tau + w + eps, ED)
        assert lo == pytest.approx(ED.mu, abs=1e-6)
        assert hi == pytest.approx(ED.mu, abs=1e-6)

    def test_positive_and_continuous(self):
        tau = 1.5
        s = np.linspace(0.0, 8.0, 5000)
        vals = dl_prime_stopped(tau, s, ED)
        assert np.all(vals > 0.0)
        assert np.max(np.abs(np.diff(vals))) < 0.01  # no jumps at this mesh

    def test_matches_finite_differences(self):
        # independent oracle: central differences of Dbar + Lbar
        tau = 1.0
        h = 1e-6
        for s in (0.4, 1.2, 1.9, 3.0):
            _, _, d_hi, l_hi = fluid_stopped(tau, s + h, ED)
            _, _, d_lo, l_lo = fluid_stopped(tau, s - h, ED)
            fd = (d_hi + l_hi - d_lo - l_lo) / (2 * h)
            assert fd == pytest.approx(dl_prime_stopped(tau, s, ED), rel=1e-5)

    def test_value_at_switch_scales_with_mu(self):
        # the passage-point throughput is mu, so doubling mu doubles it
        tau = 1.0
        doubled = ModelParams(n=100, lam=4.0, mu=2.0, theta=1.0)
        w1 = ed_constants(ED).w
        w2 = ed_constants(doubled).w
        assert dl_prime_stopped(tau, tau + w2, doubled) == pytest.approx(
            2.0 * dl_prime_stopped(tau, tau + w1, ED))


class TestGridAndRefs:
    def test_stopped_grid_shape_and_values(self):
        taus = np.array([0.0, 0.5, 1.0])
        t = np.arange(0.0, 3.0001, 0.01)
        g = stopped_xbar_grid(ED, taus, t)
        assert g.values.shape == (3, t.size)
        assert g.values[2, 0] == pytest.approx(2.0)

    def test_refs_are_consistent(self):
        t = np.linspace(0, 5, 11)
        r = ed_ref(ED)
        a, d, l, x, _ = fluid_ed(t, ED)
        assert np.allclose(r.a(t), a) and np.allclose(r.x(t), x)
        rq = qed_ref(1.0)
        assert np.allclose(rq.d(t), t)
        rs = stopped_ref(ED, 1.0)
        xs = fluid_stopped(1.0, t, ED)[0]
        assert np.allclose(rs.x(t), xs)
