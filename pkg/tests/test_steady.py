import math

import numpy as np
import pytest

from erlanga.rng import stream
from erlanga.simulate import ModelParams, SimConfig, simulate, virtual_wait_mean
from erlanga.steady import (c_and_d, detailed_balance_residual,
                            exact_vwait_mean, partial_sum_clt_check,
                            sample_states, stationary_dist,
                            stationary_vwait_sample)


class TestStationaryDist:
    def test_poisson_one_exact(self):
        # brute-force oracle: pi_k proportional to 1/k!
        params = ModelParams(n=1, lam=1.0, mu=1.0, theta=1.0)
        dist = stationary_dist(params)
        terms = np.array([1.0 / math.factorial(k)
                          for k in range(dist.probabilities.size)])
        ref = terms / terms.sum()
        assert np.max(np.abs(dist.probabilities - ref)) < 1e-12
        assert abs(dist.probabilities[0] - math.exp(-1)) < 1e-12

    def test_probabilities_normalized(self):
        dist = stationary_dist(ModelParams(n=7, lam=10.0, mu=1.0, theta=0.4))
        assert 1.0 - 1e-12 <= dist.probabilities.sum() <= 1.0 + 1e-12
        assert np.all(dist.probabilities >= 0)

    def test_detailed_balance_residual_large_n(self):
        for n in (100, 1000):
            params = ModelParams(n=n, lam=2.0 * n, mu=1.0, theta=1.0)
            assert detailed_balance_residual(stationary_dist(params)) < 1e-12

    def test_heavy_abandonment_kills_queue(self):
        # mass above n vanishes as theta grows
        def tail_ratio(theta):
            params = ModelParams(n=2, lam=2.0, mu=1.0, theta=theta)
            p = stationary_dist(params).probabilities
            return p[3] / p[2]

        assert tail_ratio(1000.0) < tail_ratio(10.0) < tail_ratio(1.0)
        assert tail_ratio(1000.0) < 1e-2

    def test_matches_long_horizon_occupancy(self):
        params = ModelParams(n=5, lam=6.0, mu=1.0, theta=0.8)
        dist = stationary_dist(params)
        b = simulate(params, SimConfig(horizon=4000.0, init=5, seed=20))
        t = np.append(b.event_times, b.horizon)
        holds = np.diff(t)
        occ = np.zeros(dist.probabilities.size)
        for k in range(occ.size):
            occ[k] = holds[b.X.values == k].sum()
        occ /= b.horizon
        tv = 0.5 * np.sum(np.abs(occ - dist.probabilities))
        assert tv < 0.02

    def test_sample_states_law(self):
        params = ModelParams(n=3, lam=4.0, mu=1.0, theta=1.0)
        dist = stationary_dist(params)
        draws = sample_states(dist, 200_000, stream(3, 0, "steady"))
        emp = np.bincount(draws, minlength=dist.probabilities.size) / draws.size
        assert np.max(np.abs(emp - dist.probabilities)) < 0.005


class TestStationaryWait:
    def test_qed_like_params_mostly_zero(self):
        params = ModelParams(n=20, lam=15.0, mu=1.0, theta=1.0)
        waits = stationary_vwait_sample(params, stream(5, 0, "steady"), size=2000)
        assert np.mean(waits == 0.0) > 0.5

    def test_exact_mean_matches_monte_carlo(self):
        params = ModelParams(n=25, lam=50.0, mu=1.0, theta=1.0)
        dist = stationary_dist(params)
        want = exact_vwait_mean(params, dist)
        waits = stationary_vwait_sample(params, stream(6, 0, "steady"),
                                        size=40_000, dist=dist)
        se = waits.std(ddof=1) / math.sqrt(waits.size)
        assert abs(waits.mean() - want) < 4 * se

    def test_ed_mean_approaches_w(self):
        w = math.log(2.0)
        gaps = []
        for n in (25, 100, 400):
            params = ModelParams(n=n, lam=2.0 * n, mu=1.0, theta=1.0)
            waits = stationary_vwait_sample(params, stream(7, 0, "steady"),
                                            size=30_000)
            gaps.append(abs(waits.mean() - w))
        assert gaps[2] < gaps[0]

    def test_scaled_moments_approach_normal_limit(self):
        # sqrt(n)(V - w) -> N(0, 1/(theta*mu)); PAPER-reported variance 1
        w = math.log(2.0)
        for n, mean_tol, var_tol in ((100, 0.08, 0.12), (400, 0.05, 0.12)):
            params = ModelParams(n=n, lam=2.0 * n, mu=1.0, theta=1.0)
            waits = stationary_vwait_sample(params, stream(8, 0, "steady"),
                                            size=50_000)
            z = math.sqrt(n) * (waits - w)
            assert abs(z.mean()) < mean_tol
            assert abs(z.var(ddof=1) - 1.0) < var_tol


class TestCAndD:
    def test_at_zero(self):
        assert c_and_d(0.0, 1.0, 1.0) == (0.0, 0.0)

    def test_baseline_values(self):
        c, d = c_and_d(1.0, 1.0, 1.0)
        assert c == pytest.approx(math.log(2.0), abs=1e-15)
        assert d == pytest.approx(0.5, abs=1e-15)

    def test_variance_identity(self):
        # d(q) + Var(X_inf)/lam^2 = 1/(theta*mu) with Var(X_inf) = lam/theta
        lam, mu, theta = 2.0, 1.0, 1.0
        q = (lam - mu) / theta
        _, d = c_and_d(q, mu, theta)
        assert d + (lam / theta) / lam ** 2 == 1.0 / (theta * mu)

    def test_identity_other_params(self):
        lam, mu, theta = 1.5, 1.0, 0.5
        q = (lam - mu) / theta
        _, d = c_and_d(q, mu, theta)
        assert d + (lam / theta) / lam ** 2 == pytest.approx(1.0 / (theta * mu),
                                                             rel=1e-14)

    def test_stage_sum_mean_matches_c(self):
        # c(t) is the large-n limit of the stage-sum mean at queue depth nt
        params = ModelParams(n=500, lam=1000.0, mu=1.0, theta=1.0)
        c, _ = c_and_d(1.0, 1.0, 1.0)
        assert abs(virtual_wait_mean(params, 1000) - c) < 2e-3


class TestPartialSumClt:
    def test_degenerate_at_zero(self):
        # only the floor(n*0) = 0 stage remains: mean 1/sqrt(n), variance 1/n
        n = 1000
        out = partial_sum_clt_check(n, 1.0, 1.0, [0.0], reps=500, seed=1)
        row = out["rows"][0]
        assert abs(row["mean"]) < 3.0 / math.sqrt(n)
        assert row["var"] < 10.0 / n

    def test_variance_matches_d(self):
        out = partial_sum_clt_check(2000, 1.0, 1.0, [0.5, 1.0], reps=3000, seed=2)
        for row in out["rows"]:
            se_var = row["d"] * math.sqrt(2.0 / (out["reps"] - 1))
            assert abs(row["var"] - row["d"]) < 3 * se_var
            assert abs(row["mean"]) < 3 * row["mean_se"] + 0.03

    def test_covariance_is_d_of_min(self):
        out = partial_sum_clt_check(2000, 1.0, 1.0, [0.5, 1.0], reps=4000, seed=3)
        cov = out["cov"][(0.5, 1.0)]
        assert cov["d_min"] == pytest.approx(1.0 / 3.0, abs=1e-12)
        assert abs(cov["cov"] - cov["d_min"]) < 0.03

    def test_rejects_oversized_n(self):
        with pytest.raises(ValueError):
            partial_sum_clt_check(20_000, 1.0, 1.0, [1.0], reps=10)
