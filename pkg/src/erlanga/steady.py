"""Exact Erlang-A stationary analytics and steady-state waiting times.

The number-in-system process is a positive-recurrent birth-death chain, so
its stationary law comes from the detailed-balance product, computed in log
space and truncated where a geometric tail bound drops below tolerance.
Combining exact state draws with the exact state-conditional wait sampler
turns the steady-state wait limit into a cheap desk-scale test: no path
simulation at all.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from erlanga.rng import stream
from erlanga.simulate import ModelParams, sample_virtual_waits

TAIL_TOL = 1e-13


@dataclass(frozen=True)
class StationaryDist:
    """Stationary probabilities pi_0..pi_K of the number in system."""

    probabilities: np.ndarray
    truncation: int
    tail_mass_bound: float
    params: ModelParams

    @property
    def states(self) -> np.ndarray:
        return np.arange(self.probabilities.size)

    def mean(self) -> float:
        return float(np.dot(self.states, self.probabilities))

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probabilities)


def stationary_dist(params: ModelParams, tail_tol: float = TAIL_TOL) -> StationaryDist:
    """Solve the birth-death balance pi_k * lam = pi_{k+1} * rate(k+1).

    Log-space products keep n up to 10^3 comfortably inside float range.
    The truncation K is chosen so that the geometric bound on the untracked
    tail mass is below tail_tol.
    """
    lam = params.lam
    log_lam = np.log(lam)

    log_terms = [0.0]  # log unnormalized pi_k, pi_0 term = 1
    k = 0
    while True:
        k += 1
        rate_k = float(params.death_rate(k))
        log_terms.append(log_terms[-1] + log_lam - np.log(rate_k))
        if k > params.n:
            r = lam / float(params.death_rate(k + 1))
            if r < 1.0:
                # remaining tail <= term_k * r / (1 - r), vs. the mass so far
                logs = np.array(log_terms)
                m = logs.max()
                total = np.exp(logs - m).sum()
                tail = np.exp(log_terms[-1] - m) * r / (1.0 - r)
                if tail / total < tail_tol:
                    break
        if k > 100 * params.n + 10_000:
            raise RuntimeError("stationary solve failed to truncate; check rates")

    logs = np.array(log_terms)
    m = logs.max()
    unnorm = np.exp(logs - m)
    probs = unnorm / unnorm.sum()
    return StationaryDist(
        probabilities=probs,
        truncation=k,
        tail_mass_bound=tail_tol,
        params=params,
    )


def detailed_balance_residual(dist: StationaryDist) -> float:
    """Max relative residual of lam*pi_k = rate(k+1)*pi_{k+1}.

    States whose probability underflows the normal float range (far below
    the distribution's peak) are skipped: balance is vacuous there.
    """
    p = dist.probabilities
    k = np.arange(1, p.size)
    up = dist.params.lam * p[:-1]
    down = dist.params.death_rate(k) * p[1:]
    scale = np.maximum(up, down)
    ok = scale > np.finfo(float).tiny * 1e4
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(ok, np.abs(up - down) / np.where(ok, scale, 1.0), 0.0)
    return float(rel.max())


def sample_states(dist: StationaryDist, size: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws of X(infinity)."""
    cdf = dist.cdf()
    u = rng.random(size)
    return np.searchsorted(cdf, u, side="right").astype(np.int64)


def stationary_vwait_sample(params: ModelParams, rng: np.random.Generator,
                            size: Optional[int] = None,
                            dist: Optional[StationaryDist] = None):
    """Exact draws of the stationary potential wait V(infinity).

    Draw X(infinity) from the stationary law, then the state-conditional
    wait: no path simulation.  Scalar when size is None, else an array.
    """
    if dist is None:
        dist = stationary_dist(params)
    m = 1 if size is None else int(size)
    states = sample_states(dist, m, rng)
    waits = sample_virtual_waits(params, states, rng)
    if size is None:
        return float(waits[0])
    return waits


def exact_vwait_mean(params: ModelParams,
                     dist: Optional[StationaryDist] = None) -> float:
    """E[V(infinity)] summed exactly over the stationary law."""
    if dist is None:
        dist = stationary_dist(params)
    p = dist.probabilities
    k_max = p.size - 1
    q_max = max(k_max - params.n, 0)
    if q_max == 0:
        return 0.0
    stage_means = 1.0 / (params.n * params.mu
                         + params.theta * np.arange(1, q_max + 1))
    cum = np.concatenate(([0.0], np.cumsum(stage_means)))  # cum[q] = E[V | Q=q]
    q_of_k = np.maximum(np.arange(p.size) - params.n, 0)
    return float(np.dot(p, cum[q_of_k]))


def c_and_d(t: float, mu: float, theta: float) -> tuple[float, float]:
    """Asymptotic mean c(t) and variance d(t) of the scaled stage sums.

    c(t) = (1/theta) * ln(1 + theta*t/mu), d(t) = t / (mu * (mu + theta*t)).
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    c = np.log1p(theta * t / mu) / theta
    d = t / (mu * (mu + theta * t)) if t > 0 else 0.0
    return float(c), float(d)


def partial_sum_clt_check(n: int, mu: float, theta: float, t_grid,
                          reps: int, seed: int = 0) -> dict:
    """Monte Carlo check of the stage-sum functional CLT.

    Samples sqrt(n) * (sum_{i=0}^{floor(n t)} E_i - c(t)) at the grid times,
    where E_i ~ Exp(n*mu + i*theta) independent (the i = 0 stage carries rate
    n*mu).  Reports empirical means (should be ~0), variances vs d(t), and
    the independent-increment covariance Cov(s, t) vs d(s ^ t).
    """
    if n > 10_000:
        raise ValueError("n above the supported desk scale (10^4)")
    t_arr = np.asarray(t_grid, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("t_grid must be >= 0")
    counts = np.floor(n * t_arr).astype(int)  # sum runs over i = 0..counts
    i_max = int(counts.max())
    rates = n * mu + theta * np.arange(0, i_max + 1)
    gen = stream(seed, 0, "clt")

    sums = np.zeros((reps, t_arr.size))
    chunk = max(1, int(4e6 // (i_max + 1)))
    for lo in range(0, reps, chunk):
        m = min(chunk, reps - lo)
        e = gen.standard_exponential((m, i_max + 1)) / rates
        csum = np.cumsum(e, axis=1)
        sums[lo:lo + m] = csum[:, counts]

    root_n = np.sqrt(n)
    rows = []
    scaled = np.empty_like(sums)
    for j, t in enumerate(t_arr):
        c, d = c_and_d(t, mu, theta)
        z = root_n * (sums[:, j] - c)
        scaled[:, j] = z
        rows.append({
            "t": float(t),
            "mean": float(z.mean()),
            "mean_se": float(z.std(ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0,
            "var": float(z.var(ddof=1)) if reps > 1 else 0.0,
            "d": d,
        })
    cov = {}
    for j in range(t_arr.size):
        for k in range(j + 1, t_arr.size):
            _, d_min = c_and_d(min(t_arr[j], t_arr[k]), mu, theta)
            cov[(float(t_arr[j]), float(t_arr[k]))] = {
                "cov": float(np.cov(scaled[:, j], scaled[:, k], ddof=1)[0, 1]),
                "d_min": d_min,
            }
    return {"rows": rows, "cov": cov, "n": n, "reps": reps}
