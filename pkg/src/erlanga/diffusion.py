"""Euler-Maruyama samplers of the limit diffusions.

Covers the critically-loaded (QED) piecewise-OU limit, the overloaded (ED)
OU limit, and the stopped-arrival two-parameter limit, each with the
component decomposition (arrival, departure, abandonment noise) emitted so
path-wise flow-balance identities hold to rounding by construction.
Time-changed Brownian terms are simulated as Gaussian increments with the
locally correct variance (distributionally exact for deterministic time
changes); noise-off switches zero the increments for deterministic oracle
tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from erlanga.fluid import ed_constants, fluid_stopped, zbar_stopped, dl_prime_stopped
from erlanga.rng import stream
from erlanga.simulate import ModelParams, RegimeError


class StepSizeError(RuntimeError):
    """Stepping produced non-finite state; reduce dt."""


@dataclass(frozen=True)
class SdeConfig:
    """Stepping controls.  x0 is a number or "stationary" where a stationary
    initial law exists (ED)."""

    dt: float
    horizon: float
    reps: int
    seed: int = 0
    x0: Union[float, str] = 0.0

    def __post_init__(self):
        if self.dt <= 0 or self.dt > self.horizon / 100:
            raise ValueError("need 0 < dt <= horizon/100")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def time_grid(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class SdePaths:
    """Sampled component paths on the dt grid; arrays are (reps, len(t))."""

    t: np.ndarray
    X: np.ndarray
    A: np.ndarray
    D: np.ndarray
    L: np.ndarray

    def at(self, time: float) -> dict:
        k = int(np.searchsorted(self.t, time + 1e-12, side="right") - 1)
        return {c: getattr(self, c)[:, k] for c in "XADL"}


def _check_finite(x: np.ndarray, where: str):
    if not np.all(np.isfinite(x)):
        raise StepSizeError(f"non-finite state during {where}; reduce dt")


def sde_qed(beta: float, mu: float, theta: float, cfg: SdeConfig,
            noise: bool = True) -> SdePaths:
    """Critically loaded limit: drift -mu*beta - mu*(X ^ 0) - theta*(X v 0),
    arrival and departure noise each of variance mu.

    Component balance X + mu*beta*t = X(0) + A - D - L holds path-wise to
    rounding because the components reuse the stepping increments.
    """
    gen = stream(cfg.seed, 0, "sde")
    m = cfg.n_steps
    reps = cfg.reps
    dt = cfg.dt
    sq = np.sqrt(mu * dt) if noise else 0.0

    X = np.empty((reps, m + 1))
    A = np.zeros((reps, m + 1))
    D = np.zeros((reps, m + 1))
    L = np.zeros((reps, m + 1))
    X[:, 0] = float(cfg.x0)

    for k in range(m):
        xk = X[:, k]
        z1 = gen.standard_normal(reps) if noise else 0.0
        z2 = gen.standard_normal(reps) if noise else 0.0
        d_serv = mu * np.minimum(xk, 0.0) * dt
        d_aban = theta * np.maximum(xk, 0.0) * dt
        dA = sq * z1
        dD = sq * z2 + d_serv
        dL = d_aban
        X[:, k + 1] = xk - mu * beta * dt + dA - dD - dL
        A[:, k + 1] = A[:, k] + dA
        D[:, k + 1] = D[:, k] + dD
        L[:, k + 1] = L[:, k] + dL
    _check_finite(X, "QED stepping")
    return SdePaths(cfg.time_grid(), X, A, D, L)


def sde_ed(lam: float, mu: float, theta: float, cfg: SdeConfig,
           noise: bool = True) -> SdePaths:
    """Overloaded limit: OU with reversion theta and diffusion variance
    2*lam, decomposed into arrival (lam), departure (mu) and abandonment
    (lam - mu plus the drift integral) components."""
    if lam <= mu:
        raise RegimeError("ED regime needs lam > mu")
    gen = stream(cfg.seed, 0, "sde")
    m = cfg.n_steps
    reps = cfg.reps
    dt = cfg.dt
    s1 = np.sqrt(lam * dt) if noise else 0.0
    s2 = np.sqrt(mu * dt) if noise else 0.0
    s3 = np.sqrt((lam - mu) * dt) if noise else 0.0

    X = np.empty((reps, m + 1))
    A = np.zeros((reps, m + 1))
    D = np.zeros((reps, m + 1))
    L = np.zeros((reps, m + 1))
    if isinstance(cfg.x0, str):
        if cfg.x0 != "stationary":
            raise ValueError("x0 must be a number or 'stationary'")
        X[:, 0] = gen.normal(0.0, np.sqrt(lam / theta), reps)
    else:
        X[:, 0] = float(cfg.x0)

    for k in range(m):
        xk = X[:, k]
        z1 = gen.standard_normal(reps) if noise else 0.0
        z2 = gen.standard_normal(reps) if noise else 0.0
        z3 = gen.standard_normal(reps) if noise else 0.0
        dA = s1 * z1
        dD = s2 * z2
        dL = s3 * z3 + theta * xk * dt
        X[:, k + 1] = xk + dA - dD - dL
        A[:, k + 1] = A[:, k] + dA
        D[:, k + 1] = D[:, k] + dD
        L[:, k + 1] = L[:, k] + dL
    _check_finite(X, "ED stepping")
    return SdePaths(cfg.time_grid(), X, A, D, L)


@dataclass(frozen=True)
class StoppedPaths:
    """Two-parameter stopped-limit samples.

    Arrays are (n_tau, reps, len(t)).  Every tau row of one replication is
    driven by the same three increment streams (the coupling the
    two-parameter limit requires), so rows agree exactly while their stop
    times have not kicked in.
    """

    tau_grid: np.ndarray
    t: np.ndarray
    X: np.ndarray
    A: np.ndarray
    D: np.ndarray
    L: np.ndarray
    params: ModelParams

    def node(self, time: float) -> int:
        """Index of the largest grid node <= time."""
        return int(np.searchsorted(self.t, time + 1e-12, side="right") - 1)


def _stopped_noise_scales(params: ModelParams, taus: np.ndarray,
                          t_nodes: np.ndarray, dt: float, noise: bool):
    """Per-(tau, step) increment scales from the fluid time-change
    integrands, plus the late-phase indicator."""
    consts = ed_constants(params)
    lam, mu, theta = params.lam, params.mu, params.theta
    t_left = t_nodes[:-1][None, :]
    xbar = np.vstack([fluid_stopped(tau, t_nodes[:-1], params)[0] for tau in taus])
    c1 = np.where(t_left < taus[:, None], np.sqrt(lam * dt), 0.0)
    c2 = np.sqrt(mu * np.minimum(xbar, 1.0) * dt)
    c3 = np.sqrt(theta * np.maximum(xbar - 1.0, 0.0) * dt)
    late = t_left >= (taus[:, None] + consts.w)
    if not noise:
        c1 = np.zeros_like(c1)
        c2 = np.zeros_like(c2)
        c3 = np.zeros_like(c3)
    return c1, c2, c3, late


def sde_stopped(params: ModelParams, tau_grid: Sequence[float], cfg: SdeConfig,
                noise: bool = True, paper_literal_6_8: bool = False) -> StoppedPaths:
    """Stopped-arrival limit process for each tau in tau_grid.

    Drift is -mu*X after tau + w and -theta*X before (both phases mean
    revert); the printed variant with an anti-dissipative +theta*X early
    phase is available behind paper_literal_6_8 for comparison, but it
    breaks the component balance.  Arrival noise (variance lam) runs until
    tau; departure and abandonment noise carry the fluid time-change
    integrands (Xbar ^ 1) and (Xbar - 1)+.
    """
    mu, theta = params.mu, params.theta
    taus = np.asarray(tau_grid, dtype=float)
    if taus.ndim != 1 or taus.size == 0:
        raise ValueError("tau_grid must be a nonempty 1-d sequence")
    gen = stream(cfg.seed, 0, "sde")
    m = cfg.n_steps
    reps = cfg.reps
    dt = cfg.dt
    t_nodes = cfg.time_grid()
    n_tau = taus.size
    c1, c2, c3, late = _stopped_noise_scales(params, taus, t_nodes, dt, noise)

    X = np.empty((n_tau, reps, m + 1))
    A = np.zeros((n_tau, reps, m + 1))
    D = np.zeros((n_tau, reps, m + 1))
    L = np.zeros((n_tau, reps, m + 1))
    X[:, :, 0] = float(cfg.x0)

    for k in range(m):
        xk = X[:, :, k]
        z1 = gen.standard_normal(reps)[None, :] if noise else 0.0
        z2 = gen.standard_normal(reps)[None, :] if noise else 0.0
        z3 = gen.standard_normal(reps)[None, :] if noise else 0.0
        late_k = late[:, k][:, None]
        serv_drift = mu * np.where(late_k, xk, 0.0) * dt
        aban_drift = theta * np.where(late_k, 0.0, xk) * dt
        dA = c1[:, k][:, None] * z1
        dD = c2[:, k][:, None] * z2 + serv_drift
        dL = c3[:, k][:, None] * z3 + aban_drift
        if paper_literal_6_8:
            # printed drift bracket: the early phase amplifies the state,
            # contradicting the abandonment component and breaking balance
            dX = (-serv_drift + aban_drift + dA
                  - c2[:, k][:, None] * z2 - c3[:, k][:, None] * z3)
        else:
            dX = dA - dD - dL
        X[:, :, k + 1] = xk + dX
        A[:, :, k + 1] = A[:, :, k] + dA
        D[:, :, k + 1] = D[:, :, k] + dD
        L[:, :, k + 1] = L[:, :, k] + dL
    _check_finite(X, "stopped stepping")
    return StoppedPaths(taus, t_nodes, X, A, D, L, params)


def uhat(tau: float, t: float, stopped: StoppedPaths) -> np.ndarray:
    """Centered first-passage limit: per-replication value of

        (X(0) + A(t) - D(Zbar(t)) - L(Zbar(t))) / (Dbar + Lbar)'(Zbar(t))

    for the given tau row, with Zbar and the denominator taken from the
    fluid closed forms and component reads snapped to the grid node below.
    """
    if t > tau:
        raise ValueError("uhat needs t <= tau")
    j = int(np.flatnonzero(np.isclose(stopped.tau_grid, tau))[0]) if np.any(
        np.isclose(stopped.tau_grid, tau)) else -1
    if j < 0:
        raise ValueError(f"tau={tau} not on the stored tau grid")
    params = stopped.params
    z = float(zbar_stopped(tau, t, params))
    den = float(dl_prime_stopped(tau, z, params))
    if den <= 0:
        raise RegimeError("degenerate fluid throughput at the passage point")
    k_t = stopped.node(t)
    k_z = stopped.node(z)
    num = (stopped.X[j, :, 0] + stopped.A[j, :, k_t]
           - stopped.D[j, :, k_z] - stopped.L[j, :, k_z])
    return num / den


def vwait_limit(regime: str, samples, params: Optional[ModelParams] = None,
                mu: Optional[float] = None, customer_time: bool = False):
    """Scaled waiting-time limit samples.

    QED: (t, X+ / mu) pointwise from SdePaths.  ED: shifted-diagonal
    extraction X^tau(tau + w) / mu from StoppedPaths, returned on the tau
    grid.  customer_time rescales the argument to customer index units
    (t * mu for QED, t * lam for ED).
    """
    if regime == "qed":
        if not isinstance(samples, SdePaths):
            raise TypeError("qed limit needs SdePaths")
        if mu is None:
            raise ValueError("qed limit needs mu")
        times = samples.t * (mu if customer_time else 1.0)
        return times, np.maximum(samples.X, 0.0) / mu
    if regime == "ed":
        if not isinstance(samples, StoppedPaths):
            raise TypeError("ed limit needs StoppedPaths")
        p = params if params is not None else samples.params
        w = ed_constants(p).w
        if samples.tau_grid[-1] + w > samples.t[-1] + 1e-12:
            raise ValueError("inner horizon shorter than max tau + w")
        cols = [samples.node(tau + w) for tau in samples.tau_grid]
        vals = np.stack([samples.X[j, :, k] for j, k in enumerate(cols)], axis=1)
        times = samples.tau_grid * (p.lam if customer_time else 1.0)
        return times, vals / p.mu
    raise ValueError(f"unknown regime {regime!r}")


def ed_vhat_reference(params: ModelParams, tau: float, reps: int, dt: float,
                      seed: int, x0: float = 0.0) -> np.ndarray:
    """Terminal-only sampler of X^tau(tau + w)/mu for the experiment harness.

    Same stepping as sde_stopped for a single tau, but keeps only the
    running state so large replication counts stay cheap.
    """
    mu, theta = params.mu, params.theta
    w = ed_constants(params).w
    cfg = SdeConfig(dt=dt, horizon=tau + w, reps=reps, seed=seed, x0=x0)
    gen = stream(cfg.seed, 0, "sde")
    dt = cfg.dt
    t_nodes = cfg.time_grid()
    c1, c2, c3, late = _stopped_noise_scales(
        params, np.array([tau]), t_nodes, dt, noise=True)
    x = np.full(reps, float(cfg.x0))
    for k in range(cfg.n_steps):
        z1 = gen.standard_normal(reps)
        z2 = gen.standard_normal(reps)
        z3 = gen.standard_normal(reps)
        rate = mu if late[0, k] else theta
        x = x - rate * x * dt + c1[0, k] * z1 - c2[0, k] * z2 - c3[0, k] * z3
    _check_finite(x, "stopped terminal stepping")
    return x / mu


def qed_vhat_reference(beta: float, mu: float, theta: float, t: float,
                       reps: int, dt: float, seed: int,
                       x0: float = 0.0) -> np.ndarray:
    """Terminal-only sampler of X(t)+/mu for the experiment harness."""
    cfg = SdeConfig(dt=dt, horizon=t, reps=reps, seed=seed, x0=x0)
    gen = stream(cfg.seed, 0, "sde")
    sq = np.sqrt(mu * cfg.dt)
    x = np.full(reps, float(cfg.x0))
    for _ in range(cfg.n_steps):
        z1 = gen.standard_normal(reps)
        z2 = gen.standard_normal(reps)
        drift = -mu * beta - mu * np.minimum(x, 0.0) - theta * np.maximum(x, 0.0)
        x = x + drift * cfg.dt + sq * (z1 - z2)
    _check_finite(x, "QED terminal stepping")
    return np.maximum(x, 0.0) / mu
