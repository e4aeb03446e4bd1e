"""Closed-form fluid (law-of-large-numbers) limits for QED and ED.

Includes the stopped-arrival fluid surface: the deterministic limit of the
system with the arrival stream turned off at tau, whose first passage
through the departure-plus-abandonment count gives the fluid waiting time.
All functions are numpy-vectorized over time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from erlanga.paths import Grid2
from erlanga.simulate import ModelParams, RegimeError


@dataclass(frozen=True)
class EDConstants:
    """Overloaded-regime constants: excess fluid queue q and fluid wait w."""

    q: float
    w: float
    xbar_level: float

    @classmethod
    def from_params(cls, params: ModelParams) -> "EDConstants":
        if params.lam <= params.mu:
            raise RegimeError("ED constants need lam > mu (overloaded system)")
        q = (params.lam - params.mu) / params.theta
        w = np.log(params.lam / params.mu) / params.theta
        return cls(q=q, w=w, xbar_level=q + 1.0)


def ed_constants(params: ModelParams) -> EDConstants:
    return EDConstants.from_params(params)


def fluid_qed(t, mu: float):
    """Critically loaded fluid: (A, D, L, X, V) = (mu t, mu t, 0, 1, 0)."""
    if mu <= 0:
        raise ValueError("mu must be > 0")
    t = np.asarray(t, dtype=float)
    zeros = np.zeros_like(t)
    return mu * t, mu * t, zeros, np.ones_like(t), zeros


def fluid_ed(t, params: ModelParams):
    """Overloaded fluid: (A, D, L, X, V) = (lam t, mu t, (lam-mu) t, q+1, w)."""
    consts = ed_constants(params)
    t = np.asarray(t, dtype=float)
    lam, mu = params.lam, params.mu
    return (lam * t, mu * t, (lam - mu) * t,
            np.full_like(t, consts.xbar_level), np.full_like(t, consts.w))


def _clip0w(u, w):
    return np.clip(u, 0.0, w)


def fluid_stopped(tau: float, t, params: ModelParams,
                  paper_literal_6_6: bool = False):
    """Stopped-arrival fluid surface (Xbar, Abar, Dbar, Lbar) at (tau, t).

    Before tau + w the content decays exponentially from q+1 toward the
    fully-busy level 1, reaching it exactly at tau + w; afterwards the
    emptying system decays at the service rate.  The departure path's
    post-(tau+w) increment uses coefficient 1 (not the printed 1/mu); that
    choice is forced jointly by flow balance against the other three
    components and by Dbar' = mu * Xbar, and a literal mode reproduces the
    printed coefficient for comparison.
    """
    consts = ed_constants(params)
    lam, mu, theta = params.lam, params.mu, params.theta
    w = consts.w
    t = np.asarray(t, dtype=float)

    after = t - (tau + w)
    xbar = np.where(
        t < tau + w,
        (lam * np.exp(-theta * np.maximum(t - tau, 0.0)) - mu) / theta + 1.0,
        np.exp(-mu * np.maximum(after, 0.0)),
    )
    abar = lam * np.minimum(t, tau)
    coef = (1.0 / mu) if paper_literal_6_6 else 1.0
    dbar = mu * np.minimum(t, tau + w) + coef * (1.0 - np.exp(-mu * np.maximum(after, 0.0)))
    span = _clip0w(t - tau, w)
    lbar = (lam - mu) * np.minimum(t, tau) + (lam / theta) * (1.0 - np.exp(-theta * span)) - mu * span
    return xbar, abar, dbar, lbar


def zbar_stopped(tau: float, t, params: ModelParams):
    """Fluid first-passage time for an arrival at t <= tau.

    Solves Dbar + Lbar through the threshold Xbar(0) + Abar(t) - 1 in closed
    form: linear throughput lam before tau, exponential drain afterwards,
    with Zbar(tau) = tau + w.
    """
    consts = ed_constants(params)
    lam, theta = params.lam, params.theta
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr > tau):
        raise ValueError("zbar_stopped needs t <= tau (arrival fluid frozen)")
    early = t_arr + consts.q / lam
    remaining = consts.q - lam * (tau - t_arr)
    with np.errstate(invalid="ignore"):
        late = tau - np.log(1.0 - theta * remaining / lam) / theta
    out = np.where(early <= tau, early, late)
    if np.isscalar(t) or t_arr.ndim == 0:
        return float(out)
    return out


def dl_prime_stopped(tau: float, s, params: ModelParams):
    """(Dbar + Lbar)'(s) for the stopped fluid: lam, then lam e^{-theta(s-tau)},
    then mu e^{-mu(s-tau-w)}; continuous, positive, equal to mu at tau + w."""
    consts = ed_constants(params)
    lam, mu, theta = params.lam, params.mu, params.theta
    s = np.asarray(s, dtype=float)
    out = np.where(
        s <= tau,
        lam,
        np.where(
            s <= tau + consts.w,
            lam * np.exp(-theta * np.maximum(s - tau, 0.0)),
            mu * np.exp(-mu * np.maximum(s - tau - consts.w, 0.0)),
        ),
    )
    if np.isscalar(s) or s.ndim == 0:
        return float(out)
    return out


def stopped_xbar_grid(params: ModelParams, tau_grid, t_grid) -> Grid2:
    """Xbar^tau sampled on a Grid2 (shared by diffusion integrands and the
    regulator-map oracle)."""
    tau_arr = np.asarray(tau_grid, dtype=float)
    t_arr = np.asarray(t_grid, dtype=float)
    rows = [fluid_stopped(tau, t_arr, params)[0] for tau in tau_arr]
    return Grid2(tau_arr, t_arr, np.vstack(rows))


class FluidRef:
    """Callable fluid reference (a, d, l, x as functions of t) for scaling."""

    def __init__(self, a, d, l, x):
        self.a, self.d, self.l, self.x = a, d, l, x


def qed_ref(mu: float) -> FluidRef:
    return FluidRef(
        a=lambda t: mu * np.asarray(t, dtype=float),
        d=lambda t: mu * np.asarray(t, dtype=float),
        l=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        x=lambda t: np.ones_like(np.asarray(t, dtype=float)),
    )


def ed_ref(params: ModelParams) -> FluidRef:
    level = ed_constants(params).xbar_level
    lam, mu = params.lam, params.mu
    return FluidRef(
        a=lambda t: lam * np.asarray(t, dtype=float),
        d=lambda t: mu * np.asarray(t, dtype=float),
        l=lambda t: (lam - mu) * np.asarray(t, dtype=float),
        x=lambda t: np.full_like(np.asarray(t, dtype=float), level),
    )


def stopped_ref(params: ModelParams, tau: float) -> FluidRef:
    def make(i):
        return lambda t: fluid_stopped(tau, t, params)[i]

    return FluidRef(a=make(1), d=make(2), l=make(3), x=make(0))
