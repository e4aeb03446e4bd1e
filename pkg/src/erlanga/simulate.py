"""Exact event-driven simulation of the M/M/n+M (Erlang-A) queue.

The simulator steps the continuous-time Markov chain with competing
exponential clocks on the aggregate rates: birth rate lambda (zero after an
optional stop time), service completions at min(X, n) * mu, abandonment at
(X - n)+ * theta.  Memorylessness makes this distributionally identical to
per-customer timers with FIFO service and exponential patience, at a
fraction of the cost.  Virtual (potential) waiting times are drawn exactly
from the state via the birth-death stage representation rather than by
cloning and draining the system; a clone-and-drain sampler exists for
cross-validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from erlanga.paths import FlowBalanceError, PathBundle, StepPath, check_flow_balance
from erlanga.rng import UniformBlocks, stream


class RegimeError(ValueError):
    """Parameters outside the regime an operation is defined for."""


@dataclass(frozen=True)
class ModelParams:
    """Erlang-A parameters: n servers, arrival rate lam, service rate mu
    per server, abandonment rate theta per waiting customer."""

    n: int
    lam: float
    mu: float
    theta: float

    def __post_init__(self):
        if self.n < 1 or int(self.n) != self.n:
            raise ValueError("n must be an integer >= 1")
        for name in ("lam", "mu", "theta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    def death_rate(self, x) -> Union[float, np.ndarray]:
        """Total down-rate in state x: min(x, n)*mu + (x-n)+ * theta."""
        x = np.asarray(x)
        return np.minimum(x, self.n) * self.mu + np.maximum(x - self.n, 0) * self.theta

    @property
    def rho(self) -> float:
        return self.lam / (self.n * self.mu)


@dataclass(frozen=True)
class SimConfig:
    """One replication's run controls.

    init is an integer X(0) or the string "stationary" (drawn from the exact
    birth-death stationary law).  stop_time, when set, turns the arrival
    process off from that time on.
    """

    horizon: float
    init: Union[int, str] = 0
    seed: int = 0
    stop_time: Optional[float] = None
    rep: int = 0

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")
        if self.stop_time is not None and not 0 <= self.stop_time <= self.horizon:
            raise ValueError("stop_time must lie in [0, horizon]")
        if isinstance(self.init, str):
            if self.init != "stationary":
                raise ValueError("init must be an integer or 'stationary'")
        elif self.init < 0 or int(self.init) != self.init:
            raise ValueError("init must be a nonnegative integer")


def _initial_state(params: ModelParams, cfg: SimConfig) -> int:
    if cfg.init == "stationary":
        from erlanga.steady import sample_states, stationary_dist

        dist = stationary_dist(params)
        gen = stream(cfg.seed, cfg.rep, "init")
        return int(sample_states(dist, 1, gen)[0])
    return int(cfg.init)


def simulate(params: ModelParams, cfg: SimConfig) -> PathBundle:
    """Run one replication and return the coupled (A, D, L, X) bundle.

    Coupling contract: with equal (seed, rep), a run with stop_time = tau
    produces the same events on [0, tau] as the unstopped run, because both
    consume the same uniform stream in the same order until the first
    holding interval that crosses tau.
    """
    n = params.n
    lam, mu, theta = params.lam, params.mu, params.theta
    horizon = cfg.horizon
    stop = cfg.stop_time if cfg.stop_time is not None else math.inf

    x = _initial_state(params, cfg)
    uni = UniformBlocks(stream(cfg.seed, cfg.rep, "events"))
    log = math.log

    times = [0.0]
    a_log, d_log, l_log, x_log = [0], [0], [0], [x]
    a = d = l = 0
    t = 0.0

    while True:
        lam_eff = lam if t < stop else 0.0
        busy = x if x < n else n
        svc = busy * mu
        aband = (x - n) * theta if x > n else 0.0
        rate = lam_eff + svc + aband
        if rate <= 0.0:
            break
        dt = -log(1.0 - uni.next()) / rate
        t_next = t + dt
        if t < stop < t_next:
            # rates change at the stop time; restart the clock there
            t = stop
            continue
        if t_next > horizon:
            break
        t = t_next
        u = uni.next() * rate
        if u < lam_eff:
            x += 1
            a += 1
        elif u < lam_eff + svc:
            x -= 1
            d += 1
        else:
            x -= 1
            l += 1
        times.append(t)
        a_log.append(a)
        d_log.append(d)
        l_log.append(l)
        x_log.append(x)

    bp = np.array(times)
    mk = lambda vals: StepPath(bp, np.array(vals, dtype=np.int64), horizon)
    bundle = PathBundle(
        A=mk(a_log), D=mk(d_log), L=mk(l_log), X=mk(x_log),
        n=n, params=params, seed=cfg.seed,
        stop_time=cfg.stop_time, rep=cfg.rep,
    )
    report = check_flow_balance(bundle)
    if not report.ok:
        raise FlowBalanceError(f"simulator produced an unbalanced bundle: {report}")
    return bundle


def simulate_states_at(params: ModelParams, times, reps: int, seed: int,
                       init: Union[int, str] = 0,
                       stop_time: Optional[float] = None) -> np.ndarray:
    """X at the given probe times for many replications, shape (reps, len(times)).

    Steps the same aggregate-rate chain as simulate(), vectorized across
    replications with no event logs; this is what the scaling experiments
    use when only checkpoint states enter the statistics.  The chain law is
    identical to simulate()'s, the stream keying is not (one batch stream
    instead of per-replication streams), so states here are not event-for-
    event coupled to bundles.
    """
    probe = np.asarray(times, dtype=float)
    if probe.ndim != 1 or probe.size == 0 or probe[0] < 0:
        raise ValueError("need at least one probe time >= 0")
    if probe.size > 1 and np.any(np.diff(probe) <= 0):
        raise ValueError("probe times must be strictly increasing")
    n = params.n
    lam, mu, theta = params.lam, params.mu, params.theta
    stop = math.inf if stop_time is None else float(stop_time)

    gen = stream(seed, 0, "events")
    if init == "stationary":
        from erlanga.steady import sample_states, stationary_dist

        x = sample_states(stationary_dist(params), reps,
                          stream(seed, 0, "init")).astype(np.int64)
    else:
        x = np.full(reps, int(init), dtype=np.int64)

    t = np.zeros(reps)
    out = np.empty((reps, probe.size), dtype=np.int64)
    next_probe = np.zeros(reps, dtype=np.int64)
    rep_ix = np.arange(reps)

    while True:
        active = next_probe < probe.size
        if not np.any(active):
            break
        lam_eff = np.where(t < stop, lam, 0.0)
        rate = lam_eff + np.minimum(x, n) * mu + np.maximum(x - n, 0) * theta
        with np.errstate(divide="ignore"):
            dt = np.where(rate > 0.0, gen.standard_exponential(reps) / rate, np.inf)
        t_new = t + dt
        crossed = (t < stop) & (stop < t_new)
        t_new = np.where(crossed, stop, t_new)

        u = gen.random(reps) * rate
        delta = np.where(u < lam_eff, 1, -1).astype(np.int64)
        delta[crossed | ~np.isfinite(dt)] = 0

        # flush probes strictly before the next event time (X is constant there)
        while True:
            can = active & (probe[np.minimum(next_probe, probe.size - 1)] < t_new)
            can &= next_probe < probe.size
            if not np.any(can):
                break
            out[rep_ix[can], next_probe[can]] = x[can]
            next_probe[can] += 1
            active = next_probe < probe.size

        x += np.where(active, delta, 0)
        t = np.where(active, t_new, t)
    return out


def sample_virtual_waits(params: ModelParams, x_now, rng: np.random.Generator,
                         chunk: int = 4096) -> np.ndarray:
    """Vectorized exact virtual-wait draws for an array of states.

    Same law per entry as sample_virtual_wait; processes in chunks with a
    shared stage-weight vector so large batches stay within memory.
    """
    x_arr = np.asarray(x_now, dtype=np.int64)
    q = np.maximum(x_arr - params.n, 0)
    out = np.zeros(q.shape, dtype=float)
    q_max = int(q.max()) if q.size else 0
    if q_max == 0:
        return out
    weights = 1.0 / (params.n * params.mu + params.theta * np.arange(1, q_max + 1))
    stage = np.arange(1, q_max + 1)
    flat_q = q.ravel()
    flat_out = out.ravel()
    for lo in range(0, flat_q.size, chunk):
        qs = flat_q[lo:lo + chunk]
        e = rng.standard_exponential((qs.size, q_max))
        mask = stage[None, :] <= qs[:, None]
        flat_out[lo:lo + chunk] = ((e * weights) * mask).sum(axis=1)
    return flat_out.reshape(q.shape)


def sample_virtual_wait(params: ModelParams, x_now: int,
                        rng: np.random.Generator) -> float:
    """Exact draw of the virtual (potential) wait given X(t) = x_now.

    With Q = (x_now - n)+ customers waiting, the wait is the sum of Q
    independent exponentials with means 1/(n*mu + i*theta), i = 1..Q: the
    stage times in which the queue ahead of an infinitely patient observer
    drains.  Q = 0 means a free server, wait 0.
    """
    if x_now < 0:
        raise ValueError("x_now must be >= 0")
    q = x_now - params.n
    if q <= 0:
        return 0.0
    rates = params.n * params.mu + params.theta * np.arange(1, q + 1)
    return float(np.sum(rng.standard_exponential(q) / rates))


def virtual_wait_mean(params: ModelParams, x_now: int) -> float:
    """Exact conditional mean of the virtual wait given X(t) = x_now."""
    q = x_now - params.n
    if q <= 0:
        return 0.0
    rates = params.n * params.mu + params.theta * np.arange(1, q + 1)
    return float(np.sum(1.0 / rates))


def clone_drain_wait(params: ModelParams, x_now: int,
                     rng: np.random.Generator) -> float:
    """Cross-validation sampler: drain the cloned no-arrival chain.

    Steps the birth-death chain from x_now with arrivals off until the queue
    ahead of the observer empties (X down to n), accumulating the holding
    times.  Same law as sample_virtual_wait, derived from chain stepping
    instead of the stage formula.
    """
    if x_now < 0:
        raise ValueError("x_now must be >= 0")
    x = x_now
    t = 0.0
    while x > params.n:
        rate = params.n * params.mu + (x - params.n) * params.theta
        t += rng.standard_exponential() / rate
        x -= 1
    return t


@dataclass(frozen=True)
class VwaitBounds:
    lower: float
    upper: float
    lower_truncated: bool = False
    upper_truncated: bool = False

    @property
    def truncated(self) -> bool:
        return self.lower_truncated or self.upper_truncated


def _first_passage(times: np.ndarray, counts: np.ndarray, start_idx: int,
                   threshold: float, t0: float, horizon: float):
    """inf {s >= 0 : counts(t0 + s) >= threshold}, weak inequality."""
    if counts[start_idx] >= threshold:
        return 0.0, False
    later = counts[start_idx + 1:]
    hit = np.flatnonzero(later >= threshold)
    if hit.size == 0:
        return horizon - t0, True
    return float(times[start_idx + 1 + hit[0]] - t0), False


def vwait_bounds(b: PathBundle, t: float) -> VwaitBounds:
    """First-passage bounds bracketing the virtual wait at time t.

    lower uses the full departure-plus-abandonment count (abandonments of
    later arrivals speed up the passage, understating the wait); upper uses
    departures alone.  Thresholds carry the paper-convention (n-1) offset:
    the observer becomes head-of-line and one more server frees.  Passages
    that do not occur before the horizon are flagged truncated with the
    remaining window as the bound value.
    """
    if not 0 <= t <= b.horizon:
        raise ValueError("t outside [0, horizon]")
    times = b.X.breakpoints
    i0 = int(np.searchsorted(times, t, side="right") - 1)
    x_t = int(b.X.values[i0])
    d_t = int(b.D.values[i0])
    l_t = int(b.L.values[i0])

    dl = b.D.values + b.L.values
    lo, lo_trunc = _first_passage(times, dl, i0, x_t + d_t + l_t - (b.n - 1),
                                  t, b.horizon)
    up, up_trunc = _first_passage(times, b.D.values, i0, x_t + d_t - (b.n - 1),
                                  t, b.horizon)
    if not (lo_trunc or up_trunc) and lo > up:
        raise FlowBalanceError("lower bound exceeded upper bound")
    return VwaitBounds(lo, up, lo_trunc, up_trunc)


def per_customer_waits(b: PathBundle, rng: np.random.Generator) -> np.ndarray:
    """(arrival_time, queue_position_at_arrival, potential_wait_sample) rows.

    The queue position is the number waiting ahead at the arrival instant,
    (X(T-) - n)+; the potential wait is an exact state-conditional draw.
    Returns a structured array with one row per arrival in the log.
    """
    arrivals = np.flatnonzero(np.diff(b.A.values) > 0) + 1
    out = np.zeros(arrivals.size,
                   dtype=[("arrival_time", float), ("queue_position", np.int64),
                          ("wait", float)])
    for row, i in enumerate(arrivals):
        x_pre = int(b.X.values[i - 1])
        out[row] = (
            b.X.breakpoints[i],
            max(x_pre - b.n, 0),
            sample_virtual_wait(b.params, x_pre, rng),
        )
    return out
