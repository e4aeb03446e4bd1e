"""Path data structures: one- and two-parameter sample paths.

StepPath is the sample-path currency of the whole package: a right-continuous
step function stored as exact event times plus values, so counting processes
carry no discretization error.  Grid2 holds two-parameter functions
(stop-time tau x inner time t) on a rectangular grid with a uniform inner
mesh; it is used only where the two-parameter operators need a mesh.
LinearPath is the continuous piecewise-linear companion type produced by the
upper interpolation of step paths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Union

import numpy as np

if TYPE_CHECKING:
    from erlanga.simulate import ModelParams


class ShapeError(ValueError):
    """Operands live on incompatible domains or grids."""


class FlowBalanceError(RuntimeError):
    """A simulated bundle violates conservation; indicates a simulator bug."""


def _as_float_array(a) -> np.ndarray:
    return np.asarray(a, dtype=float)


@dataclass(frozen=True)
class StepPath:
    """Right-continuous step function on [0, horizon].

    ``breakpoints`` are strictly increasing with ``breakpoints[0] == 0`` and
    all <= ``horizon``; ``values[i]`` is the value on
    [breakpoints[i], breakpoints[i+1]).  Evaluation is cadlag: the value at t
    is the value at the last breakpoint <= t.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    horizon: float

    def __post_init__(self):
        bp = np.asarray(self.breakpoints)
        vals = np.asarray(self.values)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        if bp.ndim != 1 or vals.ndim != 1 or bp.size != vals.size:
            raise ShapeError("breakpoints and values must be 1-d and equal length")
        if bp.size == 0:
            raise ValueError("a StepPath needs at least the t=0 breakpoint")
        if bp[0] != 0.0:
            raise ValueError("first breakpoint must be 0")
        if bp.size > 1 and not np.all(np.diff(bp) > 0):
            raise ValueError("breakpoints must be strictly increasing")
        if bp[-1] > self.horizon:
            raise ValueError("breakpoints must not exceed the horizon")

    def eval(self, t) -> Union[float, np.ndarray]:
        """Cadlag evaluation at scalar or array t in [0, horizon]."""
        t_arr = _as_float_array(t)
        if np.any(t_arr < 0) or np.any(t_arr > self.horizon):
            raise ValueError(f"evaluation time outside [0, {self.horizon}]")
        idx = np.searchsorted(self.breakpoints, t_arr, side="right") - 1
        out = self.values[idx]
        if np.isscalar(t) or t_arr.ndim == 0:
            return float(out)
        return out

    def __call__(self, t):
        return self.eval(t)

    def jumps(self) -> np.ndarray:
        """Jump sizes at breakpoints[1:]; the t=0 row is the initial value."""
        return np.diff(self.values.astype(float))

    def scale(self, factor: float) -> "StepPath":
        return StepPath(self.breakpoints, self.values.astype(float) * factor, self.horizon)


@dataclass(frozen=True)
class LinearPath:
    """Continuous piecewise-linear function on [0, horizon].

    Knot times are nondecreasing (repeated times collapse to the later knot
    under np.interp, which is what construction code relies on).
    """

    knots_t: np.ndarray
    knots_v: np.ndarray
    horizon: float

    def __post_init__(self):
        t = _as_float_array(self.knots_t)
        v = _as_float_array(self.knots_v)
        object.__setattr__(self, "knots_t", t)
        object.__setattr__(self, "knots_v", v)
        if t.ndim != 1 or v.ndim != 1 or t.size != v.size or t.size < 1:
            raise ShapeError("knots must be 1-d, equal length, nonempty")
        if np.any(np.diff(t) < 0):
            raise ValueError("knot times must be nondecreasing")

    def eval(self, t) -> Union[float, np.ndarray]:
        t_arr = _as_float_array(t)
        if np.any(t_arr < 0) or np.any(t_arr > self.horizon):
            raise ValueError(f"evaluation time outside [0, {self.horizon}]")
        out = np.interp(t_arr, self.knots_t, self.knots_v)
        if np.isscalar(t) or t_arr.ndim == 0:
            return float(out)
        return out

    def __call__(self, t):
        return self.eval(t)


@dataclass(frozen=True)
class Grid2:
    """Two-parameter function sampled on tau_grid x t_grid.

    tau_grid and t_grid are increasing and start at 0; t_grid has a uniform
    mesh.  values[j, k] is the sample at (tau_grid[j], t_grid[k]) and must be
    finite.
    """

    tau_grid: np.ndarray
    t_grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        tau = _as_float_array(self.tau_grid)
        t = _as_float_array(self.t_grid)
        vals = _as_float_array(self.values)
        object.__setattr__(self, "tau_grid", tau)
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "values", vals)
        for name, g in (("tau_grid", tau), ("t_grid", t)):
            if g.ndim != 1 or g.size < 1:
                raise ShapeError(f"{name} must be a nonempty 1-d array")
            if g[0] != 0.0:
                raise ValueError(f"{name} must start at 0")
            if g.size > 1 and not np.all(np.diff(g) > 0):
                raise ValueError(f"{name} must be strictly increasing")
        if t.size > 1:
            steps = np.diff(t)
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
                raise ValueError("t_grid mesh must be uniform")
        if vals.shape != (tau.size, t.size):
            raise ShapeError(f"values shape {vals.shape} != (len(tau_grid), len(t_grid))")
        if not np.all(np.isfinite(vals)):
            raise ValueError("Grid2 values must be finite")

    @property
    def mesh(self) -> float:
        """Inner-time mesh width."""
        if self.t_grid.size < 2:
            return 0.0
        return float(self.t_grid[1] - self.t_grid[0])

    def with_values(self, values: np.ndarray) -> "Grid2":
        return Grid2(self.tau_grid, self.t_grid, values)


def grid2_from_function(f, tau_grid, t_grid) -> Grid2:
    """Sample f(tau, t) on the grid; f must broadcast over arrays."""
    tau = _as_float_array(tau_grid)
    t = _as_float_array(t_grid)
    vals = np.asarray(f(tau[:, None], t[None, :]), dtype=float)
    vals = np.broadcast_to(vals, (tau.size, t.size)).copy()
    return Grid2(tau, t, vals)


@dataclass(frozen=True)
class PathBundle:
    """Coupled (A, D, L, X) step paths from one simulation replication.

    A, D, L are nondecreasing integer counting paths, X the integer
    number-in-system level; all four share the event-time breakpoints.
    Flow balance X(t) = X(0) + A(t) - D(t) - L(t) holds exactly at every
    event time; if stop_time is set the arrival path is constant from there.
    """

    A: StepPath
    D: StepPath
    L: StepPath
    X: StepPath
    n: int
    params: "ModelParams"
    seed: int
    stop_time: Optional[float] = None
    rep: int = 0

    @property
    def horizon(self) -> float:
        return self.X.horizon

    @property
    def event_times(self) -> np.ndarray:
        return self.X.breakpoints


@dataclass(frozen=True)
class FlowReport:
    max_violation: int
    n_events: int
    arrivals_after_stop: int = 0

    @property
    def ok(self) -> bool:
        return self.max_violation == 0 and self.arrivals_after_stop == 0


def check_flow_balance(b: PathBundle) -> FlowReport:
    """Check X = X(0) + A - D - L at every event time (integer-exact).

    Returns the report; callers that treat a violation as a simulator bug
    should raise FlowBalanceError on ``not report.ok``.
    """
    bp = b.X.breakpoints
    for p in (b.A, b.D, b.L):
        if p.breakpoints.shape != bp.shape or not np.array_equal(p.breakpoints, bp):
            raise ShapeError("bundle paths must share event-time breakpoints")
    a = b.A.values.astype(np.int64)
    d = b.D.values.astype(np.int64)
    l = b.L.values.astype(np.int64)
    x = b.X.values.astype(np.int64)
    resid = np.abs(x - (x[0] + a - d - l))
    after_stop = 0
    if b.stop_time is not None:
        mask = bp > b.stop_time
        if np.any(mask):
            a_at_stop = a[np.searchsorted(bp, b.stop_time, side="right") - 1]
            after_stop = int(np.max(a[mask]) - a_at_stop)
    return FlowReport(
        max_violation=int(resid.max()) if resid.size else 0,
        n_events=int(bp.size - 1),
        arrivals_after_stop=after_stop,
    )


def max_jump(x: StepPath, T: Optional[float] = None) -> float:
    """Largest |jump| of x on [0, T] (T defaults to the horizon)."""
    if T is None:
        T = x.horizon
    if T > x.horizon:
        raise ValueError("T beyond the path horizon")
    if x.breakpoints.size < 2:
        return 0.0
    mask = x.breakpoints[1:] <= T
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(x.jumps()[mask])))


def _union_times(x: StepPath, y: StepPath) -> np.ndarray:
    return np.union1d(x.breakpoints, y.breakpoints)


def sup_norm(x, y) -> float:
    """Uniform distance between two paths of the same shape.

    For step paths the sup over continuous time equals the max over the
    union of breakpoints (exact, not approximate).  For grids both operands
    must live on identical grids.
    """
    if isinstance(x, StepPath) and isinstance(y, StepPath):
        if x.horizon != y.horizon:
            raise ShapeError("step paths have different horizons")
        times = _union_times(x, y)
        return float(np.max(np.abs(x.eval(times) - y.eval(times))))
    if isinstance(x, Grid2) and isinstance(y, Grid2):
        if (x.tau_grid.shape != y.tau_grid.shape
                or x.t_grid.shape != y.t_grid.shape
                or not np.array_equal(x.tau_grid, y.tau_grid)
                or not np.array_equal(x.t_grid, y.t_grid)):
            raise ShapeError("grids do not match")
        return float(np.max(np.abs(x.values - y.values)))
    raise ShapeError(f"cannot compare {type(x).__name__} with {type(y).__name__}")


def step_linear_gaps(step: StepPath, lin: LinearPath) -> tuple[float, float]:
    """(sup of lin - step, inf of lin - step) over [0, horizon].

    Evaluates segment by segment: on each constant piece of the step path
    the extrema of the continuous path sit at segment endpoints or interior
    knots, and the left limit at the segment's right end is included, so the
    returned sup matches the limiting uniform gap of the interpolation.
    """
    if step.horizon != lin.horizon:
        raise ShapeError("paths have different horizons")
    bp = step.breakpoints
    ends = np.append(bp[1:], step.horizon)
    sup_gap = -np.inf
    inf_gap = np.inf
    for i in range(bp.size):
        lo, hi = bp[i], ends[i]
        inside = lin.knots_t[(lin.knots_t > lo) & (lin.knots_t < hi)]
        probes = np.concatenate(([lo], inside, [hi]))
        gaps = lin.eval(probes) - step.values[i]
        sup_gap = max(sup_gap, float(np.max(gaps)))
        inf_gap = min(inf_gap, float(np.min(gaps)))
    return sup_gap, inf_gap


# ---------------------------------------------------------------------------
# Serialization: bundle CSV with header t,A,D,L,X plus a JSON sidecar.

def write_bundle_csv(b: PathBundle, csv_path, sidecar_path=None) -> None:
    """One row per event time, values post-event."""
    rows = np.column_stack([
        b.X.breakpoints,
        b.A.values, b.D.values, b.L.values, b.X.values,
    ])
    with open(csv_path, "w") as fh:
        fh.write("t,A,D,L,X\n")
        for t, a, d, l, x in rows:
            fh.write(f"{float(t)!r},{int(a)},{int(d)},{int(l)},{int(x)}\n")
    if sidecar_path is not None:
        meta = {
            "n": b.n,
            "lambda": b.params.lam,
            "mu": b.params.mu,
            "theta": b.params.theta,
            "seed": b.seed,
            "stop_time": b.stop_time,
            "horizon": b.horizon,
        }
        with open(sidecar_path, "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_bundle_csv(csv_path, sidecar_path) -> PathBundle:
    from erlanga.simulate import ModelParams  # local import to avoid a cycle

    with open(sidecar_path) as fh:
        meta = json.load(fh)
    data = np.genfromtxt(csv_path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    t = data[:, 0]
    horizon = float(meta["horizon"])
    params = ModelParams(n=int(meta["n"]), lam=meta["lambda"],
                         mu=meta["mu"], theta=meta["theta"])
    paths = [
        StepPath(t, data[:, col].astype(np.int64), horizon) for col in (1, 2, 3, 4)
    ]
    return PathBundle(A=paths[0], D=paths[1], L=paths[2], X=paths[3],
                      n=params.n, params=params, seed=int(meta["seed"]),
                      stop_time=meta["stop_time"])


def write_grid2_csv(g: Grid2, path) -> None:
    """Header row = t_grid, first column = tau_grid, body = values."""
    with open(path, "w") as fh:
        fh.write("tau\\t," + ",".join(repr(float(v)) for v in g.t_grid) + "\n")
        for j, tau in enumerate(g.tau_grid):
            fh.write(repr(float(tau)) + ","
                     + ",".join(repr(float(v)) for v in g.values[j]) + "\n")


def read_grid2_csv(path) -> Grid2:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        t_grid = np.array([float(v) for v in header[1:]])
        taus, rows = [], []
        for line in fh:
            cells = line.strip().split(",")
            taus.append(float(cells[0]))
            rows.append([float(v) for v in cells[1:]])
    return Grid2(np.array(taus), t_grid, np.array(rows))
