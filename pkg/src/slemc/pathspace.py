"""Continuous paths with a (possibly finite) random lifetime, and the
killing / continuation algebra on them.

A path lives on a uniform time grid of step ``dt``; its samples cover
``[0, lifetime)`` (truncated at a horizon when the lifetime is infinite).
Off-grid values are linearly interpolated.  All objects are immutable
after construction, so samplers can be evaluated concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

Scalar = Union[float, complex]

_GRID_FUZZ = 1e-9


def grid_count(duration: float, dt: float) -> int:
    """Number of grid samples covering [0, duration): ceil(duration/dt),
    robust to float noise in duration/dt."""
    return max(1, int(math.ceil(duration / dt - _GRID_FUZZ)))


@dataclass(frozen=True)
class SampledPath:
    """A real- or complex-valued path sampled on a uniform grid.

    dt             : grid step (> 0)
    values         : samples at t = 0, dt, 2*dt, ...
    lifetime       : T in (0, inf]; inf means "truncated at the stored
                     horizon, conceptually infinite"
    terminal_limit : value of the left limit at T when the lifetime is
                     finite and the limit is known (membership in the
                     continuable class)
    """

    dt: float
    values: np.ndarray
    lifetime: float = math.inf
    terminal_limit: Optional[Scalar] = None

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("values must be a nonempty 1-d array")
        if not (self.dt > 0):
            raise ValueError("dt must be positive")
        if not (self.lifetime > 0):
            raise ValueError("lifetime must be positive")
        if self.terminal_limit is not None and not math.isfinite(self.lifetime):
            raise ValueError("terminal_limit requires a finite lifetime")
        if math.isfinite(self.lifetime):
            n_expect = grid_count(self.lifetime, self.dt)
            if vals.size != n_expect:
                raise ValueError(
                    f"sample count {vals.size} != ceil(lifetime/dt) = {n_expect}"
                )
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    # -- derived geometry -------------------------------------------------

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    @property
    def truncated(self) -> bool:
        """True when the lifetime is infinite and only [0, horizon) is stored."""
        return not math.isfinite(self.lifetime)

    @property
    def horizon(self) -> float:
        """Right end of the stored grid, n*dt."""
        return self.n * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n) * self.dt

    def value_at(self, t: float) -> Scalar:
        """Linear interpolation at time t in [0, lifetime).

        Between the last sample and a finite lifetime the interpolation
        target is terminal_limit when present, otherwise the last sample
        is held constant.  Same constant extension applies on the last
        cell of a truncated path.
        """
        if t < 0 or t >= min(self.lifetime, self.horizon) + _GRID_FUZZ * self.dt:
            raise ValueError(f"t={t} outside [0, {min(self.lifetime, self.horizon)})")
        pos = t / self.dt
        k = int(pos)
        frac = pos - k
        if k >= self.n - 1:
            last = self.values[self.n - 1]
            if self.terminal_limit is not None and self.lifetime > (self.n - 1) * self.dt:
                w = (t - (self.n - 1) * self.dt) / (self.lifetime - (self.n - 1) * self.dt)
                return last + (self.terminal_limit - last) * w
            return last
        return self.values[k] + (self.values[k + 1] - self.values[k]) * frac

    def values_at(self, ts: np.ndarray) -> np.ndarray:
        """Vectorized value_at (same interpolation rules)."""
        ts = np.asarray(ts, dtype=float)
        nodes = self.times
        vals = self.values
        if self.terminal_limit is not None and self.lifetime > nodes[-1]:
            nodes = np.append(nodes, self.lifetime)
            vals = np.append(vals, self.terminal_limit)
        if self.is_complex:
            return np.interp(ts, nodes, vals.real) + 1j * np.interp(ts, nodes, vals.imag)
        return np.interp(ts, nodes, vals)


# -- operations ------------------------------------------------------------


def kill(f: SampledPath, tau: float) -> SampledPath:
    """Truncate f at time tau; the result has lifetime min(tau, T_f).

    When tau < T_f the terminal value is obtained by interpolation, so
    the killed path is always continuable.
    """
    if not (tau > 0):
        raise ValueError("kill time must be positive")
    if tau >= f.lifetime:
        return f
    if tau > f.horizon + _GRID_FUZZ * f.dt:
        raise ValueError(
            f"kill time {tau} beyond stored horizon {f.horizon} of a truncated path"
        )
    n_new = grid_count(tau, f.dt)
    terminal = f.value_at(min(tau, f.horizon - _GRID_FUZZ * f.dt)) if tau >= f.horizon else f.value_at(tau)
    return SampledPath(f.dt, f.values[:n_new], lifetime=tau, terminal_limit=terminal)


def concat(f: SampledPath, g: SampledPath) -> SampledPath:
    """Continuation f then g: value f(t) for t < T_f, then f(T_f-)+g(t-T_f).

    Requires f continuable (finite lifetime with terminal_limit) and
    g(0) = 0, on the same grid step.
    """
    if f.truncated or f.terminal_limit is None:
        raise ValueError("first path must have a finite lifetime and a terminal limit")
    if g.values[0] != 0:
        raise ValueError("second path must start at 0")
    if f.dt != g.dt:
        raise ValueError(f"grid steps differ: {f.dt} vs {g.dt}")
    dt = f.dt
    lifetime = f.lifetime + g.lifetime
    if math.isfinite(lifetime):
        n_total = grid_count(lifetime, dt)
    else:
        n_total = f.n + g.n  # f part plus the stored extent of g
    n_f = f.n  # k*dt < T_f  <=>  k < n_f
    t_tail = np.arange(n_f, n_total) * dt - f.lifetime
    t_tail = np.clip(t_tail, 0.0, None)
    tail = f.terminal_limit + g.values_at(t_tail)
    out = np.concatenate([f.values, tail])
    terminal = None
    if g.terminal_limit is not None:
        terminal = f.terminal_limit + g.terminal_limit
    return SampledPath(dt, out, lifetime=lifetime, terminal_limit=terminal)


def concat_marked(f: SampledPath, g: SampledPath) -> tuple[SampledPath, float]:
    """Continuation that also returns the junction time T_f, from which
    (f, g) are recoverable up to grid rounding."""
    return concat(f, g), f.lifetime


def split_at_junction(h: SampledPath, junction: float) -> tuple[SampledPath, SampledPath]:
    """Inverse of concat_marked up to grid rounding."""
    left = kill(h, junction)
    right = shift_restart(h, junction)
    return left, right


def shift_restart(f: SampledPath, r: float) -> SampledPath:
    """The path t -> f(r+t) - f(r) on [0, T_f - r)."""
    if r < 0 or r >= f.lifetime:
        raise ValueError(f"shift time {r} outside [0, lifetime)")
    if r >= f.horizon:
        raise ValueError(f"shift time {r} beyond stored horizon {f.horizon}")
    dt = f.dt
    base = f.value_at(r)
    if f.truncated:
        lifetime = math.inf
        n_new = grid_count(f.horizon - r, dt)
    else:
        lifetime = f.lifetime - r
        n_new = grid_count(lifetime, dt)
    ts = r + np.arange(n_new) * dt
    ts = np.minimum(ts, f.horizon - _GRID_FUZZ * dt)
    vals = f.values_at(ts) - base
    vals[0] = 0 * vals[0]
    terminal = None
    if f.terminal_limit is not None and math.isfinite(lifetime):
        terminal = f.terminal_limit - base
    return SampledPath(dt, vals, lifetime=lifetime, terminal_limit=terminal)


# -- weighted killing -------------------------------------------------------


@dataclass(frozen=True)
class KillSpec:
    """How to kill a sampled path.

    Exactly one of:
      fixed_time : deterministic kill time in (0, inf] (inf = no kill)
      time_fn    : per-path kill time (a stopping-time rule), Dirac kernel
      weight_fn  : per-path cumulative weight process theta on the path grid
                   (nonnegative, nondecreasing, theta_0 = 0); the kill time
                   is drawn from the normalized increments and the sample
                   carries importance weight theta_inf
    """

    fixed_time: Optional[float] = None
    time_fn: Optional[Callable[[SampledPath], float]] = None
    weight_fn: Optional[Callable[[SampledPath], np.ndarray]] = None

    def __post_init__(self):
        given = sum(x is not None for x in (self.fixed_time, self.time_fn, self.weight_fn))
        if given != 1:
            raise ValueError("exactly one of fixed_time, time_fn, weight_fn required")
        if self.fixed_time is not None and not (self.fixed_time > 0):
            raise ValueError("fixed_time must be positive")


def _draw_kill_time(theta: np.ndarray, dt: float, rng: np.random.Generator) -> float:
    """Inverse-CDF draw from the piecewise-linear cumulative theta (exact
    for the grid representation)."""
    total = theta[-1]
    u = rng.uniform(0.0, total)
    k = int(np.searchsorted(theta, u, side="left"))
    k = min(max(k, 1), theta.size - 1)
    dth = theta[k] - theta[k - 1]
    frac = (u - theta[k - 1]) / dth if dth > 0 else 1.0
    t = (k - 1 + frac) * dt
    return max(t, dt * 1e-9)


def sample_killed(
    path_sampler: Callable[[np.random.Generator], SampledPath],
    kill_spec: KillSpec,
    rng: np.random.Generator,
) -> tuple[SampledPath, float]:
    """Sample a path, kill it per kill_spec, return (path, importance weight).

    For weighted killing the weighted empirical law of the outputs targets
    the theta-killed measure; paths with theta_inf = 0 are returned intact
    with weight 0 (consumers skip them).
    """
    f = path_sampler(rng)
    if kill_spec.fixed_time is not None:
        tau = kill_spec.fixed_time
        return (f, 1.0) if not math.isfinite(tau) else (kill(f, tau), 1.0)
    if kill_spec.time_fn is not None:
        tau = kill_spec.time_fn(f)
        return (f, 1.0) if not math.isfinite(tau) else (kill(f, tau), 1.0)
    theta = np.asarray(kill_spec.weight_fn(f), dtype=float)
    if theta.shape != (f.n,):
        raise ValueError("weight process must be sampled on the path grid")
    if theta[0] != 0:
        raise ValueError("weight process must start at 0")
    if np.any(np.diff(theta) < 0) or not np.all(np.isfinite(theta)):
        raise ValueError("weight process must be finite and nondecreasing")
    total = float(theta[-1])
    if total == 0.0:
        return f, 0.0
    tau = _draw_kill_time(theta, f.dt, rng)
    return kill(f, tau), total
