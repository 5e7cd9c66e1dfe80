"""Core abstractions: dynamical systems u' = f(u, t) and piecewise-linear trajectories.

All types are immutable after construction and safe to share between threads;
right-hand sides are expected to be pure functions of (u, t).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Array = np.ndarray

# Relative step for central finite differences, cbrt(machine epsilon).
FD_EPS_REL = float(np.finfo(float).eps) ** (1.0 / 3.0)


class EvaluationError(RuntimeError):
    """A right-hand side or Jacobian evaluation produced a non-finite value."""


def _frozen_array(values, dtype=float) -> Array:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class DynamicalSystem:
    """First-order system u' = f(u, t) on [0, final_time] with initial value u0.

    ``rhs(u, t)`` must return a length-``dimension`` vector and must not mutate
    its arguments.  ``jacobian(u, t)``, if given, returns the N x N matrix with
    entry (i, j) = d f_i / d u_j; otherwise central finite differences are used.
    ``oscillator_pairs`` lists (position, velocity) index pairs of fast
    oscillator components, used by the model-reduction inactivation rule.
    """

    dimension: int
    rhs: Callable[[Array, float], Array]
    initial_value: Array
    final_time: float
    jacobian: Callable[[Array, float], Array] | None = None
    oscillator_pairs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")
        if not self.final_time > 0:
            raise ValueError(f"final_time must be positive, got {self.final_time}")
        u0 = _frozen_array(self.initial_value)
        if u0.shape != (self.dimension,):
            raise ValueError(
                f"initial value has shape {u0.shape}, expected ({self.dimension},)"
            )
        if not np.all(np.isfinite(u0)):
            raise ValueError("initial value contains non-finite entries")
        object.__setattr__(self, "initial_value", u0)
        for i, j in self.oscillator_pairs:
            if not (0 <= i < self.dimension and 0 <= j < self.dimension):
                raise ValueError(f"oscillator pair ({i}, {j}) out of range")


def evaluate_rhs(sys: DynamicalSystem, u: Array, t: float) -> Array:
    """Evaluate f(u, t), checking the output for size and finiteness."""
    u = np.asarray(u, dtype=float)
    f = np.asarray(sys.rhs(u, t), dtype=float)
    if f.shape != (sys.dimension,):
        raise ValueError(f"rhs returned shape {f.shape}, expected ({sys.dimension},)")
    if not np.all(np.isfinite(f)):
        bad = int(np.flatnonzero(~np.isfinite(f))[0])
        raise EvaluationError(
            f"rhs component {bad} is non-finite at t={t!r} (overflow or invalid state)"
        )
    return f


def jacobian(sys: DynamicalSystem, u: Array, t: float) -> Array:
    """Jacobian of the right-hand side at (u, t).

    Uses the analytic Jacobian when present, otherwise central finite
    differences with steps h_i = FD_EPS_REL * max(|u_i|, 1).
    """
    u = np.asarray(u, dtype=float)
    if sys.jacobian is not None:
        J = np.asarray(sys.jacobian(u, t), dtype=float)
        if J.shape != (sys.dimension, sys.dimension):
            raise ValueError(
                f"jacobian returned shape {J.shape}, expected square of size {sys.dimension}"
            )
        return J

    n = sys.dimension
    J = np.empty((n, n))
    for j in range(n):
        h = FD_EPS_REL * max(abs(u[j]), 1.0)
        up = u.copy()
        um = u.copy()
        up[j] += h
        um[j] -= h
        J[:, j] = (sys.rhs(up, t) - sys.rhs(um, t)) / (2.0 * h)
    if not np.all(np.isfinite(J)):
        i, j = (int(k[0]) for k in np.nonzero(~np.isfinite(J)))
        raise EvaluationError(f"finite-difference Jacobian entry ({i}, {j}) is non-finite")
    return J


@dataclass(frozen=True)
class Trajectory:
    """Discrete solution values on strictly increasing time nodes.

    Between nodes the trajectory evaluates by linear interpolation, matching
    the piecewise-linear trial space of the cG(1) time stepping; evaluation
    outside [times[0], times[-1]] is an error.
    """

    times: Array
    states: Array  # shape (len(times), dimension)

    def __post_init__(self):
        times = _frozen_array(self.times)
        states = np.atleast_2d(np.array(self.states, dtype=float))
        states.flags.writeable = False
        if times.ndim != 1 or len(times) < 2:
            raise ValueError("a trajectory needs at least two time nodes")
        if not np.all(np.diff(times) > 0):
            raise ValueError("trajectory time nodes must be strictly increasing")
        if states.shape[0] != len(times):
            raise ValueError(
                f"{states.shape[0]} states for {len(times)} time nodes"
            )
        if not np.all(np.isfinite(states)):
            raise ValueError("trajectory states contain non-finite entries")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def dimension(self) -> int:
        return self.states.shape[1]

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def eval(self, t: float) -> Array:
        return trajectory_eval(self, t)


def trajectory_eval(traj: Trajectory, t: float) -> Array:
    """Value of the piecewise-linear trajectory at time t (exact at nodes)."""
    t0, t1 = traj.span
    if t < t0 or t > t1:
        raise ValueError(f"t={t!r} outside trajectory domain [{t0!r}, {t1!r}]")
    return _eval_many(traj, np.array([t]))[0]


def _eval_many(traj: Trajectory, ts: Array) -> Array:
    """Vectorized linear interpolation; callers guarantee ts is in-domain."""
    times = traj.times
    idx = np.clip(np.searchsorted(times, ts, side="right") - 1, 0, len(times) - 2)
    left = times[idx]
    dt = times[idx + 1] - left
    theta = (ts - left) / dt
    return (1.0 - theta[:, None]) * traj.states[idx] + theta[:, None] * traj.states[idx + 1]
