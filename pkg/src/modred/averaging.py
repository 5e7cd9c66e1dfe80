"""Centered moving averages of trajectories and the variance they obey.

The moving average over a window of size tau is

    ubar(t) = (1/tau) * integral of u(t+s) ds,  s in [-tau/2, tau/2],

with a constant extension at the interval ends: for t closer than tau/2 to an
endpoint, the value at the nearest admissible time is returned.  All integrals
are evaluated exactly for the stored piecewise-linear representation
(trapezoid rule over the nodes inside the window, with the two window
endpoints linearly interpolated), so averaging is exact for trajectories that
are affine in time.

The variance of the right-hand side,

    gbar(t) = average of s -> f(u(s), s)  minus  f(ubar(t), t),

is the exact forcing that the averaged solution obeys; it is what the
constant subgrid model is fitted to.  For f affine in (u, t) the variance
vanishes to roundoff, because averaging commutes with affine maps under the
exact quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .system import Array, DynamicalSystem, Trajectory, evaluate_rhs


@dataclass(frozen=True)
class AverageWindow:
    """Size tau of the centered averaging window."""

    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"window size must be positive, got {self.tau}")


def _check_window(traj: Trajectory, w: AverageWindow) -> tuple[float, float]:
    t0, t1 = traj.span
    if w.tau >= t1 - t0:
        raise ValueError(
            f"window tau={w.tau!r} does not fit inside the trajectory span "
            f"[{t0!r}, {t1!r}] of length {t1 - t0!r}"
        )
    return t0, t1


def _cumulative_integral(times: Array, values: Array) -> Array:
    """Exact integrals of the piecewise-linear interpolant up to each node."""
    dt = np.diff(times)
    segment = 0.5 * dt[:, None] * (values[:-1] + values[1:])
    out = np.zeros_like(values)
    np.cumsum(segment, axis=0, out=out[1:])
    return out


def _window_integrals(
    times: Array, values: Array, cum: Array, a: Array, b: Array
) -> Array:
    """Integrals of the piecewise-linear data over the windows [a_i, b_i]."""

    def antiderivative(x):
        idx = np.clip(np.searchsorted(times, x, side="right") - 1, 0, len(times) - 2)
        left = times[idx]
        dt = times[idx + 1] - left
        theta = (x - left) / dt
        vx = (1.0 - theta[:, None]) * values[idx] + theta[:, None] * values[idx + 1]
        return cum[idx] + (0.5 * (x - left))[:, None] * (values[idx] + vx)

    return antiderivative(b) - antiderivative(a)


def _averaged_values(traj: Trajectory, w: AverageWindow, ts: Array) -> Array:
    """Moving averages at the given times (clamped to the admissible range)."""
    t0, t1 = _check_window(traj, w)
    half = 0.5 * w.tau
    centers = np.clip(np.asarray(ts, dtype=float), t0 + half, t1 - half)
    a = np.clip(centers - half, t0, t1)
    b = np.clip(centers + half, t0, t1)
    cum = _cumulative_integral(traj.times, traj.states)
    return _window_integrals(traj.times, traj.states, cum, a, b) / w.tau


def moving_average(traj: Trajectory, w: AverageWindow, t: float) -> Array:
    """Centered moving average of the trajectory at time t.

    Near the trajectory ends the constant extension applies: for
    t < t_start + tau/2 the value at t_start + tau/2 is returned, and
    symmetrically at the right end.
    """
    return _averaged_values(traj, w, np.array([float(t)]))[0]


def average_trajectory(
    traj: Trajectory, w: AverageWindow, output_nodes
) -> Trajectory:
    """Moving average sampled on the given output nodes, as a new trajectory."""
    ts = np.asarray(output_nodes, dtype=float)
    t0, t1 = traj.span
    if ts.ndim != 1 or len(ts) < 2:
        raise ValueError("need at least two output nodes")
    if ts[0] < t0 or ts[-1] > t1:
        raise ValueError(
            f"output nodes [{ts[0]!r}, {ts[-1]!r}] outside trajectory span [{t0!r}, {t1!r}]"
        )
    return Trajectory(ts, _averaged_values(traj, w, ts))


def _rhs_trajectory(traj: Trajectory, sys: DynamicalSystem) -> Trajectory:
    """f(u(t), t) sampled at every trajectory node, as a trajectory itself."""
    values = np.empty_like(traj.states)
    for i, t in enumerate(traj.times):
        values[i] = evaluate_rhs(sys, traj.states[i], float(t))
    return Trajectory(traj.times, values)


def _variance_values(
    traj: Trajectory,
    sys: DynamicalSystem,
    w: AverageWindow,
    ts: Array,
    rhs_traj: Trajectory | None = None,
) -> Array:
    """Variance at the given interior times; rhs_traj may be precomputed."""
    t0, t1 = _check_window(traj, w)
    half = 0.5 * w.tau
    ts = np.asarray(ts, dtype=float)
    lo, hi = t0 + half, t1 - half
    slack = 1e-9 * w.tau
    if np.any(ts < lo - slack) or np.any(ts > hi + slack):
        raise ValueError(
            f"variance is only defined on the interior window [{lo!r}, {hi!r}]; "
            f"boundary strips are handled by inactivation, not here"
        )
    if rhs_traj is None:
        rhs_traj = _rhs_trajectory(traj, sys)
    f_avg = _averaged_values(rhs_traj, w, ts)
    u_avg = _averaged_values(traj, w, ts)
    f_of_avg = np.empty_like(f_avg)
    for i, t in enumerate(ts):
        f_of_avg[i] = evaluate_rhs(sys, u_avg[i], float(t))
    return f_avg - f_of_avg


def variance(traj: Trajectory, sys: DynamicalSystem, w: AverageWindow, t: float) -> Array:
    """The defect gbar(t) between the averaged rhs and the rhs of the average.

    Requires t in the interior region [t_start + tau/2, t_end - tau/2]; the
    boundary strips are owned by the inactivation convention of the reduction
    step and are refused here.
    """
    return _variance_values(traj, sys, w, np.array([float(t)]))[0]
