"""Automatic model reduction: resolve the fast scales over a short interval,
fit a constant subgrid forcing from the measured variance, freeze components
whose average stays constant, and assemble the reduced system.

The resolved run covers [0, 2*tau].  Averages are only interior-valid tau/2
away from each end, so the fit window is the maximal centered window
[tau/2, 3*tau/2].  A component is inactivated (frozen) when its moving average
is constant over the fit window while the unaveraged signal carries a
macroscopic oscillation; the oscillation guard (variation dominated by the
fast scale, amplitude above the tolerance) ensures that neither a genuinely
steady component nor a slow component with a microscopic fast jiggle is ever
frozen.  For second-order systems in first-order form, the velocity partner
of a frozen position component is frozen with it (declared via
``DynamicalSystem.oscillator_pairs``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .averaging import (
    AverageWindow,
    _averaged_values,
    _rhs_trajectory,
    _variance_values,
)
from .integrator import ConvergenceError, SolverOptions, TimePartition, solve_cg1
from .system import Array, DynamicalSystem, Trajectory, _frozen_array

#: Default resolved step as a fraction of tau (about 500 steps per window).
RESOLVED_STEP_FRACTION = 1.0 / 500.0

#: Minimum resolved nodes per fast oscillation period for the quadrature of
#: the rhs average to be trustworthy.
MIN_NODES_PER_PERIOD = 20


@dataclass(frozen=True)
class ModelingOptions:
    """Parameters of the automatic modeling run.

    ``resolved_step`` defaults to tau/500.  ``inactive_tol`` bounds how much
    the moving average may drift across the fit window (relative to
    max(1, |ubar|)) for a component to count as constant-average;
    ``oscillation_factor`` is the factor by which the raw signal's total
    variation must exceed that of its average before freezing is allowed.
    """

    tau: float
    resolved_step: float | None = None
    inactive_tol: float = 1e-3
    oscillation_factor: float = 10.0
    nodes_per_window_min: int = 200
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.resolved_step is not None and not self.resolved_step > 0:
            raise ValueError("resolved_step must be positive")
        if self.inactive_tol < 0:
            raise ValueError("inactive_tol must be nonnegative")
        if self.oscillation_factor <= 1:
            raise ValueError("oscillation_factor must exceed 1")
        if self.nodes_per_window_min < 2:
            raise ValueError("nodes_per_window_min must be >= 2")

    @property
    def step(self) -> float:
        return self.resolved_step if self.resolved_step is not None else self.tau * RESOLVED_STEP_FRACTION


@dataclass(frozen=True)
class SubgridModel:
    """Constant subgrid forcing plus the active/inactive component mask.

    Inactive components carry a zero constant; their effective subgrid term is
    the inactivation choice g_i = -f_i, realized by freezing the component in
    the reduced system.  ``oscillation_amplitude`` records the fast
    oscillation max |u_i - ubar_i| over the fit window, signed with the phase
    of the collective oscillation at its largest excursion, so that perturbing
    the frozen components by these values at a control point re-excites the
    recorded mode.  ``frozen_deviation`` records max |ubar_i - frozen value|
    for inactive components (the built-in error of holding them constant).
    """

    constants: Array
    active: Array
    tau: float
    fit_window: tuple[float, float]
    oscillation_amplitude: Array
    frozen_deviation: Array

    def __post_init__(self):
        constants = _frozen_array(self.constants)
        active = _frozen_array(self.active, dtype=bool)
        amp = _frozen_array(self.oscillation_amplitude)
        dev = _frozen_array(self.frozen_deviation)
        n = len(constants)
        if not (len(active) == len(amp) == len(dev) == n):
            raise ValueError("model arrays must have equal length")
        if not np.all(np.isfinite(constants)):
            raise ValueError("subgrid constants must be finite")
        if np.any(constants[~active] != 0.0):
            raise ValueError("inactive components must carry zero constants")
        object.__setattr__(self, "constants", constants)
        object.__setattr__(self, "active", active)
        object.__setattr__(self, "oscillation_amplitude", amp)
        object.__setattr__(self, "frozen_deviation", dev)

    @property
    def dimension(self) -> int:
        return len(self.constants)


@dataclass(frozen=True)
class ReducedSystem:
    """The reduced model: rhs f + g with inactive components frozen.

    ``system`` is the assembled DynamicalSystem ready for solve_cg1; its
    initial value is the averaged state, and its Jacobian (analytic when the
    base system has one) carries zero rows for frozen components.
    """

    base: DynamicalSystem
    model: SubgridModel
    initial_value: Array
    system: DynamicalSystem


def resolve_short(sys: DynamicalSystem, opts: ModelingOptions) -> Trajectory:
    """Solve the full system over [0, 2*tau] with the resolved step."""
    step = opts.step
    if step > 2.0 * opts.tau / opts.nodes_per_window_min:
        raise ValueError(
            f"resolved_step {step:g} leaves fewer than {opts.nodes_per_window_min} "
            f"nodes in the fit window; reduce it below {2.0 * opts.tau / opts.nodes_per_window_min:g}"
        )
    part = TimePartition.uniform(0.0, 2.0 * opts.tau, step)
    try:
        return solve_cg1(sys, part, opts.solver)
    except ConvergenceError as err:
        raise RuntimeError(
            f"resolved run diverged on interval {err.interval} "
            f"(residual {err.residual:.3e}); the fastest scale is not resolved, "
            f"use a smaller resolved_step than {step:g}"
        ) from err


def _window_slice(traj: Trajectory, tau: float) -> tuple[Array, tuple[float, float]]:
    """Indices of the trajectory nodes in the interior fit window."""
    t0, t1 = traj.span
    lo = t0 + 0.5 * tau
    hi = t1 - 0.5 * tau
    slack = 1e-9 * tau
    idx = np.flatnonzero((traj.times >= lo - slack) & (traj.times <= hi + slack))
    return idx, (lo, hi)


def _trapezoid(ts: Array, ys: Array) -> Array:
    dt = np.diff(ts)
    return np.sum(0.5 * dt[:, None] * (ys[:-1] + ys[1:]), axis=0)


def _check_resolution(u: Array, check: Array) -> float:
    """Smallest estimated nodes-per-period among the checked components.

    Components with fewer than a handful of direction reversals are treated as
    non-oscillating and skipped."""
    worst = np.inf
    n_samples = u.shape[0]
    for i in np.flatnonzero(check):
        d = np.diff(u[:, i])
        changes = int(np.sum(d[1:] * d[:-1] < 0.0))
        if changes >= 8:
            worst = min(worst, 2.0 * (n_samples - 1) / changes)
    return worst


def fit_constant_subgrid(
    resolved: Trajectory, sys: DynamicalSystem, opts: ModelingOptions
) -> SubgridModel:
    """Fit per-component subgrid constants and decide inactivation.

    Active components get the time-average of the variance over the fit
    window; components whose average is constant while the raw signal
    oscillates are marked inactive (along with their declared velocity
    partners) and carry a zero constant.
    """
    idx, (lo, hi) = _window_slice(resolved, opts.tau)
    if len(idx) < opts.nodes_per_window_min:
        raise ValueError(
            f"only {len(idx)} resolved nodes in the fit window "
            f"[{lo:g}, {hi:g}]; need at least {opts.nodes_per_window_min}"
        )
    window_times = resolved.times[idx]
    u = resolved.states[idx]

    w = AverageWindow(opts.tau)
    ubar = _averaged_values(resolved, w, window_times)
    scale = np.maximum(1.0, np.max(np.abs(ubar), axis=0))
    amplitude = np.max(np.abs(u - ubar), axis=0)
    macroscopic = amplitude > opts.inactive_tol * scale

    # The rhs-average quadrature must resolve every oscillation large enough
    # to matter; microscopic ripples riding on slow components are exempt.
    nodes_per_period = _check_resolution(u, macroscopic)
    if nodes_per_period < MIN_NODES_PER_PERIOD:
        raise ValueError(
            f"fastest macroscopic oscillation is sampled with ~{nodes_per_period:.1f} "
            f"nodes per period (need >= {MIN_NODES_PER_PERIOD}); use a smaller resolved_step"
        )

    # Constant-average test: drift of the averaged signal between the two
    # window halves, relative to max(1, |ubar|).  The attenuated remainder of
    # a fast oscillation averages out within each half, while a component that
    # genuinely moves on the window scale does not.
    half = len(idx) // 2
    drift = np.abs(np.mean(ubar[half:], axis=0) - np.mean(ubar[:half], axis=0))
    constant_average = drift <= opts.inactive_tol * scale

    # Oscillation guard: freezing requires the raw total variation to dominate
    # that of the average (so steady components are never inactivated) and the
    # oscillation to be macroscopic (so a slow component is not frozen just
    # because its microscopic fast jiggle outweighs a near-zero drift).
    tv_raw = np.sum(np.abs(np.diff(u, axis=0)), axis=0)
    tv_avg = np.sum(np.abs(np.diff(ubar, axis=0)), axis=0)
    oscillates = (tv_raw > opts.oscillation_factor * tv_avg) & macroscopic

    inactive = constant_average & oscillates
    for pos, vel in sys.oscillator_pairs:
        if inactive[pos]:
            inactive[vel] = True
    active = ~inactive

    rhs_traj = _rhs_trajectory(resolved, sys)
    gbar = _variance_values(resolved, sys, w, window_times, rhs_traj=rhs_traj)
    constants = _trapezoid(window_times, gbar) / (window_times[-1] - window_times[0])
    constants[inactive] = 0.0

    # Sign the amplitudes with the oscillation phase at the largest collective
    # excursion of the frozen components, so restarts reproduce the mode shape
    # (a uniform positive displacement would excite a different mode).
    wiggle = u - ubar
    if np.any(inactive):
        peak = int(np.argmax(np.sum(wiggle[:, inactive] ** 2, axis=1)))
        sign = np.where(wiggle[peak] < 0.0, -1.0, 1.0)
    else:
        sign = np.ones(resolved.dimension)

    frozen_value = _trapezoid(window_times, ubar) / (window_times[-1] - window_times[0])
    deviation = np.where(inactive, np.max(np.abs(ubar - frozen_value), axis=0), 0.0)

    return SubgridModel(
        constants=constants,
        active=active,
        tau=opts.tau,
        fit_window=(float(lo), float(hi)),
        oscillation_amplitude=sign * amplitude,
        frozen_deviation=deviation,
    )


def assemble_reduced(
    sys: DynamicalSystem, model: SubgridModel, u0: Array
) -> ReducedSystem:
    """Wrap f + g with frozen components into a solvable DynamicalSystem."""
    if model.dimension != sys.dimension:
        raise ValueError("model dimension does not match the system")
    frozen = ~model.active
    constants = model.constants
    base_rhs = sys.rhs

    def reduced_rhs(u, t):
        out = np.asarray(base_rhs(u, t), dtype=float) + constants
        out[frozen] = 0.0
        return out

    reduced_jac = None
    if sys.jacobian is not None:
        base_jac = sys.jacobian

        def reduced_jac(u, t):
            J = np.array(base_jac(u, t), dtype=float)
            J[frozen, :] = 0.0
            return J

    system = DynamicalSystem(
        dimension=sys.dimension,
        rhs=reduced_rhs,
        initial_value=u0,
        final_time=sys.final_time,
        jacobian=reduced_jac,
        oscillator_pairs=sys.oscillator_pairs,
    )
    return ReducedSystem(base=sys, model=model, initial_value=system.initial_value, system=system)


def build_reduced(
    sys: DynamicalSystem, model: SubgridModel, resolved: Trajectory
) -> ReducedSystem:
    """Assemble the reduced system with its averaged initial value.

    Active components start from ubar at the left edge of the fit window
    (which equals ubar(0) under the constant extension); frozen components are
    held at their fit-window mean.
    """
    idx, (lo, _) = _window_slice(resolved, model.tau)
    window_times = resolved.times[idx]
    w = AverageWindow(model.tau)
    ubar = _averaged_values(resolved, w, window_times)
    mean = _trapezoid(window_times, ubar) / (window_times[-1] - window_times[0])
    u0 = np.where(model.active, _averaged_values(resolved, w, np.array([lo]))[0], mean)
    return assemble_reduced(sys, model, u0)


def auto_model(
    sys: DynamicalSystem, opts: ModelingOptions
) -> tuple[ReducedSystem, SubgridModel, Trajectory]:
    """Resolve, fit, and assemble: the full automatic modeling pipeline."""
    resolved = resolve_short(sys, opts)
    model = fit_constant_subgrid(resolved, sys, opts)
    reduced = build_reduced(sys, model, resolved)
    return reduced, model, resolved


def format_model_report(reduced: ReducedSystem) -> str:
    """Plain-text model report: one `index active|inactive g_value` line per
    component (1-based indices), preceded by commented metadata used to
    rebuild the reduced system."""
    model = reduced.model
    lines = [
        f"# tau = {model.tau:.17g}",
        f"# fit_window = {model.fit_window[0]:.17g} {model.fit_window[1]:.17g}",
        "# u0 = " + " ".join(f"{v:.17g}" for v in reduced.initial_value),
        "# oscillation_amplitude = "
        + " ".join(f"{v:.17g}" for v in model.oscillation_amplitude),
        "# frozen_deviation = " + " ".join(f"{v:.17g}" for v in model.frozen_deviation),
    ]
    for i in range(model.dimension):
        state = "active" if model.active[i] else "inactive"
        lines.append(f"{i + 1} {state} {model.constants[i]:.17g}")
    return "\n".join(lines) + "\n"


def parse_model_report(text: str) -> tuple[SubgridModel, Array]:
    """Inverse of format_model_report; returns the model and the reduced
    initial value recorded in the header."""
    meta: dict[str, str] = {}
    rows: list[tuple[int, bool, float]] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
            continue
        fields = line.split()
        if len(fields) != 3 or fields[1] not in ("active", "inactive"):
            raise ValueError(f"malformed model report line: {raw!r}")
        rows.append((int(fields[0]), fields[1] == "active", float(fields[2])))
    if not rows:
        raise ValueError("model report contains no component lines")
    rows.sort()
    if [r[0] for r in rows] != list(range(1, len(rows) + 1)):
        raise ValueError("model report component indices must be 1..N")

    def vector(key):
        if key not in meta:
            raise ValueError(f"model report is missing the '# {key} = ...' header")
        return np.array([float(v) for v in meta[key].split()])

    window = vector("fit_window")
    model = SubgridModel(
        constants=np.array([r[2] for r in rows]),
        active=np.array([r[1] for r in rows]),
        tau=float(vector("tau")[0]),
        fit_window=(float(window[0]), float(window[1])),
        oscillation_amplitude=vector("oscillation_amplitude"),
        frozen_deviation=vector("frozen_deviation"),
    )
    return model, vector("u0")
