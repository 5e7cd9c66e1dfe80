"""Command-line driver: full solves, automatic reduction, and error estimates.

Commands:

    modred solve CONFIG [--key value ...]     full system -> CSV
    modred reduce CONFIG [--key value ...]    auto modeling -> CSV + model report + plot script
    modred estimate CONFIG [--key value ...]  dual solve + control points -> estimate report
    modred example simple|lattice [-o FILE]   write a ready-to-edit config

Configs are flat `key = value` text files; any key can be overridden on the
command line with `--key value`.  Outputs are deterministic: identical config
and build give byte-identical files (floats are printed with 17 significant
digits, which round-trips binary64 exactly).

Exit codes: 0 success, 1 usage/config error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import importlib.util
import sys as _sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .dual import (
    DualProblem,
    error_estimate,
    format_control_report,
    format_estimate_report,
    solve_dual,
    validate_at_control_points,
)
from .integrator import SolverOptions, TimePartition, solve_cg1
from .problems import (
    LatticeSpec,
    SimpleModelSpec,
    diameter,
    make_lattice,
    make_simple_model,
    small_mass_distance,
)
from .reduction import (
    ModelingOptions,
    assemble_reduced,
    auto_model,
    format_model_report,
    parse_model_report,
)
from .system import DynamicalSystem, Trajectory


@dataclass
class RunConfig:
    problem: str = "simple"
    kappa: float | None = None  # default: 1e18 for simple, 1 for lattice
    T: float = 100.0
    p: int = 3
    M: float = 100.0
    m: float = 1e-4
    displacement: float | None = None
    problem_file: str | None = None
    tau: float = 1e-7
    resolved_step: float | None = None
    reduced_step: float = 0.1
    step: float = 0.01
    control_points: int = 4
    psi: str = "1"
    output: str = "run"
    observables: str = ""
    inactive_tol: float | None = None
    oscillation_factor: float | None = None
    fixed_point_tol: float | None = None

    def validate(self) -> None:
        if self.problem not in ("simple", "lattice", "external-file"):
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.problem == "external-file" and not self.problem_file:
            raise ValueError("problem = external-file requires problem_file = <path>")
        for key in ("T", "tau", "reduced_step", "step"):
            if not getattr(self, key) > 0:
                raise ValueError(f"config key {key} must be positive")
        if self.kappa is not None and not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.control_points < 1:
            raise ValueError("control_points must be >= 1")
        for name in self.observable_names():
            if self.problem != "lattice":
                raise ValueError(f"observable {name!r} requires the lattice problem")
            if name not in ("diameter", "d_small"):
                raise ValueError(f"unknown observable {name!r}")

    def observable_names(self) -> list[str]:
        return [s.strip() for s in self.observables.split(",") if s.strip()]


_INT_KEYS = {"p", "control_points"}
_STR_KEYS = {"problem", "problem_file", "psi", "output", "observables"}


def _coerce(key: str, raw: str):
    if key in _STR_KEYS:
        return raw
    if key in _INT_KEYS:
        return int(raw)
    return float(raw)


def parse_config(path: str, overrides: list[tuple[str, str]] = ()) -> RunConfig:
    """Read a flat key = value config file and apply command-line overrides."""
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig) if not f.name.startswith("_")}
    entries: list[tuple[str, str]] = []
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        entries.append((key.strip(), value.strip()))
    entries.extend(overrides)
    for key, value in entries:
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        if value == "":
            continue
        cfg = replace(cfg, **{key: _coerce(key, value)})
    cfg.validate()
    return cfg


def _load_external_system(path: str) -> DynamicalSystem:
    spec = importlib.util.spec_from_file_location("modred_external_problem", path)
    if spec is None or spec.loader is None:
        raise ValueError(f"cannot import problem file {path!r}")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    if not hasattr(module, "make_system"):
        raise ValueError(f"problem file {path!r} must define make_system()")
    sys_obj = module.make_system()
    if not isinstance(sys_obj, DynamicalSystem):
        raise ValueError("make_system() must return a DynamicalSystem")
    return sys_obj


def build_system(cfg: RunConfig) -> tuple[DynamicalSystem, LatticeSpec | None]:
    if cfg.problem == "simple":
        kappa = cfg.kappa if cfg.kappa is not None else 1e18
        return make_simple_model(SimpleModelSpec(kappa=kappa, T=cfg.T)), None
    if cfg.problem == "lattice":
        spec = LatticeSpec(
            p=cfg.p,
            M=cfg.M,
            m=cfg.m,
            kappa=cfg.kappa if cfg.kappa is not None else 1.0,
            initial_small_displacement=cfg.displacement,
            T=cfg.T,
        )
        return make_lattice(spec), spec
    return _load_external_system(cfg.problem_file), None


def parse_psi(raw: str, dimension: int) -> np.ndarray:
    """Either a 1-based component index or a comma-separated vector."""
    if "," in raw:
        vec = np.array([float(v) for v in raw.split(",")])
        if len(vec) != dimension:
            raise ValueError(f"psi has {len(vec)} entries, system dimension is {dimension}")
        return vec
    index = int(raw)
    if not 1 <= index <= dimension:
        raise ValueError(f"psi component index {index} outside 1..{dimension}")
    vec = np.zeros(dimension)
    vec[index - 1] = 1.0
    return vec


def _observable_columns(cfg: RunConfig, spec: LatticeSpec | None, traj: Trajectory):
    funcs = {"diameter": diameter, "d_small": small_mass_distance}
    cols = []
    for name in cfg.observable_names():
        fn = funcs[name]
        cols.append((name, np.array([fn(traj, spec, float(t)) for t in traj.times])))
    return cols


def write_csv(path: str, traj: Trajectory, extra_columns=()) -> None:
    """CSV with header t,u_1,...,u_N (plus observables), 17 significant digits."""
    names = ["t"] + [f"u_{i + 1}" for i in range(traj.dimension)]
    names += [name for name, _ in extra_columns]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for row in range(len(traj.times)):
            values = [traj.times[row], *traj.states[row]]
            values += [col[row] for _, col in extra_columns]
            fh.write(",".join(f"{v:.17g}" for v in values) + "\n")


def read_csv(path: str, dimension: int) -> Trajectory:
    """Rebuild a trajectory from the first 1 + dimension CSV columns."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[: dimension + 1] != ["t"] + [f"u_{i + 1}" for i in range(dimension)]:
            raise ValueError(f"{path}: unexpected CSV header for dimension {dimension}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return Trajectory(data[:, 0], data[:, 1 : dimension + 1])


def _write_plot_script(path: str, csv_path: str, n_columns: int) -> None:
    lines = [
        f"# gnuplot script for {csv_path}",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set xlabel 't'",
        f"plot for [col=2:{n_columns}] '{csv_path}' using 1:col with lines",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def _solver_options(cfg: RunConfig) -> SolverOptions:
    if cfg.fixed_point_tol is not None:
        return SolverOptions(fixed_point_tol=cfg.fixed_point_tol)
    return SolverOptions()


def _modeling_options(cfg: RunConfig) -> ModelingOptions:
    kwargs = {"tau": cfg.tau, "resolved_step": cfg.resolved_step, "solver": _solver_options(cfg)}
    if cfg.inactive_tol is not None:
        kwargs["inactive_tol"] = cfg.inactive_tol
    if cfg.oscillation_factor is not None:
        kwargs["oscillation_factor"] = cfg.oscillation_factor
    return ModelingOptions(**kwargs)


def cmd_solve(cfg: RunConfig) -> int:
    system, spec = build_system(cfg)
    part = TimePartition.uniform(0.0, cfg.T, cfg.step)
    traj = solve_cg1(system, part, _solver_options(cfg))
    csv_path = f"{cfg.output}.csv"
    write_csv(csv_path, traj, _observable_columns(cfg, spec, traj))
    print(f"[solve] {len(part.steps)} steps over [0, {cfg.T:g}] -> {csv_path}")
    return 0


def cmd_reduce(cfg: RunConfig) -> int:
    system, spec = build_system(cfg)
    opts = _modeling_options(cfg)
    reduced, model, resolved = auto_model(system, opts)
    part = TimePartition.uniform(0.0, cfg.T, cfg.reduced_step)
    traj = solve_cg1(reduced.system, part, _solver_options(cfg))

    csv_path = f"{cfg.output}.csv"
    write_csv(csv_path, traj, _observable_columns(cfg, spec, traj))
    model_path = f"{cfg.output}.model.txt"
    Path(model_path).write_text(format_model_report(reduced))
    _write_plot_script(
        f"{cfg.output}.gnuplot", csv_path, 1 + traj.dimension + len(cfg.observable_names())
    )

    n_active = int(np.sum(model.active))
    print(
        f"[reduce] resolved {len(resolved.times) - 1} steps over [0, {2 * opts.tau:g}], "
        f"reduced {len(part.steps)} steps over [0, {cfg.T:g}]"
    )
    print(
        f"[reduce] {n_active}/{model.dimension} components active; "
        f"max |g| = {float(np.max(np.abs(model.constants))):.6g} -> {model_path}"
    )
    return 0


def _control_times(cfg: RunConfig) -> list[float]:
    lo = 2.0 * cfg.tau
    hi = cfg.T - 2.0 * cfg.tau
    if hi <= lo:
        raise ValueError("T too short for control points (need T > 4 * tau)")
    n = cfg.control_points
    if n == 1:
        return [0.5 * (lo + hi)]
    return list(np.linspace(lo, hi, n))


def cmd_estimate(cfg: RunConfig) -> int:
    system, _ = build_system(cfg)
    model_path = Path(f"{cfg.output}.model.txt")
    csv_path = Path(f"{cfg.output}.csv")
    for p in (model_path, csv_path):
        if not p.exists():
            raise ValueError(f"missing artifact {p}; run `modred reduce` first")
    model, u0 = parse_model_report(model_path.read_text())
    reduced = assemble_reduced(system, model, u0)
    traj = read_csv(str(csv_path), system.dimension)

    psi = parse_psi(cfg.psi, system.dimension)
    dp = DualProblem(primal=traj, sys=reduced.system, psi=psi, T=float(traj.times[-1]))
    phi = solve_dual(dp, cfg.reduced_step)

    opts = _modeling_options(cfg)
    report = validate_at_control_points(traj, system, model, _control_times(cfg), opts)
    est = error_estimate(traj, reduced, phi, report.gbar_samples())

    est_path = f"{cfg.output}.estimate.txt"
    Path(est_path).write_text(format_estimate_report(est))
    Path(f"{cfg.output}.controls.txt").write_text(format_control_report(report))
    print(
        f"[estimate] S0={est.S0:.4g} S1={est.S1:.4g} disc={est.disc_term:.4g} "
        f"model={est.model_term:.4g} total={est.total:.4g} -> {est_path}"
    )
    return 0


_EXAMPLE_CONFIGS = {
    "simple": """\
# Stiff two-mass model: fast oscillator at time scale 1/sqrt(kappa).
problem = simple
kappa = 1e18
T = 100
tau = 1e-7
resolved_step = 2e-10
reduced_step = 0.1
step = 2e-10        # full-solve step; use with a short T, e.g. --T 4e-7
control_points = 4
psi = 1
output = simple_run
""",
    "lattice": """\
# Lattice of large and small point masses with internal fast vibrations.
problem = lattice
p = 3
M = 100
m = 1e-4
kappa = 1
T = 20
tau = 1
reduced_step = 0.05
step = 0.002        # full-solve step (resolves the fast scale for short T)
control_points = 4
psi = 1
output = lattice_run
observables = diameter,d_small
""",
}


def cmd_example(name: str, output: str | None) -> int:
    text = _EXAMPLE_CONFIGS[name]
    if output:
        Path(output).write_text(text)
        print(f"[example] wrote {output}")
    else:
        _sys.stdout.write(text)
    return 0


def _split_overrides(extras: list[str]) -> list[tuple[str, str]]:
    pairs = []
    i = 0
    while i < len(extras):
        key = extras[i]
        if not key.startswith("--") or i + 1 >= len(extras):
            raise ValueError(f"overrides must come as --key value pairs, got {extras[i:]!r}")
        pairs.append((key[2:], extras[i + 1]))
        i += 2
    return pairs


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="modred",
        description="Automatic model reduction for multiscale ODE systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "reduce", "estimate"):
        p = sub.add_parser(name)
        p.add_argument("config", help="flat key = value config file")
    p = sub.add_parser("example")
    p.add_argument("name", choices=sorted(_EXAMPLE_CONFIGS))
    p.add_argument("-o", "--output", default=None)

    argv = list(_sys.argv[1:] if argv is None else argv)
    try:
        args, extras = parser.parse_known_args(argv)
    except SystemExit as err:
        return 0 if err.code == 0 else 1

    try:
        if args.command == "example":
            if extras:
                raise ValueError(f"unexpected arguments: {extras!r}")
            return cmd_example(args.name, args.output)
        cfg = parse_config(args.config, _split_overrides(extras))
        handler = {"solve": cmd_solve, "reduce": cmd_reduce, "estimate": cmd_estimate}
        return handler[args.command](cfg)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=_sys.stderr)
        return 1
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError) as err:
        print(f"numerical failure: {err}", file=_sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
