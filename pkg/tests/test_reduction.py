import dataclasses

import numpy as np
import pytest

from conftest import linear_system
from modred import (
    DynamicalSystem,
    ModelingOptions,
    SimpleModelSpec,
    SubgridModel,
    TimePartition,
    Trajectory,
    auto_model,
    build_reduced,
    evaluate_rhs,
    fit_constant_subgrid,
    make_simple_model,
    resolve_short,
    solve_cg1,
)
from modred.reduction import format_model_report, parse_model_report


@pytest.fixture(scope="module")
def stiff_modeling():
    sys = make_simple_model(SimpleModelSpec(kappa=1e18, T=100.0))
    opts = ModelingOptions(tau=1e-7, resolved_step=2e-10)
    reduced, model, resolved = auto_model(sys, opts)
    return sys, opts, reduced, model, resolved


def test_resolve_short_node_count_and_periods(stiff_modeling):
    _, _, _, _, resolved = stiff_modeling
    assert len(resolved.times) == 1001  # 1000 uniform steps over [0, 2e-7]
    u2 = resolved.states[:, 1]
    crossings = int(np.sum(u2[1:] * u2[:-1] < 0))
    # about 31.8 oscillation periods, two crossings per period
    assert 61 <= crossings <= 66


def test_resolve_short_constant_field():
    sys = DynamicalSystem(2, lambda u, t: np.zeros(2), np.array([1.0, -1.0]), 10.0)
    traj = resolve_short(sys, ModelingOptions(tau=0.5))
    np.testing.assert_array_equal(traj.states, np.tile(sys.initial_value, (len(traj.times), 1)))


def test_resolve_short_exponential_endpoint():
    sys = DynamicalSystem(1, lambda u, t: -u, np.array([2.0]), 10.0)
    traj = resolve_short(sys, ModelingOptions(tau=0.5, resolved_step=0.002))
    np.testing.assert_allclose(traj.times[-1], 1.0)
    assert abs(traj.states[-1, 0] - 2.0 * np.exp(-1.0)) <= 1e-4


def test_resolve_short_rejects_coarse_step():
    sys = DynamicalSystem(1, lambda u, t: -u, np.array([1.0]), 10.0)
    with pytest.raises(ValueError, match="resolved_step"):
        resolve_short(sys, ModelingOptions(tau=0.5, resolved_step=0.1))


def test_fit_simple_model_constant_and_mask(stiff_modeling):
    _, _, _, model, _ = stiff_modeling
    assert abs(model.constants[2] - 0.2495) <= 0.005
    assert list(model.active) == [True, False, True, False]
    assert model.constants[1] == 0.0 and model.constants[3] == 0.0
    # recorded oscillation amplitude of the fast position component is ~1
    assert 0.9 <= abs(model.oscillation_amplitude[1]) <= 1.1


def test_fit_linear_system_all_active_zero_constants(rng):
    # slow LTI dynamics: no component may be frozen and the fitted constants
    # vanish to quadrature accuracy
    A = np.array([[0.0, 1.0], [-0.04, 0.0]])
    sys = linear_system(A, [1.0, 0.0], 100.0)
    reduced, model, resolved = auto_model(sys, ModelingOptions(tau=0.5))
    assert model.active.all()
    f0 = evaluate_rhs(sys, sys.initial_value, 0.0)
    assert np.max(np.abs(model.constants)) <= 1e-6 * np.max(np.abs(f0)) + 1e-12


def test_fit_zero_field_keeps_everything_active():
    sys = DynamicalSystem(3, lambda u, t: np.zeros(3), np.ones(3), 10.0)
    _, model, _ = auto_model(sys, ModelingOptions(tau=0.5))
    assert model.active.all()
    np.testing.assert_array_equal(model.constants, np.zeros(3))


def test_fit_refuses_sparse_window():
    ts = np.linspace(0, 1, 21)
    traj = Trajectory(ts, np.zeros((21, 1)))
    sys = DynamicalSystem(1, lambda u, t: np.zeros(1), np.zeros(1), 10.0)
    with pytest.raises(ValueError, match="nodes"):
        fit_constant_subgrid(traj, sys, ModelingOptions(tau=0.5))


def test_fit_refuses_underresolved_oscillation():
    # a unit-amplitude oscillation at ~8 nodes per period is below the
    # quadrature requirement (the window itself holds plenty of nodes)
    omega = 400.0
    ts = np.linspace(0, 1, 501)
    traj = Trajectory(ts, np.cos(omega * ts)[:, None])
    sys = DynamicalSystem(1, lambda u, t: np.zeros(1), np.array([1.0]), 10.0)
    with pytest.raises(ValueError, match="nodes per"):
        fit_constant_subgrid(traj, sys, ModelingOptions(tau=0.5))


def test_build_reduced_rhs_combines_forcing_and_freezing(stiff_modeling):
    sys, _, reduced, model, _ = stiff_modeling
    u = np.array([0.3, reduced.initial_value[1], -0.1, reduced.initial_value[3]])
    out = evaluate_rhs(reduced.system, u, 0.0)
    expected_3 = -u[0] + 0.5 * u[1] ** 2 + model.constants[2]
    np.testing.assert_allclose(out[2], expected_3, rtol=1e-12)
    assert out[1] == 0.0 and out[3] == 0.0  # frozen components do not move
    # frozen fast position sits near the (vanishing) average
    assert abs(reduced.initial_value[1]) <= 1e-2


def test_identity_reduction_reproduces_original(rng):
    A = np.array([[0.0, 1.0], [-0.09, 0.0]])
    sys = linear_system(A, [1.0, 0.5], 20.0)
    reduced, model, resolved = auto_model(sys, ModelingOptions(tau=0.25))
    part = TimePartition.uniform(0, 5.0, 0.01)
    full = solve_cg1(sys, part)
    red = solve_cg1(
        dataclasses.replace(reduced.system, initial_value=sys.initial_value), part
    )
    # same dynamics up to the tiny fitted constants
    assert np.max(np.abs(full.states - red.states)) <= 1e-8


def test_all_inactive_model_freezes_everything():
    sys = DynamicalSystem(2, lambda u, t: np.array([u[1], -u[0]]), np.array([1.0, 0.0]), 10.0)
    model = SubgridModel(
        constants=np.zeros(2),
        active=np.array([False, False]),
        tau=0.1,
        fit_window=(0.05, 0.15),
        oscillation_amplitude=np.zeros(2),
        frozen_deviation=np.zeros(2),
    )
    ts = np.linspace(0, 0.2, 201)
    resolved = Trajectory(ts, np.stack([np.cos(ts), -np.sin(ts)], axis=1))
    reduced = build_reduced(sys, model, resolved)
    traj = solve_cg1(reduced.system, TimePartition.uniform(0, 5.0, 0.1))
    np.testing.assert_array_equal(traj.states, np.tile(reduced.initial_value, (51, 1)))


def test_frozen_components_exact_at_all_nodes(stiff_modeling):
    _, _, reduced, model, _ = stiff_modeling
    traj = solve_cg1(reduced.system, TimePartition.uniform(0, 10.0, 0.01))
    for i in np.flatnonzero(~model.active):
        assert np.all(traj.states[:, i] == reduced.initial_value[i])


def test_subgrid_model_invariants():
    with pytest.raises(ValueError, match="zero"):
        SubgridModel(
            constants=np.array([1.0]),
            active=np.array([False]),
            tau=0.1,
            fit_window=(0.05, 0.15),
            oscillation_amplitude=np.zeros(1),
            frozen_deviation=np.zeros(1),
        )


def test_model_report_round_trip(stiff_modeling):
    _, _, reduced, model, _ = stiff_modeling
    text = format_model_report(reduced)
    lines = text.strip().splitlines()
    assert "2 inactive 0" in lines
    assert "4 inactive 0" in lines
    assert any(line.startswith("3 active 0.24") for line in lines)
    parsed, u0 = parse_model_report(text)
    np.testing.assert_array_equal(parsed.constants, model.constants)
    np.testing.assert_array_equal(parsed.active, model.active)
    np.testing.assert_array_equal(parsed.oscillation_amplitude, model.oscillation_amplitude)
    np.testing.assert_array_equal(u0, reduced.initial_value)
    assert parsed.tau == model.tau and parsed.fit_window == model.fit_window


def test_modeling_options_validation():
    with pytest.raises(ValueError):
        ModelingOptions(tau=0.0)
    with pytest.raises(ValueError):
        ModelingOptions(tau=1.0, inactive_tol=-1.0)
    with pytest.raises(ValueError):
        ModelingOptions(tau=1.0, oscillation_factor=0.5)
    assert ModelingOptions(tau=1.0).step == pytest.approx(1.0 / 500.0)
