"""Picard iteration, the regularization ladder, and their bookkeeping."""

import csv
import math

import numpy as np
import pytest

from vacflow.fields import Grid, ScalarField, VectorField
from vacflow.fixedpoint import (
    ContinuationError,
    EtaSchedule,
    PicardIteration,
    PicardTrace,
    eta_continuation,
    fixed_point_residual,
    picard_solve,
    trajectory_distance,
    trajectory_gap,
    window_scan,
    write_trace_csv,
)
from vacflow.initial_data import reform_state_from_density
from vacflow.linearized import Trajectory
from vacflow.operators import ReformState
from vacflow.params import validate_params


def soft_params():
    return validate_params(A=1.0, gamma=2.0, alpha=1.0, beta=-0.1,
                           delta1=1.5, delta2=2.5)


def positive_state(n=64):
    g = Grid(dim=1, n=n, box_length=2.0 * np.pi)
    x = g.coordinates[0]
    rho = ScalarField(g, 0.5 + 0.2 * np.cos(x))
    u = VectorField(g, 0.1 * np.sin(x)[None, :])
    return reform_state_from_density(rho, u, soft_params())


def zero_state(n=16):
    g = Grid(dim=1, n=n, box_length=2.0 * np.pi)
    return ReformState(
        vphi=ScalarField(g, np.zeros(n)),
        phi=ScalarField(g, np.zeros(n)),
        u=VectorField(g, np.zeros((1, n))),
    )


def test_picard_validates_window_and_iteration_budget():
    p = soft_params()
    with pytest.raises(ValueError, match="t_window"):
        picard_solve(zero_state(), p, 0.5, 0.0)
    with pytest.raises(ValueError, match="max_iter"):
        picard_solve(zero_state(), p, 0.5, 0.1, max_iter=0)


def test_zero_data_converges_in_one_iteration_with_zero_metric():
    traj, trace = picard_solve(zero_state(), soft_params(), 0.5, 0.01)
    assert trace.converged
    assert trace.final_k == 1
    assert trace.final_S == 0.0
    assert traj.final.phi.linf() == 0.0
    assert traj.final.u.linf() == 0.0


def test_picard_contracts_geometrically_on_smooth_data():
    init = positive_state()
    traj, trace = picard_solve(init, soft_params(), 0.25, 0.005,
                               picard_tol=1e-16, max_iter=8)
    positives = [it.S_k for it in trace.iterations if it.S_k > 0.0]
    assert len(positives) >= 3
    ratio = trace.geometric_ratio()
    assert 0.0 < ratio < 0.5
    for a, b in zip(positives, positives[1:]):
        assert b < a


def test_fixed_point_residual_small_after_convergence():
    init = positive_state()
    tol = 1e-12
    traj, trace = picard_solve(init, soft_params(), 0.25, 0.005,
                               picard_tol=tol)
    assert trace.converged
    res = fixed_point_residual(traj, init, soft_params(), 0.25)
    assert res <= 10.0 * tol


def test_trace_validation_and_fitted_ratio():
    rows = tuple(
        PicardIteration(k=k, S_k=4.0**-k, linf_delta=0.0, wall_time=0.0)
        for k in range(1, 5)
    )
    trace = PicardTrace(iterations=rows, converged=True, final_k=4)
    assert trace.geometric_ratio() == pytest.approx(0.25, rel=1e-12)
    assert trace.final_S == 4.0**-4
    with pytest.raises(ValueError, match="negative"):
        PicardTrace(
            iterations=(PicardIteration(k=1, S_k=-1.0, linf_delta=0.0,
                                        wall_time=0.0),),
            converged=False, final_k=1,
        )
    short = PicardTrace(
        iterations=(PicardIteration(k=1, S_k=0.5, linf_delta=0.0,
                                    wall_time=0.0),),
        converged=True, final_k=1,
    )
    assert math.isnan(short.geometric_ratio())


def test_trace_csv_columns_and_optional_timing(tmp_path):
    rows = tuple(
        PicardIteration(k=k, S_k=10.0**-k, linf_delta=2.0 * 10.0**-k,
                        wall_time=0.125)
        for k in (1, 2)
    )
    trace = PicardTrace(iterations=rows, converged=True, final_k=2)

    plain = tmp_path / "trace.csv"
    write_trace_csv(trace, plain)
    with open(plain, newline="") as fh:
        got = list(csv.reader(fh))
    assert got[0] == ["k", "S_k", "linf_delta"]
    assert len(got) == 3
    assert float(got[1][1]) == 0.1
    assert float(got[2][2]) == 0.02

    timed = tmp_path / "timed.csv"
    write_trace_csv(trace, timed, include_timing=True)
    with open(timed, newline="") as fh:
        got = list(csv.reader(fh))
    assert got[0][-1] == "wall_time"


def test_trajectory_gap_separates_the_two_blocks():
    g = Grid(dim=1, n=16, box_length=1.0)
    mk = lambda c: ReformState(
        vphi=ScalarField(g, np.full(16, c)),
        phi=ScalarField(g, np.zeros(16)),
        u=VectorField(g, np.zeros((1, 16))),
    )
    a = Trajectory(states=[mk(0.0), mk(0.0)], times=[0.0, 1.0])
    b = Trajectory(states=[mk(0.0), mk(0.5)], times=[0.0, 1.0])
    w_sq, v_sq, linf = trajectory_gap(a, b)
    assert w_sq == 0.0
    assert v_sq == pytest.approx(0.25, rel=1e-12)  # |0.5|^2 * volume 1
    assert linf == 0.5
    assert trajectory_distance(a, b) == pytest.approx(0.5, rel=1e-12)


def test_trajectory_gap_rejects_mismatched_time_grids():
    g = Grid(dim=1, n=16, box_length=1.0)
    z = ReformState(
        vphi=ScalarField(g, np.zeros(16)),
        phi=ScalarField(g, np.zeros(16)),
        u=VectorField(g, np.zeros((1, 16))),
    )
    a = Trajectory(states=[z, z], times=[0.0, 1.0])
    b = Trajectory(states=[z, z], times=[0.0, 2.0])
    with pytest.raises(ValueError, match="time grids"):
        trajectory_gap(a, b)


def test_eta_schedule_validation_and_levels():
    s = EtaSchedule(eta0=0.5, factor=0.5, max_levels=4, cauchy_tol=1e-6)
    assert s.levels() == [0.5, 0.25, 0.125, 0.0625]
    with pytest.raises(ValueError, match="eta0"):
        EtaSchedule(eta0=0.0, factor=0.5, max_levels=4, cauchy_tol=1e-6)
    with pytest.raises(ValueError, match="factor"):
        EtaSchedule(eta0=0.5, factor=1.0, max_levels=4, cauchy_tol=1e-6)
    with pytest.raises(ValueError, match="max_levels"):
        EtaSchedule(eta0=0.5, factor=0.5, max_levels=0, cauchy_tol=1e-6)
    with pytest.raises(ValueError, match="cauchy_tol"):
        EtaSchedule(eta0=0.5, factor=0.5, max_levels=4, cauchy_tol=0.0)


def test_single_level_continuation_equals_direct_picard():
    init = positive_state(n=32)
    p = soft_params()
    sched = EtaSchedule(eta0=0.25, factor=0.5, max_levels=1, cauchy_tol=1e-9)
    traj_c, report = eta_continuation(init, p, sched, 0.004)
    traj_d, _ = picard_solve(init, p, 0.25, 0.004)
    assert len(report.levels) == 1
    assert math.isnan(report.levels[0].distance)
    assert report.distances == []
    assert not report.reached_tol
    assert np.array_equal(traj_c.final.phi.values, traj_d.final.phi.values)
    assert np.array_equal(traj_c.final.u.values, traj_d.final.u.values)
    assert np.array_equal(traj_c.final.vphi.values, traj_d.final.vphi.values)


def test_continuation_limit_matches_the_unregularized_solve():
    init = positive_state()
    p = soft_params()
    cauchy_tol = 1e-4
    sched = EtaSchedule(eta0=0.5, factor=0.5, max_levels=20,
                        cauchy_tol=cauchy_tol)
    traj, report = eta_continuation(init, p, sched, 0.005, picard_tol=1e-12)
    assert report.reached_tol
    assert report.distances == sorted(report.distances, reverse=True)
    direct, _ = picard_solve(init, p, 0.0, 0.005, picard_tol=1e-12)
    assert trajectory_distance(traj, direct) <= 2.0 * cauchy_tol


def test_failed_level_raises_with_its_index():
    init = positive_state(n=32)
    sched = EtaSchedule(eta0=0.5, factor=0.5, max_levels=3, cauchy_tol=1e-9)
    with pytest.raises(ContinuationError, match="no convergence") as err:
        eta_continuation(init, soft_params(), sched, 0.004,
                         picard_tol=0.0, max_iter=1)
    assert err.value.level == 0


def test_window_scan_stops_at_the_first_failure():
    init = positive_state(n=32)
    p = soft_params()
    rows = window_scan(init, p, 0.25, 0.002, doublings=2,
                       picard_tol=1e-10, max_iter=20)
    assert len(rows) == 3
    assert all(r.converged for r in rows)
    assert [r.t_window for r in rows] == [0.002, 0.004, 0.008]

    rows = window_scan(init, p, 0.25, 0.002, doublings=3,
                       picard_tol=0.0, max_iter=1)
    assert len(rows) == 1
    assert not rows[0].converged
