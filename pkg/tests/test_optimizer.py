import numpy as np
import pytest

from ergoflow import optimizer
from ergoflow.errors import ValidationError
from ergoflow.optimizer import (ErgodicProblem, _rollout, build_subproblem, descend,
                                linearize_dynamics)
from ergoflow.sampler import CoefficientSchedule, integrate, sample_schedule
from ergoflow.socp import SocpProblem, solve_socp


def test_linearize_at_zero_field(square):
    x = np.array([0.33, 0.47])
    f, Jx, Ju = linearize_dynamics(square.mesh, square.flow, x, np.zeros(8), 0.05)
    assert np.array_equal(f, x)
    assert np.array_equal(Jx, np.eye(2))
    t = square.mesh.locate_many(x[None])[0]
    assert np.allclose(Ju, 0.05 * square.flow.velocity[:, t].T, rtol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_one_step_matches_integrate_exactly(square, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.1, 0.9, 2)
    u = rng.uniform(-1, 1, 8)
    f, _, _ = linearize_dynamics(square.mesh, square.flow, x, u, 0.05)
    tr = integrate(square.mesh, square.flow, CoefficientSchedule(np.array([0.0]), u[None]),
                   [x], 0.05, 1.0, 0.05)
    assert np.array_equal(f, tr.states[0, 1])


@pytest.mark.parametrize("seed", range(4))
def test_control_jacobian_matches_differences(square, seed):
    rng = np.random.default_rng(10 + seed)
    x = rng.uniform(0.2, 0.8, 2)
    u = 0.05 * rng.uniform(-1, 1, 8)  # below the speed clamp
    _, _, Ju = linearize_dynamics(square.mesh, square.flow, x, u, 0.01)
    h = 1e-6
    fd = np.zeros((2, 8))
    for i in range(8):
        up, um = u.copy(), u.copy()
        up[i] += h
        um[i] -= h
        fd[:, i] = (linearize_dynamics(square.mesh, square.flow, x, up, 0.01)[0]
                    - linearize_dynamics(square.mesh, square.flow, x, um, 0.01)[0]) / (2 * h)
    assert np.linalg.norm(Ju - fd) / np.linalg.norm(fd) < 1e-5


def _problem(s, S=20, **kw):
    return ErgodicProblem(s.mesh, s.flow, s.metric, [(0.5, 0.5)], S, 0.05, **kw)


def _seed(s, S=20, seed=0, starts=((0.5, 0.5),)):
    return integrate(s.mesh, s.flow, sample_schedule(8, S * 0.05, 0.5, seed), list(starts),
                     0.05, 1.0, S * 0.05)


def test_subproblem_feasible_and_solvable(square):
    pr = _problem(square)
    ro = _rollout(pr, np.array(_seed(square).schedule.per_step(0.05, 20).rows))
    P, A, C, nx = build_subproblem(pr, ro)
    q = np.zeros(P.shape[0])
    q[:nx] = np.random.default_rng(0).normal(size=nx)
    res = solve_socp(SocpProblem(P, q, A, C), tol=1e-9)
    assert res.residuals["primal"] < 1e-6
    assert np.all(res.z[:2] == pytest.approx(0.0, abs=1e-7))  # start fixed
    # zero step satisfies every constraint
    Az = A @ np.zeros(P.shape[0])
    assert np.allclose(C.project(Az), Az)


def test_rollout_consistent_with_sampler(square):
    tr = _seed(square, seed=3)
    pr = _problem(square)
    ro = _rollout(pr, np.array(tr.schedule.per_step(0.05, 20).rows))
    assert np.array_equal(ro.states, tr.states)


def test_stationary_input_returned_unchanged(square, monkeypatch):
    tr = _seed(square)
    pr = _problem(square)
    monkeypatch.setattr(pr.metric, "value_and_gradient",
                        lambda traj: (0.0, np.zeros_like(np.asarray(getattr(traj, "states", traj)))))
    out, reports = descend(pr, tr)
    assert np.array_equal(out.states, tr.states)
    assert not any(r.accepted for r in reports)


def test_descent_is_monotone_and_feasible(square):
    tr = _seed(square, S=40, seed=1)
    pr = _problem(square, S=40, max_iter=15, eta=0.5, kappa=1e-2)
    E0 = square.metric.value(tr)
    out, reports = descend(pr, tr)
    acc = [r.E for r in reports if r.accepted]
    assert acc, "no step was accepted"
    assert np.all(np.diff([E0] + acc) < 0)
    assert square.metric.value(out) == pytest.approx(acc[-1], rel=1e-12)
    assert np.all(square.mesh.locate_many(out.states.reshape(-1, 2)) >= 0)
    step = np.linalg.norm(np.diff(out.states, axis=1), axis=2)
    assert np.all(step <= 0.05 * (1 + 1e-9))
    # flow-following: re-integrating the returned schedule reproduces the states
    again = integrate(square.mesh, square.flow, out.schedule, [(0.5, 0.5)], 0.05, 1.0, 2.0)
    assert np.sqrt(np.mean((again.states - out.states) ** 2)) < 1e-9
    for r in reports:
        if r.accepted:
            assert r.residuals["relative_gap"] < 1e-5


def test_multi_agent_descent_keeps_agents_apart(square):
    starts = ((0.3, 0.3), (0.7, 0.7), (0.5, 0.2))
    tr = _seed(square, S=20, seed=2, starts=starts)
    pr = ErgodicProblem(square.mesh, square.flow, square.metric, starts, 20, 0.05,
                        max_iter=5, eta=0.5, kappa=1e-2)
    out, _ = descend(pr, tr)
    assert np.all(out.min_pairwise_distance() > 0)
    assert square.metric.value(out) <= square.metric.value(tr)


def test_problem_validation(square):
    with pytest.raises(ValidationError):
        _problem(square, eta=0.0)
    with pytest.raises(ValidationError):
        _problem(square, kappa=-1.0)
    with pytest.raises(ValidationError):
        _problem(square, S=1)
    with pytest.raises(ValidationError):
        _problem(square, state_jacobian="numeric")
    pr = _problem(square)
    with pytest.raises(ValidationError):
        descend(pr, _seed(square, S=10))
    with pytest.raises(ValidationError):
        descend(pr, _seed(square, starts=((0.4, 0.4),)))


def test_identity_jacobian_option_builds(square):
    pr = _problem(square, state_jacobian="identity")
    ro = _rollout(pr, np.array(_seed(square).schedule.per_step(0.05, 20).rows))
    P, A, C, nx = build_subproblem(pr, ro)
    assert A.shape[1] == P.shape[0] == nx + 20 * 8
    assert optimizer.MAX_HALVINGS == 8
