"""Ergodic trajectory optimization by linearized SOCP steps.

Each outer iteration linearizes the flow-following dynamics around the
current trajectory, solves a small SOCP for a state change ``dx`` that
tracks a descent step of the ergodic metric while keeping the linearized
dynamics and the per-step speed cones, applies the coefficient change ``du``
and re-integrates the true dynamics from the fixed starts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import NumericalError, SolverNotConverged, ValidationError
from .fem import FemMatrices
from .flow import FlowBasis
from .metric import ErgodicMetric
from .mesh.geometry import TriMesh
from .sampler import CoefficientSchedule, Trajectory, locate_starts
from .socp import ConvexSet, SocpProblem, solve_socp

MAX_HALVINGS = 8


@dataclass
class ErgodicProblem:
    """Optimization instance.

    ``cone_slack`` widens the speed cones to ``vmax * dt * (1 + cone_slack)``;
    with a saturated speed clamp the linearized dynamics only allow state
    changes orthogonal to the motion, which a zero-slack cone would reject.
    """

    mesh: TriMesh
    flow: FlowBasis
    metric: ErgodicMetric
    starts: np.ndarray
    n_steps: int
    dt: float = 0.05
    vmax: float = 1.0
    eta: float = 0.1
    kappa: float = 1e-3
    max_iter: int = 100
    socp_tol: float = 1e-7
    socp_max_iter: int = 50_000
    cone_slack: float = 0.05
    stall_window: int = 5
    stall_rtol: float = 1e-6
    state_jacobian: str = "exact"

    def __post_init__(self):
        self.starts = np.ascontiguousarray(np.asarray(self.starts, dtype=float).reshape(-1, 2))
        if not self.eta > 0:
            raise ValidationError("eta must be positive")
        if not self.kappa >= 0:
            raise ValidationError("kappa must be nonnegative")
        if not self.dt > 0 or not self.vmax > 0:
            raise ValidationError("dt and vmax must be positive")
        if self.n_steps < 2:
            raise ValidationError("the horizon needs at least two steps")
        if self.state_jacobian not in ("exact", "identity"):
            raise ValidationError("state_jacobian must be 'exact' or 'identity'")
        if self.flow.mesh_hash != self.mesh.content_hash:
            raise ValidationError("flow basis was built on a different mesh")

    @property
    def n_agents(self) -> int:
        return len(self.starts)

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt


@dataclass
class IterationReport:
    iteration: int
    E: float
    accepted: bool
    eta: float
    residuals: dict = field(default_factory=dict)
    wall_time: float = 0.0
    socp_iterations: int = 0


@dataclass
class _Rollout:
    U: np.ndarray
    states: np.ndarray
    tris: np.ndarray
    Jx: np.ndarray
    Ju: np.ndarray


def _rollout(problem: ErgodicProblem, U: np.ndarray) -> _Rollout:
    mesh = problem.mesh
    s, t0 = locate_starts(mesh, problem.starts)
    W = problem.flow.combine(U)
    vel = np.ascontiguousarray(problem.flow.velocity)
    states, tris, Jx, Ju, worst = _kernels.integrate_with_jacobians(
        mesh.bary_coefficients, mesh.adjacency, mesh.triangles, *mesh._fan, W, vel,
        np.ascontiguousarray(U), float(problem.vmax), s, t0, float(problem.dt))
    if worst != _kernels.TRACE_OK:
        raise NumericalError(f"tracer failed (status {worst})")
    return _Rollout(U, states, tris, Jx, Ju)


def linearize_dynamics(mesh: TriMesh, flow: FlowBasis, x, u, dt: float, vmax: float = 1.0):
    """One-step map ``f(x, u)`` with Jacobians ``df/dx`` (2, 2) and ``df/du`` (2, n).

    The map is the same exact tracer used by the sampler; derivatives are its
    tangent-linear model (edge-crossing times included).
    """
    x = np.asarray(x, dtype=float).reshape(1, 2)
    u = np.asarray(u, dtype=float).reshape(1, -1)
    s, t0 = locate_starts(mesh, x)
    W = flow.combine(u)
    states, _, Jx, Ju, worst = _kernels.integrate_with_jacobians(
        mesh.bary_coefficients, mesh.adjacency, mesh.triangles, *mesh._fan, W,
        np.ascontiguousarray(flow.velocity), np.ascontiguousarray(u), float(vmax), s, t0,
        float(dt))
    if worst != _kernels.TRACE_OK:
        raise NumericalError(f"tracer failed (status {worst})")
    return states[0, 1], Jx[0, 0], Ju[0, 0]


def build_subproblem(problem: ErgodicProblem, ro: _Rollout):
    """SOCP data ``(P, A, C)`` for the step around rollout ``ro``.

    Variables are ``dx`` for every agent and time (start included) followed
    by ``du`` for every step.  The linear term ``q`` is set per step size.
    """
    A_, S1, _ = ro.states.shape
    S = S1 - 1
    n = ro.U.shape[1]
    nx = A_ * S1 * 2
    nu = S * n
    N = nx + nu

    def xi(a, t, d):
        return (a * S1 + t) * 2 + d

    rows, cols, vals = [], [], []
    row = 0
    # starts are fixed
    a_idx = np.repeat(np.arange(A_), 2)
    d_idx = np.tile(np.arange(2), A_)
    k = np.arange(2 * A_)
    rows.append(row + k); cols.append(xi(a_idx, 0, d_idx)); vals.append(np.ones(2 * A_))
    row += 2 * A_
    n_eq_start = row

    # linearized dynamics dx[t+1] - Jx dx[t] - Ju du[t] = 0
    a, t, d = np.meshgrid(np.arange(A_), np.arange(S), np.arange(2), indexing="ij")
    a, t, d = a.ravel(), t.ravel(), d.ravel()
    r = row + np.arange(len(a))
    rows.append(r); cols.append(xi(a, t + 1, d)); vals.append(np.ones(len(a)))
    Jx = ro.Jx if problem.state_jacobian == "exact" else np.broadcast_to(np.eye(2), ro.Jx.shape)
    for e in range(2):
        rows.append(r); cols.append(xi(a, t, e)); vals.append(-Jx[a, t, d, e])
    for i in range(n):
        rows.append(r); cols.append(nx + t * n + i); vals.append(-ro.Ju[a, t, d, i])
    row += len(a)
    n_eq = row

    # speed cones on dx[t+1] - dx[t], centred at minus the current displacement
    rows.append(row + np.arange(len(a))); cols.append(xi(a, t + 1, d)); vals.append(np.ones(len(a)))
    rows.append(row + np.arange(len(a))); cols.append(xi(a, t, d)); vals.append(-np.ones(len(a)))
    ball_rows = (row + np.arange(len(a))).reshape(-1, 2)
    disp = (ro.states[:, 1:] - ro.states[:, :-1]).reshape(-1, 2)
    row += len(a)

    # coefficient boxes u + du in [-1, 1]
    rows.append(row + np.arange(nu)); cols.append(nx + np.arange(nu)); vals.append(np.ones(nu))
    row += nu

    Amat = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(row, N))
    lower = np.zeros(row)
    upper = np.zeros(row)
    Uf = ro.U.ravel()
    lower[row - nu:] = -1.0 - Uf
    upper[row - nu:] = 1.0 - Uf
    lower[row - nu:] = np.minimum(lower[row - nu:], 0.0)
    upper[row - nu:] = np.maximum(upper[row - nu:], 0.0)
    radius = problem.vmax * problem.dt * (1.0 + problem.cone_slack)
    radius = np.maximum(radius, np.linalg.norm(disp, axis=1))
    C = ConvexSet(lower, upper, ball_rows, -disp, radius)
    pdiag = np.concatenate([np.full(nx, 2.0), np.full(nu, 2.0 * problem.kappa)])
    P = sp.diags(pdiag).tocsc()
    return P, Amat, C, nx


def _target(grad, eta):
    scale = np.max(np.abs(grad))
    return -eta * grad / scale


def descend(problem: ErgodicProblem, initial: Trajectory,
            callback=None) -> tuple:
    """Minimize the ergodic metric starting from ``initial``.

    Returns ``(best trajectory, reports)``.  The returned trajectory uses one
    coefficient row per step.
    """
    S = problem.n_steps
    if initial.n_agents != problem.n_agents or not np.array_equal(initial.states[:, 0],
                                                                  problem.starts):
        raise ValidationError("initial trajectory starts do not match the problem")
    if initial.n_steps != S or abs(initial.dt - problem.dt) > 1e-15:
        raise ValidationError("initial trajectory must use the problem's dt and step count")
    U0 = np.array(initial.schedule.per_step(problem.dt, S).rows)
    cur = _rollout(problem, U0)
    if np.max(np.abs(cur.states - initial.states)) > 1e-9:
        raise ValidationError("initial trajectory is not consistent with its schedule")
    E, g = problem.metric.value_and_gradient(cur.states)
    reports: List[IterationReport] = []
    history = [E]
    t_start = time.perf_counter()
    eta = problem.eta
    for it in range(problem.max_iter):
        if not np.any(g):
            break
        P, Amat, C, nx = build_subproblem(problem, cur)
        q0 = np.zeros(P.shape[0])
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            q = q0.copy()
            q[:nx] = -2.0 * _target(g, eta).ravel()
            try:
                res = solve_socp(SocpProblem(P, q, Amat, C), tol=problem.socp_tol,
                                 max_iter=problem.socp_max_iter)
            except SolverNotConverged as exc:
                reports.append(IterationReport(it, E, False, eta, exc.residuals or {},
                                               time.perf_counter() - t_start))
                eta *= 0.5
                continue
            du = res.z[nx:].reshape(S, -1)
            U_new = np.clip(cur.U + du, -1.0, 1.0)
            cand = _rollout(problem, U_new)
            E_new, g_new = problem.metric.value_and_gradient(cand.states)
            ok = E_new < E
            reports.append(IterationReport(it, E_new if ok else E, ok, eta, res.residuals,
                                           time.perf_counter() - t_start, res.iterations))
            if ok:
                cur, E, g = cand, E_new, g_new
                eta = problem.eta
                accepted = True
                break
            eta *= 0.5
        if callback is not None:
            callback(reports[-1] if reports else None)
        if not accepted:
            break
        history.append(E)
        w = problem.stall_window
        if len(history) > w and (history[-1 - w] - E) <= problem.stall_rtol * history[-1 - w]:
            break
    sched = CoefficientSchedule(problem.dt * np.arange(S), cur.U, initial.schedule.seed)
    traj = Trajectory(problem.dt, cur.states, sched, problem.vmax, cur.tris)
    return traj, reports
