"""Randomly switched measure-preserving flows and trajectory integration."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .errors import MeshParseError, NumericalError, ValidationError
from .flow import FlowBasis
from .mesh.density import InfoDistribution
from .mesh.geometry import TriMesh

DEFAULT_SWITCH_INTERVAL = 0.5
DEFAULT_DT = 1e-2


@dataclass(frozen=True, eq=False)
class CoefficientSchedule:
    """Piecewise-constant, right-continuous coefficients.

    Row ``k`` applies on ``[switch_times[k], switch_times[k + 1])``.
    """

    switch_times: np.ndarray
    rows: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        t = np.array(self.switch_times, dtype=float)
        r = np.array(self.rows, dtype=float)
        if r.ndim != 2 or len(t) != len(r) or len(t) == 0:
            raise ValidationError("schedule needs one switch time per coefficient row")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValidationError("switch times must start at 0 and increase")
        if not np.all(np.isfinite(r)) or np.any(np.abs(r) > 1.0):
            raise ValidationError("schedule coefficients must lie in [-1, 1]")
        t.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "switch_times", t)
        object.__setattr__(self, "rows", r)

    @property
    def n_fields(self) -> int:
        return self.rows.shape[1]

    def row_index(self, times) -> np.ndarray:
        # small slack so that k*dt landing a hair below a switch time counts as on it
        t = np.asarray(times, dtype=float)
        return np.searchsorted(self.switch_times, t + 1e-9 * (1.0 + np.abs(t)), side="right") - 1

    def row_of_step(self, dt: float, n_steps: int) -> np.ndarray:
        return self.row_index(dt * np.arange(n_steps)).astype(np.int64)

    def per_step(self, dt: float, n_steps: int) -> "CoefficientSchedule":
        """Equivalent schedule with one row per integration step."""
        rows = self.rows[self.row_of_step(dt, n_steps)]
        return CoefficientSchedule(dt * np.arange(n_steps), rows, self.seed)

    def __eq__(self, other):
        if not isinstance(other, CoefficientSchedule):
            return NotImplemented
        return (np.array_equal(self.switch_times, other.switch_times)
                and np.array_equal(self.rows, other.rows))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``(A, S + 1, 2)`` of ``A`` agents sharing one schedule."""

    dt: float
    states: np.ndarray
    schedule: CoefficientSchedule
    vmax: float
    triangles: Optional[np.ndarray] = None

    @property
    def n_agents(self) -> int:
        return self.states.shape[0]

    @property
    def n_steps(self) -> int:
        return self.states.shape[1] - 1

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def flat_states(self) -> np.ndarray:
        return self.states.reshape(-1, 2)

    def min_pairwise_distance(self) -> np.ndarray:
        """Minimum over agent pairs of their distance at every step (``inf`` for one agent)."""
        A = self.n_agents
        if A < 2:
            return np.full(self.n_steps + 1, np.inf)
        d = self.states[:, None] - self.states[None, :]
        dist = np.sqrt((d ** 2).sum(-1))
        iu = np.triu_indices(A, 1)
        return dist[iu].min(axis=0)


def sample_schedule(n_fields: int, horizon: float,
                    switch_interval: float = DEFAULT_SWITCH_INTERVAL,
                    seed: int = 0) -> CoefficientSchedule:
    """``ceil(horizon / switch_interval)`` rows of i.i.d. ``U[-1, 1]`` coefficients."""
    if not switch_interval > 0:
        raise ValidationError("switch_interval must be positive")
    if not horizon > 0 or n_fields < 1:
        raise ValidationError("horizon and n_fields must be positive")
    n_rows = max(1, math.ceil(horizon / switch_interval - 1e-9))
    rng = np.random.default_rng(seed)
    rows = rng.uniform(-1.0, 1.0, size=(n_rows, n_fields))
    return CoefficientSchedule(switch_interval * np.arange(n_rows), rows, seed)


def _steps(horizon, dt):
    if not dt > 0:
        raise ValidationError("dt must be positive")
    n = int(round(horizon / dt))
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValidationError(f"horizon {horizon} is not a positive multiple of dt {dt}")
    return n


def locate_starts(mesh: TriMesh, starts) -> tuple:
    s = np.ascontiguousarray(np.asarray(starts, dtype=float).reshape(-1, 2))
    t = mesh.locate_many(s)
    if np.any(t < 0):
        k = int(np.argmax(t < 0))
        raise ValidationError(f"start point {s[k].tolist()} lies outside the free space")
    return s, t


def integrate(mesh: TriMesh, flow: FlowBasis, schedule: CoefficientSchedule, starts,
              dt: float = DEFAULT_DT, vmax: float = 1.0, horizon: Optional[float] = None
              ) -> Trajectory:
    """Trace ``x' = sum_i u_i(t) v_i(x)`` with speed clamp ``vmax``.

    Inside a triangle the field is constant, so each step is traced exactly
    as a polyline through the triangles it crosses.
    """
    if schedule.n_fields != flow.n_fields:
        raise ValidationError("schedule and flow basis disagree on the number of fields")
    if horizon is None:
        raise ValidationError("horizon is required")
    S = _steps(horizon, dt)
    s, t0 = locate_starts(mesh, starts)
    W_rows = flow.combine(schedule.rows)
    states, tris, worst = _kernels.integrate_rows(
        mesh.bary_coefficients, mesh.adjacency, mesh.triangles, *mesh._fan, W_rows, schedule.row_of_step(dt, S),
        float(vmax), s, t0, float(dt))
    if worst != _kernels.TRACE_OK:
        raise NumericalError(f"tracer failed (status {worst})")
    return Trajectory(float(dt), states, schedule, float(vmax), tris)


def sample_points(mesh: TriMesh, n: int, rng: np.random.Generator) -> np.ndarray:
    """Area-uniform random points in the free space."""
    t = rng.choice(mesh.n_triangles, size=n, p=mesh.areas / mesh.area)
    r = rng.random((n, 2))
    flip = r.sum(1) > 1
    r[flip] = 1 - r[flip]
    p = mesh.vertices[mesh.triangles[t]]
    return p[:, 0] + r[:, :1] * (p[:, 1] - p[:, 0]) + r[:, 1:] * (p[:, 2] - p[:, 0])


def support_triangles(mesh: TriMesh, p: InfoDistribution) -> np.ndarray:
    return p.density[mesh.triangles].mean(axis=1) > p.floor


def connectivity_check(mesh: TriMesh, p: InfoDistribution) -> bool:
    """True iff the triangles whose centroid density exceeds the floor form one component."""
    keep = support_triangles(mesh, p)
    if not keep.any():
        return False
    idx = np.flatnonzero(keep)
    sub = -np.ones(mesh.n_triangles, dtype=np.int64)
    sub[idx] = np.arange(len(idx))
    adj = mesh.adjacency[idx]
    rows, cols = np.nonzero(adj >= 0)
    nb = adj[rows, cols]
    ok = keep[nb]
    g = coo_matrix((np.ones(int(ok.sum())), (rows[ok], sub[nb[ok]])), shape=(len(idx),) * 2)
    ncomp, _ = connected_components(g, directed=False)
    return ncomp == 1


support_connected = connectivity_check


# ------------------------------------------------------------ CSV
def trajectory_csv(traj: Trajectory) -> str:
    lines = ["t,agent,x,y"]
    times = traj.times
    for k in range(traj.n_steps + 1):
        for a in range(traj.n_agents):
            x, y = traj.states[a, k]
            lines.append(f"{times[k]:.11e},{a},{x:.11e},{y:.11e}")
    return "\n".join(lines) + "\n"


def schedule_csv(schedule: CoefficientSchedule) -> str:
    n = schedule.n_fields
    lines = ["t_start," + ",".join(f"u_{i + 1}" for i in range(n))]
    for t, row in zip(schedule.switch_times.tolist(), schedule.rows.tolist()):
        lines.append(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def parse_trajectory_csv(text: str) -> np.ndarray:
    """States ``(A, S + 1, 2)`` from trajectory CSV text."""
    lines = text.strip().splitlines()
    if not lines or lines[0].strip() != "t,agent,x,y":
        raise MeshParseError("expected header 't,agent,x,y'", line=1)
    rows = []
    for no, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        try:
            rows.append((float(parts[0]), int(parts[1]), float(parts[2]), float(parts[3])))
        except (ValueError, IndexError):
            raise MeshParseError(f"bad trajectory row {line!r}", line=no) from None
    A = max(r[1] for r in rows) + 1
    if len(rows) % A:
        raise ValidationError("trajectory CSV rows are not a whole number of steps")
    arr = np.array([(r[2], r[3]) for r in rows]).reshape(-1, A, 2)
    return arr.transpose(1, 0, 2).copy()


def parse_schedule_csv(text: str) -> CoefficientSchedule:
    lines = text.strip().splitlines()
    if not lines or not lines[0].startswith("t_start"):
        raise MeshParseError("expected header starting with 't_start'", line=1)
    vals = []
    for no, line in enumerate(lines[1:], start=2):
        try:
            vals.append([float(v) for v in line.split(",")])
        except ValueError:
            raise MeshParseError(f"bad schedule row {line!r}", line=no) from None
    arr = np.array(vals)
    return CoefficientSchedule(arr[:, 0], arr[:, 1:])


def write_text(path, text: str) -> None:
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)
