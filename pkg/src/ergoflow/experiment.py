"""Experiment configuration and the cached mesh-to-report pipeline.

A config is an INI file with sections ``[map]``, ``[distribution]``,
``[planner]`` and ``[run]``.  Intermediate results are cached under
``<out>/cache`` in files named by a hash of everything they depend on, and
each cache file carries a sha256 trailer so that corrupted entries are
detected and recomputed.  Output files are only rewritten when their bytes
change.
"""

from __future__ import annotations

import configparser
import hashlib
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, replace
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ErgoflowError, ValidationError
from .fem import assemble, solve_eigenbasis
from .flow import DEFAULT_N_FIELDS, build_flow_basis, circulation_streams, field_csv
from .mesh.density import DistributionSpec, build_distribution
from .mesh.io import parse_mesh
from .mesh.maps import MAP_KINDS, MapSpec, generate_map
from .metric import (DEFAULT_K_TRUNC, ErgodicMetric, MetricSpec, build_fourier_metric,
                     metric_csv_header)
from .optimizer import ErgodicProblem, descend
from .sampler import (DEFAULT_SWITCH_INTERVAL, CoefficientSchedule, Trajectory, integrate,
                      parse_schedule_csv, sample_schedule, schedule_csv, trajectory_csv)

log = logging.getLogger(__name__)

RUNS_HEADER = ("map,case,agents,seed,restart,metric_LB_initial,metric_LB,metric_F,"
               "min_distance,iterations,accepted")
CACHE_VERSION = "1"


# ------------------------------------------------------------ config
def _floats(text, what):
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise ValidationError(f"{what}: expected numbers, got {text!r}") from None


def _points(text, what):
    pts = []
    for chunk in text.split(";"):
        if chunk.strip():
            xy = _floats(chunk, what)
            if len(xy) != 2:
                raise ValidationError(f"{what}: each point needs two coordinates, got {chunk!r}")
            pts.append(xy)
    return tuple(pts)


@dataclass(frozen=True)
class PlannerSettings:
    agents: int = 1
    starts: tuple = ((0.5, 0.5),)
    horizon: float = 5.0
    dt: float = 0.05
    vmax: float = 1.0
    n_fields: int = DEFAULT_N_FIELDS
    switch_interval: float = DEFAULT_SWITCH_INTERVAL
    K_trunc: int = DEFAULT_K_TRUNC
    fourier_modes: int = DEFAULT_K_TRUNC
    eta: float = 0.5
    kappa: float = 1e-2
    max_iter: int = 100
    socp_tol: float = 1e-7
    restarts: int = 1
    candidates: int = 1
    circulation: bool = True
    optimize: bool = True

    def validate(self):
        if self.agents < 1:
            raise ValidationError("agents must be at least 1")
        if len(self.starts) != self.agents:
            raise ValidationError(f"{self.agents} agents but {len(self.starts)} start points")
        for name in ("horizon", "dt", "vmax", "switch_interval", "eta", "socp_tol"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValidationError(f"{name} must be positive and finite, got {v}")
        n = int(round(self.horizon / self.dt))
        if n < 2 or abs(n * self.dt - self.horizon) > 1e-9 * max(1.0, self.horizon):
            raise ValidationError("horizon must be a multiple of dt with at least two steps")
        if not self.kappa >= 0:
            raise ValidationError("kappa must be nonnegative")
        for name in ("n_fields", "K_trunc", "fourier_modes", "max_iter", "restarts",
                     "candidates"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be at least 1")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass(frozen=True)
class ExperimentConfig:
    map_spec: MapSpec
    distribution: DistributionSpec
    planner: PlannerSettings
    seeds: tuple = (0,)
    out_dir: str = "out"
    case: str = ""

    def validate(self):
        self.map_spec.validate()
        self.distribution.validate()
        self.planner.validate()
        if not self.seeds:
            raise ValidationError("at least one seed is required")
        if any(s < 0 for s in self.seeds):
            raise ValidationError("seeds must be nonnegative")
        return self

    @property
    def case_name(self) -> str:
        return self.case or self.distribution.kind

    @property
    def stem(self) -> str:
        return f"{self.map_spec.kind}_{self.case_name}_{self.planner.agents}a"

    def with_overrides(self, seed: Optional[int] = None, out_dir: Optional[str] = None):
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seeds=(int(seed),))
        if out_dir is not None:
            cfg = replace(cfg, out_dir=os.fspath(out_dir))
        return cfg.validate()


_MAP_KEYS = {
    "kind": str, "h": float, "side": float, "wall_thickness": float, "room_radius": float,
    "corridor_length": float, "corridor_width": float, "corridor_offset": float,
    "cshape_slot_x": float, "cshape_slot_y0": float, "cshape_slot_y1": float,
}
_PLANNER_KEYS = {
    "agents": int, "horizon": float, "dt": float, "vmax": float, "n_fields": int,
    "switch_interval": float, "k_trunc": int, "fourier_modes": int, "eta": float,
    "kappa": float, "max_iter": int, "socp_tol": float, "restarts": int, "candidates": int,
}
_PLANNER_FLAGS = ("optimize", "circulation")


def _convert(section, key, typ, text):
    try:
        return typ(text)
    except ValueError:
        raise ValidationError(f"[{section}] {key}: cannot parse {text!r}") from None


def parse_config(text: str, base_dir: str = ".") -> ExperimentConfig:
    """Parse INI text; relative output directories resolve against ``base_dir``."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"config is not valid INI: {exc}") from None
    for sec in cp.sections():
        if sec not in ("map", "distribution", "planner", "run"):
            raise ValidationError(f"unknown config section [{sec}]")
    if not cp.has_section("map"):
        raise ValidationError("config needs a [map] section")

    m = dict(cp["map"])
    kw = {}
    for k, v in m.items():
        if k == "maze_cells":
            cells = _floats(v, "maze_cells")
            if len(cells) != 2 or any(c != int(c) for c in cells):
                raise ValidationError("maze_cells needs two integers")
            kw[k] = (int(cells[0]), int(cells[1]))
        elif k in _MAP_KEYS:
            kw[k] = _convert("map", k, _MAP_KEYS[k], v)
        else:
            raise ValidationError(f"[map] unknown key {k!r}")
    if "kind" not in kw or "h" not in kw:
        raise ValidationError("[map] needs kind and h")
    if kw["kind"] not in MAP_KINDS:
        raise ValidationError(f"[map] unknown kind {kw['kind']!r}")
    map_spec = MapSpec(**kw)

    d = dict(cp["distribution"]) if cp.has_section("distribution") else {}
    dkw = {"kind": d.pop("kind", "uniform")}
    if "centers" in d:
        dkw["centers"] = _points(d.pop("centers"), "centers")
    for k in ("sigmas", "weights"):
        if k in d:
            dkw[k] = _floats(d.pop(k), k)
    if "covariances" in d:
        flat = _floats(d.pop("covariances"), "covariances")
        if len(flat) % 4:
            raise ValidationError("covariances need four numbers per component")
        dkw["covariances"] = tuple(tuple(flat[i:i + 4]) for i in range(0, len(flat), 4))
    if d:
        raise ValidationError(f"[distribution] unknown keys {sorted(d)}")
    dist = DistributionSpec(**dkw)

    p = dict(cp["planner"]) if cp.has_section("planner") else {}
    pkw = {}
    starts = p.pop("starts", None)
    flags = {k: p.pop(k) for k in _PLANNER_FLAGS if k in p}
    for k, v in p.items():
        if k not in _PLANNER_KEYS:
            raise ValidationError(f"[planner] unknown key {k!r}")
        pkw["K_trunc" if k == "k_trunc" else k] = _convert("planner", k, _PLANNER_KEYS[k], v)
    if starts is not None:
        pkw["starts"] = _points(starts, "starts")
    for k, v in flags.items():
        flag = v.strip().lower()
        if flag not in ("true", "false", "yes", "no", "1", "0"):
            raise ValidationError(f"[planner] {k} must be a boolean, got {v!r}")
        pkw[k] = flag in ("true", "yes", "1")
    if "starts" in pkw and "agents" not in pkw:
        pkw["agents"] = len(pkw["starts"])
    if "fourier_modes" not in pkw and "K_trunc" in pkw:
        pkw["fourier_modes"] = pkw["K_trunc"]
    planner = PlannerSettings(**pkw)

    r = dict(cp["run"]) if cp.has_section("run") else {}
    seeds = r.pop("seeds", "0")
    try:
        seed_list = tuple(int(s) for s in seeds.replace(",", " ").split())
    except ValueError:
        raise ValidationError(f"[run] seeds must be integers, got {seeds!r}") from None
    out = r.pop("out", "out")
    case = r.pop("case", "")
    if r:
        raise ValidationError(f"[run] unknown keys {sorted(r)}")
    out = os.path.normpath(out if os.path.isabs(out) else os.path.join(base_dir, out))
    return ExperimentConfig(map_spec, dist, planner, seed_list, out, case).validate()


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, os.path.dirname(os.path.abspath(path)))


# ------------------------------------------------------------ cache helpers
def _key(*parts) -> str:
    h = hashlib.sha256(CACHE_VERSION.encode())
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\0")
    return h.hexdigest()[:32]


def _checked(text: str) -> str:
    return text + f"sha256 {hashlib.sha256(text.encode()).hexdigest()}\n"


def _unchecked(text: str) -> Optional[str]:
    payload, sep, tail = text.rpartition("sha256 ")
    if not sep or hashlib.sha256(payload.encode()).hexdigest() != tail.strip():
        return None
    return payload


def write_if_changed(path, text: str) -> bool:
    """Atomically write ``text`` unless the file already holds exactly it."""
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            if fh.read() == text:
                return False
    except OSError:
        pass
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return True


class _Cache:
    def __init__(self, root):
        self.root = os.fspath(root)
        self.hits = 0
        self.misses = 0

    def path(self, name):
        return os.path.join(self.root, name)

    def get(self, name) -> Optional[str]:
        try:
            with open(self.path(name), encoding="utf-8", newline="") as fh:
                text = _unchecked(fh.read())
        except OSError:
            return None
        if text is None:
            log.warning("cache entry %s failed its checksum; recomputing", name)
        return text

    def put(self, name, text):
        write_if_changed(self.path(name), _checked(text))

    def text(self, name, produce):
        got = self.get(name)
        if got is not None:
            self.hits += 1
            return got
        self.misses += 1
        text = produce()
        self.put(name, text)
        return text


# ------------------------------------------------------------ pipeline
@dataclass
class RunResult:
    seed: int
    restart: int
    initial: Trajectory
    trajectory: Trajectory
    lb_initial: float
    lb: float
    fourier: float
    iterations: int
    accepted: int

    @property
    def min_distance(self) -> float:
        return float(self.trajectory.min_pairwise_distance().min())


class StageError(ErgoflowError):
    """Wraps a module error with the pipeline stage it came from."""

    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.cause = exc
        self.exit_code = getattr(exc, "exit_code", 1)


def _stage(name):
    def deco(fn):
        def wrapped(*a, **k):
            try:
                return fn(*a, **k)
            except StageError:
                raise
            except ErgoflowError as exc:
                raise StageError(name, exc) from exc
        wrapped.__name__ = fn.__name__
        wrapped.__doc__ = fn.__doc__
        return wrapped
    return deco


def _sample_seed(seed: int, restart: int, candidate: int = 0) -> int:
    if restart == 0 and candidate == 0:
        return seed
    key = [seed, restart] if candidate == 0 else [seed, restart, candidate]
    return int(np.random.SeedSequence(key).generate_state(1)[0])


class Pipeline:
    """Stages mesh-gen, eig, fields, sample, optimize, metric and report for one config."""

    def __init__(self, config: ExperimentConfig):
        self.config = config.validate()
        self.cache = _Cache(os.path.join(config.out_dir, "cache"))

    # -- mesh and bases
    @cached_property
    @_stage("mesh-gen")
    def mesh(self):
        spec = self.config.map_spec
        text = self.cache.text(f"mesh_{_key(asdict(spec))}.txt",
                               lambda: generate_map(spec).to_text())
        return parse_mesh(text)

    @cached_property
    def fem(self):
        return assemble(self.mesh)

    @cached_property
    @_stage("mesh-gen")
    def density(self):
        return build_distribution(self.mesh, self.config.distribution, self.fem.M)

    @cached_property
    @_stage("eig")
    def natural_basis(self):
        return solve_eigenbasis(self.fem, "natural", self.config.planner.K_trunc,
                                cache_dir=self.cache.root)

    @cached_property
    @_stage("eig")
    def dirichlet_basis(self):
        return solve_eigenbasis(self.fem, "dirichlet", self.config.planner.n_fields,
                                cache_dir=self.cache.root)

    @cached_property
    @_stage("fields")
    def flow(self):
        pl = self.config.planner
        extra = circulation_streams(self.mesh, self.fem) if pl.circulation else None
        return build_flow_basis(self.mesh, self.dirichlet_basis, self.density, pl.n_fields,
                                extra)

    @cached_property
    @_stage("metric")
    def metric(self):
        spec = MetricSpec(self.natural_basis, self.config.planner.K_trunc)
        return ErgodicMetric(self.mesh, self.fem, self.density, spec)

    @cached_property
    @_stage("metric")
    def fourier(self):
        return build_fourier_metric(self.mesh, self.density, self.config.planner.fourier_modes)

    # -- per seed
    def _sample_key(self, seed):
        pl = self.config.planner
        return _key(self.mesh.content_hash, self.density_hash, self.flow.n_fields, pl.horizon,
                    pl.switch_interval, seed)

    @cached_property
    def density_hash(self):
        return hashlib.sha256(self.density.density.tobytes()).hexdigest()

    @_stage("sample")
    def sample(self, seed: int) -> Trajectory:
        """Seed trajectory for ``seed`` (schedule cached, states re-integrated)."""
        pl = self.config.planner
        text = self.cache.text(
            f"schedule_{self._sample_key(seed)}.csv",
            lambda: schedule_csv(sample_schedule(self.flow.n_fields, pl.horizon,
                                                 pl.switch_interval, seed)))
        sched = parse_schedule_csv(text)
        sched = CoefficientSchedule(sched.switch_times, sched.rows, seed)
        return integrate(self.mesh, self.flow, sched, pl.starts, pl.dt, pl.vmax, pl.horizon)

    @_stage("optimize")
    def optimize(self, seed: int) -> RunResult:
        """Best descent over the configured restarts for ``seed``."""
        pl = self.config.planner
        best = None
        for r in range(pl.restarts if pl.optimize else 1):
            res = self._optimize_one(seed, r)
            if best is None or res.lb < best.lb:
                best = res
        return best

    def _optimize_one(self, seed, restart) -> RunResult:
        pl = self.config.planner
        # start from the lowest-metric trajectory among the sampled candidates
        lb0, sseed, initial = None, None, None
        for c in range(pl.candidates):
            s = _sample_seed(seed, restart, c)
            tr = self.sample(s)
            e = self.metric.value(tr)
            if lb0 is None or e < lb0:
                lb0, sseed, initial = e, s, tr
        if not pl.optimize:
            return RunResult(seed, restart, initial, initial, lb0, lb0,
                             self.fourier.value(initial), 0, 0)
        name = "opt_" + _key(self._sample_key(sseed), pl.dt, pl.vmax,
                             pl.starts, pl.eta, pl.kappa, pl.max_iter, pl.socp_tol, pl.K_trunc,
                             self.natural_basis.eigenvalues.tobytes()) + ".csv"

        def produce():
            problem = ErgodicProblem(self.mesh, self.flow, self.metric, pl.starts, pl.n_steps,
                                     pl.dt, pl.vmax, pl.eta, pl.kappa, pl.max_iter, pl.socp_tol)
            t0 = time.perf_counter()
            traj, reports = descend(problem, initial)
            log.info("seed %d restart %d: E %.4g -> %.4g in %.1f s", seed, restart, lb0,
                     self.metric.value(traj), time.perf_counter() - t0)
            n_acc = sum(r.accepted for r in reports)
            n_it = len({r.iteration for r in reports})
            return f"# iterations {n_it} accepted {n_acc}\n" + schedule_csv(traj.schedule)

        text = self.cache.text(name, produce)
        head, _, body = text.partition("\n")
        parts = head.split()
        n_it, n_acc = int(parts[2]), int(parts[4])
        sched = parse_schedule_csv(body)
        sched = CoefficientSchedule(sched.switch_times, sched.rows, initial.schedule.seed)
        traj = integrate(self.mesh, self.flow, sched, pl.starts, pl.dt, pl.vmax, pl.horizon)
        return RunResult(seed, restart, initial, traj, lb0, self.metric.value(traj),
                         self.fourier.value(traj), n_it, n_acc)

    # -- rows and files
    def metric_row(self, res: RunResult) -> str:
        c = self.config
        return (f"{c.map_spec.kind},{c.case_name},{c.planner.agents},{res.fourier:.11e},"
                f"{res.lb:.11e},{c.planner.K_trunc},{c.planner.horizon:g},{res.seed}")

    def run_row(self, res: RunResult) -> str:
        c = self.config
        return (f"{c.map_spec.kind},{c.case_name},{c.planner.agents},{res.seed},{res.restart},"
                f"{res.lb_initial:.11e},{res.lb:.11e},{res.fourier:.11e},"
                f"{res.min_distance:.11e},{res.iterations},{res.accepted}")

    def paths(self, seed: int) -> Dict[str, str]:
        base = os.path.join(self.config.out_dir, f"{self.config.stem}_seed{seed}")
        return {"trajectory": base + "_trajectory.csv", "schedule": base + "_schedule.csv",
                "svg": base + ".svg"}

    def write_run(self, res: RunResult) -> List[str]:
        from .render import RenderSpec, render_svg
        p = self.paths(res.seed)
        svg = render_svg(self.mesh, density=self.density, trajectories=res.trajectory,
                         spec=RenderSpec())
        written = []
        for key, text in (("trajectory", trajectory_csv(res.trajectory)),
                          ("schedule", schedule_csv(res.trajectory.schedule)),
                          ("svg", svg)):
            if write_if_changed(p[key], text):
                written.append(p[key])
        return written

    def field_tables(self) -> Dict[str, str]:
        n = self.flow.n_fields
        out = {}
        for i in range(n):
            c = np.zeros(n)
            c[i] = 1.0
            out[f"field_{i + 1:02d}.csv"] = field_csv(self.mesh, self.flow, c)
        return out

    def run(self) -> Tuple[List[RunResult], List[str]]:
        """Every seed end to end; returns results and the files that changed."""
        results, written = [], []
        for seed in self.config.seeds:
            res = self.optimize(seed)
            results.append(res)
            written += self.write_run(res)
        out = self.config.out_dir
        metrics = metric_csv_header() + "\n" + "".join(self.metric_row(r) + "\n" for r in results)
        runs = RUNS_HEADER + "\n" + "".join(self.run_row(r) + "\n" for r in results)
        from .report import report_tables, parse_metric_csv
        report = report_tables(parse_metric_csv(metrics))
        for name, text in (("metrics.csv", metrics), ("runs.csv", runs), ("report.md", report)):
            path = os.path.join(out, name)
            if write_if_changed(path, text):
                written.append(path)
        return results, written


def run_experiment(config) -> Tuple[List[RunResult], List[str]]:
    """Run a config (object or path) and write its report files."""
    if not isinstance(config, ExperimentConfig):
        config = load_config(config)
    return Pipeline(config).run()
