"""``ergoflow`` command-line interface.

Every subcommand takes ``--config``, ``--seed`` and ``--out``.  Exit codes
are 0 on success, 2 on validation errors and 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import List, Optional

from .errors import ErgoflowError, ValidationError
from .experiment import Pipeline, load_config, write_if_changed
from .fem import basis_text
from .mesh.io import distribution_text
from .metric import metric_csv_header
from .render import RenderSpec, render_scalar, render_svg
from .report import parse_metric_csv, report_tables
from .sampler import parse_trajectory_csv, schedule_csv, trajectory_csv

log = logging.getLogger("ergoflow")


def _pipeline(args) -> Pipeline:
    cfg = load_config(args.config).with_overrides(seed=args.seed, out_dir=None)
    return Pipeline(cfg)


def _out_dir(args, pipe: Pipeline, sub: str = "") -> str:
    d = args.out if args.out else os.path.join(pipe.config.out_dir, sub)
    os.makedirs(d, exist_ok=True)
    return d


def _report_written(paths: List[str]):
    for p in paths:
        print(p)


def cmd_mesh_gen(args) -> int:
    pipe = _pipeline(args)
    d = _out_dir(args, pipe)
    kind = pipe.config.map_spec.kind
    written = []
    for name, text in ((f"{kind}.mesh", pipe.mesh.to_text()),
                       (f"{kind}_{pipe.config.case_name}.dist", distribution_text(pipe.density)),
                       (f"{kind}.svg", render_svg(pipe.mesh, pipe.density))):
        path = os.path.join(d, name)
        if write_if_changed(path, text):
            written.append(path)
    _report_written(written)
    return 0


def cmd_eig(args) -> int:
    pipe = _pipeline(args)
    d = _out_dir(args, pipe, "bases")
    written = []
    for basis in (pipe.natural_basis, pipe.dirichlet_basis):
        stem = os.path.join(d, f"{basis.bc}_{basis.count}")
        lam = "k,eigenvalue\n" + "".join(f"{k},{v:.11e}\n" for k, v in
                                         enumerate(basis.eigenvalues.tolist()))
        for path, text in ((stem + ".basis", basis_text(basis)),
                           (stem + "_eigenvalues.csv", lam)):
            if write_if_changed(path, text):
                written.append(path)
        for k in range(min(args.render, basis.count)):
            path = f"{stem}_mode{k:03d}.svg"
            svg = render_scalar(pipe.mesh, basis.vectors[:, k], title=f"{basis.bc} mode {k}")
            if write_if_changed(path, svg):
                written.append(path)
    _report_written(written)
    return 0


def cmd_fields(args) -> int:
    pipe = _pipeline(args)
    d = _out_dir(args, pipe, "fields")
    written = []
    spec = RenderSpec(mesh=False, density=False)
    for name, text in pipe.field_tables().items():
        path = os.path.join(d, name)
        if write_if_changed(path, text):
            written.append(path)
    for i in range(pipe.flow.n_fields):
        svg = render_svg(pipe.mesh, field=pipe.flow.velocity[i], spec=spec,
                         title=f"field {i + 1}")
        path = os.path.join(d, f"field_{i + 1:02d}.svg")
        if write_if_changed(path, svg):
            written.append(path)
    _report_written(written)
    return 0


def cmd_sample(args) -> int:
    pipe = _pipeline(args)
    d = _out_dir(args, pipe, "samples")
    written = []
    for seed in pipe.config.seeds:
        traj = pipe.sample(seed)
        stem = os.path.join(d, f"{pipe.config.stem}_seed{seed}_sample")
        for path, text in ((stem + "_trajectory.csv", trajectory_csv(traj)),
                           (stem + "_schedule.csv", schedule_csv(traj.schedule)),
                           (stem + ".svg", render_svg(pipe.mesh, pipe.density,
                                                      trajectories=traj))):
            if write_if_changed(path, text):
                written.append(path)
    _report_written(written)
    return 0


def cmd_optimize(args) -> int:
    pipe = _pipeline(args)
    if args.out:
        pipe.config = pipe.config.with_overrides(out_dir=args.out)
    written = []
    for seed in pipe.config.seeds:
        res = pipe.optimize(seed)
        written += pipe.write_run(res)
        print(f"seed {seed}: LB {res.lb_initial:.4g} -> {res.lb:.4g}, F {res.fourier:.4g}",
              file=sys.stderr)
    _report_written(written)
    return 0


def cmd_metric(args) -> int:
    pipe = _pipeline(args)
    rows = []
    if args.trajectory:
        for path in args.trajectory:
            with open(path, encoding="utf-8") as fh:
                states = parse_trajectory_csv(fh.read())
            lb = pipe.metric.value(states)
            f = pipe.fourier.value(states)
            c = pipe.config
            seed = c.seeds[0] if len(c.seeds) == 1 else -1
            rows.append(f"{c.map_spec.kind},{c.case_name},{states.shape[0]},{f:.11e},{lb:.11e},"
                        f"{c.planner.K_trunc},{c.planner.horizon:g},{seed}")
    else:
        rows = [pipe.metric_row(pipe.optimize(seed)) for seed in pipe.config.seeds]
    text = metric_csv_header() + "\n" + "".join(r + "\n" for r in rows)
    path = args.out or os.path.join(pipe.config.out_dir, "metrics.csv")
    if write_if_changed(path, text):
        print(path)
    return 0


def cmd_report(args) -> int:
    sources = list(args.metrics or [])
    if not sources:
        if not args.config:
            raise ValidationError("report needs --metrics files or a --config")
        sources = [os.path.join(load_config(args.config).out_dir, "metrics.csv")]
    rows = []
    for src in sources:
        try:
            with open(src, encoding="utf-8") as fh:
                rows += parse_metric_csv(fh.read())
        except OSError as exc:
            raise ValidationError(f"cannot read metrics {src}: {exc}") from None
    text = report_tables(rows)
    if args.out:
        if write_if_changed(args.out, text):
            print(args.out)
    else:
        sys.stdout.write(text)
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config).with_overrides(seed=args.seed, out_dir=args.out)
    pipe = Pipeline(cfg)
    results, written = pipe.run()
    for r in results:
        print(f"seed {r.seed}: LB {r.lb_initial:.4g} -> {r.lb:.4g}, F {r.fourier:.4g}",
              file=sys.stderr)
    _report_written(written)
    return 0


COMMANDS = {
    "mesh-gen": (cmd_mesh_gen, "mesh the configured map and write mesh, density and SVG"),
    "eig": (cmd_eig, "solve and save the natural and Dirichlet eigenbases"),
    "fields": (cmd_fields, "export the flow basis fields as CSV and SVG"),
    "sample": (cmd_sample, "integrate seed trajectories from random flow schedules"),
    "optimize": (cmd_optimize, "optimize trajectories and write CSV and SVG"),
    "metric": (cmd_metric, "write metric CSV rows for optimized or given trajectories"),
    "report": (cmd_report, "render markdown tables from metric CSV files"),
    "run": (cmd_run, "run the whole pipeline for every configured seed"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ergoflow", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=name != "report", help="experiment INI file")
        p.add_argument("--seed", type=int, default=None, help="run only this seed")
        p.add_argument("--out", default=None, help="output path (file or directory)")
        if name == "eig":
            p.add_argument("--render", type=int, default=0, metavar="K",
                           help="also draw the first K modes of each basis")
        if name == "metric":
            p.add_argument("--trajectory", nargs="+", help="trajectory CSV files to score")
        if name == "report":
            p.add_argument("--metrics", nargs="+", help="metric CSV files")
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    fn = COMMANDS[args.command][0]
    try:
        return fn(args)
    except ErgoflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return getattr(exc, "exit_code", 1)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
