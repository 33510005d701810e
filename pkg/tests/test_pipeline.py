import csv
import io
import os

import pytest

from ergoflow import cli, experiment
from ergoflow.errors import NumericalError, ValidationError
from ergoflow.experiment import (ExperimentConfig, Pipeline, parse_config, run_experiment,
                                 write_if_changed)

SQUARE = """
[map]
kind = square
h = 0.05

[planner]
starts = 0.5 0.5
horizon = 5
dt = 0.05
k_trunc = 40
max_iter = 3

[run]
seeds = 0
out = {out}
"""

ROOMS7 = """
[map]
kind = rooms
h = 0.05

[distribution]
kind = gaussian
centers = -1 0; 1 0
sigmas = 0.3 0.3

[planner]
starts = -1.2 0; -1 0.2; -1 -0.2; -0.8 0; 1.2 0; 1 0.2; 1 -0.2
horizon = 1
dt = 0.05
k_trunc = 40
max_iter = 2

[run]
seeds = 1
out = {out}
"""


def _write_config(tmp_path, text, name="exp.ini", out="out"):
    path = tmp_path / name
    path.write_text(text.format(out=out))
    return str(path)


def _outputs(root):
    files = {}
    for dirpath, _, names in os.walk(root):
        if os.path.basename(dirpath) == "cache":
            continue
        for n in names:
            p = os.path.join(dirpath, n)
            with open(p, "rb") as fh:
                files[os.path.relpath(p, root)] = fh.read()
    return files


# ------------------------------------------------------------ config
def test_parse_config_fields(tmp_path):
    cfg = parse_config(SQUARE.format(out="o"), str(tmp_path))
    assert cfg.map_spec.kind == "square" and cfg.map_spec.h == 0.05
    assert cfg.planner.starts == ((0.5, 0.5),) and cfg.planner.agents == 1
    assert cfg.planner.K_trunc == 40 and cfg.planner.fourier_modes == 40
    assert cfg.planner.n_steps == 100
    assert cfg.planner.candidates == 1 and cfg.planner.circulation
    assert cfg.out_dir == os.path.join(str(tmp_path), "o")
    assert cfg.stem == "square_uniform_1a"
    rooms = parse_config(ROOMS7.format(out="o"))
    assert rooms.planner.agents == 7
    assert rooms.distribution.centers == ((-1.0, 0.0), (1.0, 0.0))


@pytest.mark.parametrize("bad", [
    "[map]\nkind = square\n",
    "[map]\nkind = spiral\nh = 0.1\n",
    "[map]\nkind = square\nh = 0.1\ncolour = red\n",
    "[map]\nkind = square\nh = abc\n",
    "[map]\nkind = square\nh = 0.1\n[extra]\n",
    "[map]\nkind = square\nh = 0.1\n[planner]\nstarts = 0.5\n",
    "[map]\nkind = square\nh = 0.1\n[planner]\nagents = 2\n",
    "[map]\nkind = square\nh = 0.1\n[planner]\nhorizon = 1\ndt = 0.3\n",
    "[map]\nkind = square\nh = 0.1\n[planner]\noptimize = maybe\n",
    "[map]\nkind = square\nh = 0.1\n[planner]\ncirculation = 2\n",
    "[map]\nkind = square\nh = 0.1\n[planner]\ncandidates = 0\n",
    "[map]\nkind = square\nh = 0.1\n[run]\nseeds = one\n",
    "[map]\nkind = square\nh = 0.1\n[distribution]\nkind = gaussian\n",
    "not an ini file",
])
def test_bad_configs_rejected(bad):
    with pytest.raises(ValidationError):
        parse_config(bad)


def test_overrides_validate(tmp_path):
    cfg = parse_config(SQUARE.format(out="o"), str(tmp_path))
    assert cfg.with_overrides(seed=4).seeds == (4,)
    with pytest.raises(ValidationError):
        cfg.with_overrides(seed=-1)


def test_write_if_changed(tmp_path):
    p = tmp_path / "a" / "f.txt"
    assert write_if_changed(p, "x\n")
    assert not write_if_changed(p, "x\n")
    assert write_if_changed(p, "y\n")


# ------------------------------------------------------------ pipeline
@pytest.fixture(scope="module")
def square_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("square")
    path = _write_config(tmp, SQUARE)
    results, written = run_experiment(path)
    return tmp, path, results, written


def test_pipeline_writes_all_artifacts(square_run):
    tmp, path, results, written = square_run
    out = tmp / "out"
    stem = "square_uniform_1a_seed0"
    for name in (stem + "_trajectory.csv", stem + "_schedule.csv", stem + ".svg",
                 "metrics.csv", "runs.csv", "report.md"):
        assert (out / name).exists(), name
    rows = list(csv.DictReader(io.StringIO((out / "metrics.csv").read_text())))
    assert len(rows) == 1
    assert rows[0]["map"] == "square" and rows[0]["agents"] == "1"
    assert float(rows[0]["metric_LB"]) == pytest.approx(results[0].lb, rel=1e-10)
    assert results[0].lb <= results[0].lb_initial
    assert "## square" in (out / "report.md").read_text()


def test_rerun_recomputes_nothing(square_run):
    tmp, path, _, _ = square_run
    before = _outputs(tmp / "out")
    pipe = Pipeline(experiment.load_config(path))
    results, written = pipe.run()
    assert written == []
    assert pipe.cache.misses == 0 and pipe.cache.hits > 0
    assert _outputs(tmp / "out") == before


def test_corrupted_cache_is_recomputed(square_run):
    tmp, path, _, _ = square_run
    before = _outputs(tmp / "out")
    cache = tmp / "out" / "cache"
    victims = sorted(p for p in os.listdir(cache) if p.startswith(("opt_", "mesh_")))
    assert victims
    for v in victims:
        text = (cache / v).read_text()
        (cache / v).write_text(text.replace("0", "1", 1))
    basis = sorted(p for p in os.listdir(cache) if p.endswith(".basis"))
    (cache / basis[0]).write_text("garbage\n")
    pipe = Pipeline(experiment.load_config(path))
    _, written = pipe.run()
    assert pipe.cache.misses == len(victims)
    assert written == []
    assert _outputs(tmp / "out") == before


def test_fresh_run_is_byte_identical(square_run, tmp_path):
    tmp, _, _, _ = square_run
    path = _write_config(tmp_path, SQUARE)
    run_experiment(path)
    assert _outputs(tmp_path / "out") == _outputs(tmp / "out")


def test_seven_agent_rooms_rows_report_positive_distance(tmp_path):
    path = _write_config(tmp_path, ROOMS7)
    results, _ = run_experiment(path)
    assert results[0].trajectory.n_agents == 7
    runs = list(csv.DictReader(io.StringIO((tmp_path / "out" / "runs.csv").read_text())))
    assert float(runs[0]["min_distance"]) > 0
    metrics = (tmp_path / "out" / "metrics.csv").read_text().splitlines()
    assert metrics[1].startswith("rooms,gaussian,7,")


def test_restarts_keep_the_best(tmp_path):
    text = SQUARE.replace("max_iter = 3", "max_iter = 1\nrestarts = 3").replace("horizon = 5",
                                                                                 "horizon = 1")
    cfg = parse_config(text.format(out=str(tmp_path / "o")))
    pipe = Pipeline(cfg)
    best = pipe.optimize(0)
    each = [pipe._optimize_one(0, r).lb for r in range(3)]
    assert best.lb == min(each)


def test_candidates_start_from_lowest_sample(tmp_path):
    text = SQUARE.replace("max_iter = 3", "optimize = false\ncandidates = 4")
    pipe = Pipeline(parse_config(text.format(out=str(tmp_path / "o"))))
    res = pipe._optimize_one(0, 0)
    each = [pipe.metric.value(pipe.sample(experiment._sample_seed(0, 0, c))) for c in range(4)]
    assert len(set(each)) == 4
    assert res.lb_initial == min(each) and res.lb == res.lb_initial


def test_circulation_setting_adds_hole_fields(tmp_path):
    base = "[map]\nkind = rooms\nh = 0.05\n[planner]\nstarts = -1 0\n{extra}[run]\nout = o\n"
    on = Pipeline(parse_config(base.format(extra=""), str(tmp_path)))
    off = Pipeline(parse_config(base.format(extra="circulation = no\n"), str(tmp_path)))
    assert on.flow.n_fields == 9 and on.flow.n_circulation == 1
    assert off.flow.n_fields == 8
    assert on.sample(0).schedule.rows.shape[1] == 9
    assert on._sample_key(0) != off._sample_key(0)


# ------------------------------------------------------------ CLI
def test_cli_subcommands(tmp_path, capsys):
    text = SQUARE.replace("h = 0.05", "h = 0.1").replace("horizon = 5", "horizon = 1")
    path = _write_config(tmp_path, text)
    out = tmp_path / "out"
    assert cli.main(["mesh-gen", "--config", path]) == 0
    assert (out / "square.mesh").exists() and (out / "square.svg").exists()
    assert cli.main(["eig", "--config", path, "--render", "2"]) == 0
    assert (out / "bases" / "natural_40_mode001.svg").exists()
    assert cli.main(["fields", "--config", path]) == 0
    assert len(list((out / "fields").glob("field_*.csv"))) == 8
    assert cli.main(["sample", "--config", path, "--seed", "3"]) == 0
    sample = out / "samples" / "square_uniform_1a_seed3_sample_trajectory.csv"
    assert sample.exists()
    assert cli.main(["optimize", "--config", path]) == 0
    assert cli.main(["metric", "--config", path, "--trajectory", str(sample),
                     "--out", str(tmp_path / "m.csv")]) == 0
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "map,case,agents,metric_F,metric_LB,K_trunc,horizon,seed"
    assert len(lines) == 2
    assert cli.main(["metric", "--config", path]) == 0
    capsys.readouterr()
    assert cli.main(["report", "--metrics", str(tmp_path / "m.csv")]) == 0
    assert "## square" in capsys.readouterr().out
    assert cli.main(["run", "--config", path, "--out", str(tmp_path / "run")]) == 0
    assert (tmp_path / "run" / "report.md").exists()


def test_cli_report_empty_input(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert cli.main(["report", "--metrics", str(empty), "--out", str(tmp_path / "r.md")]) == 0
    assert (tmp_path / "r.md").read_text() == ""


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    assert cli.main(["mesh-gen", "--config", str(tmp_path / "missing.ini")]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[map]\nkind = square\nh = -1\n")
    assert cli.main(["eig", "--config", str(bad)]) == 2
    assert cli.main(["report"]) == 2
    path = _write_config(tmp_path, SQUARE.replace("h = 0.05", "h = 0.25"))

    def boom(*a, **k):
        raise NumericalError("eigensolver residual too large")

    monkeypatch.setattr(experiment, "solve_eigenbasis", boom)
    assert cli.main(["eig", "--config", path]) == 3
    assert "eig:" in capsys.readouterr().err
