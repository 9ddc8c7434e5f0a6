import csv
import io
import json

import numpy as np
import pytest

from geokit.bench import (
    CSV_HEADER,
    ExperimentRow,
    RunOptions,
    cluster_lengths,
    grad_check,
    multistart,
    rows_from_csv,
    rows_from_json,
    rows_to_csv,
    rows_to_json,
    run_single,
    run_suite,
)
from geokit.cli import main
from geokit.errors import PropernessError

HEADER = "manifold,dim,geometry,solver,T,length,energy,iterations,final_grad_norm,wall_ms_mean,wall_ms_std,termination,seed"


def row(**kw):
    base = dict(manifold="sphere", dim=2, geometry="riemannian", solver="georce", T=100, length=0.1 + 0.2,
                energy=1 / 3, iterations=2, final_grad_norm=2.5e-5, wall_ms_mean=12.5, wall_ms_std=0.25,
                termination="Converged", seed=0)
    base.update(kw)
    return ExperimentRow(**base)


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# serialization

def test_header_is_fixed():
    assert ",".join(CSV_HEADER) == HEADER
    assert rows_to_csv([]).strip() == HEADER


def test_csv_round_trip_bitwise():
    rows = [row(), row(manifold="torus", length=np.nextafter(1.0, 2.0), seed=7)]
    back = rows_from_csv(rows_to_csv(rows))
    assert back == rows


def test_json_round_trip():
    rows = [row(), row(solver="adam", termination="MaxIterations")]
    assert rows_from_json(rows_to_json(rows)) == rows


def test_csv_rejects_wrong_header():
    with pytest.raises(ValueError):
        rows_from_csv("a,b\n1,2\n")


# single runs

def test_run_single_euclidean():
    r, report = run_single(RunOptions(manifold="euclidean", dim=2, T=10, repeats=1, warmup=0))
    assert r.iterations == 1 and r.termination == "Converged"
    assert r.length == pytest.approx(report.length)


def test_run_single_records_solver_failure():
    r, _ = run_single(RunOptions(manifold="hyperbolic", solver="gd", step=50.0, repeats=1, warmup=0))
    assert r.termination not in ("Converged", "MaxIterations")


def test_improper_randers_problem_is_rejected(capsys):
    with pytest.raises(PropernessError):
        run_single(RunOptions(manifold="cauchy", geometry="finsler", repeats=1, warmup=0))
    code, _, err = run_cli(capsys, "solve", "--manifold", "cauchy", "--finsler", "randers")
    assert code == 2 and "proper" in err


def test_trapezoid_length_rule():
    opts = dict(manifold="sphere", repeats=1, warmup=0)
    plain, rep = run_single(RunOptions(**opts))
    trap, _ = run_single(RunOptions(length_rule="trapezoid", **opts))
    assert plain.length == pytest.approx(rep.length)
    assert trap.length == pytest.approx(rep.trapezoid_length)


# suites

def test_empty_solver_list(tmp_path):
    out = tmp_path / "empty.csv"
    rows = run_suite("riemannian-small", out=out, solvers=[])
    assert rows == [] and out.read_text().strip() == HEADER


def test_scaling_dim_converged_rows(monkeypatch):
    monkeypatch.setenv("GEOKIT_THREADS", "2")
    rows = run_suite("scaling-dim", overrides={"repeats": 1, "warmup": 0})
    assert [r.dim for r in rows] == [2, 3, 5, 10, 20]
    for r in rows:
        assert r.termination == "Converged" and r.final_grad_norm < 1e-4


def test_threads_do_not_change_results(monkeypatch):
    monkeypatch.setenv("GEOKIT_THREADS", "1")
    one = run_suite("scaling-dim", overrides={"repeats": 1, "warmup": 0})
    monkeypatch.setenv("GEOKIT_THREADS", "4")
    four = run_suite("scaling-dim", overrides={"repeats": 1, "warmup": 0})
    assert [r.length for r in one] == [r.length for r in four]


def test_bad_thread_env(monkeypatch, capsys):
    monkeypatch.setenv("GEOKIT_THREADS", "many")
    code, _, err = run_cli(capsys, "suite", "--preset", "scaling-dim", "--repeats", "1", "--warmup", "0")
    assert code == 2 and "GEOKIT_THREADS" in err


@pytest.mark.slow
def test_riemannian_small_georce_not_longer_than_adam():
    rows = run_suite("riemannian-small", overrides={"repeats": 1, "warmup": 0})
    by = {}
    for r in rows:
        by.setdefault((r.manifold, r.dim), {})[r.solver] = r
    assert len(by) == 12
    for cell in by.values():
        assert cell["georce"].length <= cell["adam"].length + 1e-3


# grad-check and multistart

def test_grad_check_euclidean():
    rep = grad_check("euclidean", count=10)
    assert rep.passed and rep.max_nu_error < 1e-9


def test_grad_check_torus_deterministic():
    one, two = grad_check("torus", count=50, seed=7), grad_check("torus", count=50, seed=7)
    assert one.passed
    assert [p.passed for p in one.probes] == [p.passed for p in two.probes]
    assert [p.grad_error for p in one.probes] == [p.grad_error for p in two.probes]


def test_eggtray_gradient_near_flat_point():
    from geokit.manifolds import load

    m, _, _ = load("eggtray")
    x = np.array([np.pi / 2, np.pi / 2])
    np.testing.assert_allclose(m.eval_metric(x), np.eye(2), atol=1e-15)
    u = np.array([0.3, -0.2])
    np.testing.assert_allclose(m.eval_nu(x, u), m.fd_nu(x[None], u[None])[0], atol=1e-8)


def test_cluster_lengths():
    assert cluster_lengths([1.0, 1.001, 2.0, 2.004, 2.5]) == [(pytest.approx(1.0005), 2), (pytest.approx(2.002), 2),
                                                             (2.5, 1)]


def test_multistart_euclidean_unique():
    res = multistart("euclidean", n_starts=5, T=10, dim=2)
    assert res.n_clusters == 1
    assert all(r["termination"] == "Converged" for r in res.rows)


def test_multistart_deterministic():
    one = multistart("sphere", n_starts=3, perturb_scale=0.2, T=20, seed=4)
    two = multistart("sphere", n_starts=3, perturb_scale=0.2, T=20, seed=4)
    assert one.rows == two.rows


# command line

def test_cli_solve_euclidean(capsys):
    code, out, _ = run_cli(capsys, "solve", "--manifold", "euclidean", "--dim", "2", "--solver", "georce", "--T", "10",
                           "--repeats", "1", "--warmup", "0")
    assert code == 0
    rows = rows_from_csv(out)
    assert rows[0].iterations == 1 and rows[0].T == 10


def test_cli_json_format(capsys):
    code, out, _ = run_cli(capsys, "solve", "--manifold", "sphere", "--format", "json", "--repeats", "1", "--warmup", "0")
    assert code == 0
    assert json.loads(out)[0]["manifold"] == "sphere"


@pytest.mark.parametrize("argv", [
    ["solve", "--manifold", "klein"],
    ["solve", "--solver", "bfgs"],
    ["suite", "--preset", "huge"],
    ["solve", "--param", "R"],
    ["solve", "--manifold", "sphere", "--param", "R=3"],
])
def test_cli_usage_errors(capsys, argv):
    code, _, _ = run_cli(capsys, *argv)
    assert code == 2


def test_cli_trace_file(capsys, tmp_path):
    path = tmp_path / "trace.csv"
    code, out, _ = run_cli(capsys, "solve", "--manifold", "torus", "--trace", str(path), "--repeats", "1", "--warmup", "0")
    assert code == 0
    lines = list(csv.reader(io.StringIO(path.read_text())))
    assert lines[0] == ["iteration", "grad_norm"]
    assert len(lines) - 1 == rows_from_csv(out)[0].iterations + 1


def test_cli_nonconverged_row_exit_zero(capsys):
    code, out, _ = run_cli(capsys, "solve", "--manifold", "torus", "--max-iter", "1", "--repeats", "1", "--warmup", "0")
    assert code == 0 and rows_from_csv(out)[0].termination == "MaxIterations"


def test_cli_config_precedence(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nmanifold = torus\nT = 20\nrepeats = 1\nwarmup = 0\n")
    code, out, _ = run_cli(capsys, "solve", "--config", str(cfg), "--T", "30")
    assert code == 0
    r = rows_from_csv(out)[0]
    assert r.manifold == "torus" and r.T == 30


def test_cli_bad_config_key(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour = blue\n")
    code, _, err = run_cli(capsys, "solve", "--config", str(cfg))
    assert code == 2 and "colour" in err


def test_cli_suite_empty_solvers(capsys, tmp_path):
    out = tmp_path / "s.csv"
    code, _, _ = run_cli(capsys, "suite", "--preset", "riemannian-small", "--solvers", "", "--out", str(out))
    assert code == 0 and out.read_text().strip() == HEADER


def test_cli_grad_check(capsys):
    code, out, _ = run_cli(capsys, "grad-check", "--manifold", "sphere", "--count", "5")
    assert code == 0 and "# overall: PASS" in out


def test_cli_multistart(capsys):
    code, out, _ = run_cli(capsys, "multistart", "--manifold", "euclidean", "--dim", "2", "--n-starts", "3", "--T", "10")
    assert code == 0 and "# distinct minima: 1" in out


def test_cli_finsler_solve(capsys):
    code, out, _ = run_cli(capsys, "solve", "--manifold", "sphere", "--finsler", "randers", "--v0", "1.0",
                           "--repeats", "1", "--warmup", "0")
    r = rows_from_csv(out)[0]
    assert code == 0 and r.geometry == "finsler" and r.termination == "Converged"
