import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hubermean.cli import main
from hubermean.distributions import SeededRng, VonMisesFisher, sample
from hubermean.bench import north_pole, offset_point
from hubermean.errors import DomainError
from hubermean.io import (
    DatasetFormatError,
    format_dataset,
    load_report,
    make_report,
    dump_report,
    parse_dataset,
    read_dataset,
    without_timing,
    write_dataset,
)
from hubermean.losses import Sample
from hubermean.manifolds import ManifoldPoint, euclidean, sphere, spd

DATA = Path(__file__).parent / "data"


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def _report(capsys, *argv):
    code, out, err = _run(capsys, *argv)
    return code, load_report(out), err


# --- dataset files ---------------------------------------------------------


@given(st.lists(st.tuples(st.floats(-1e300, 1e300), st.floats(-1e-300, 1e-300)), min_size=1, max_size=8))
@settings(max_examples=60, deadline=None)
def test_round_trip_is_exact(rows):
    s = Sample(euclidean(2), np.array(rows, dtype=float))
    back = parse_dataset(format_dataset(s))
    assert back.tag == s.tag and np.array_equal(back.data, s.data)


@pytest.mark.parametrize("name", ["sphere.csv", "spd.csv", "plane.csv"])
def test_fixture_round_trip(name, tmp_path):
    s = read_dataset(DATA / name)
    write_dataset(tmp_path / name, s)
    assert (tmp_path / name).read_text() == (DATA / name).read_text()


def test_sphere_rows_renormalized_or_rejected():
    s = parse_dataset("rmm-v1,sphere,1\n0,1.0000005\n")
    assert np.linalg.norm(s.data[0]) == pytest.approx(1.0, abs=1e-15)
    exact = parse_dataset("rmm-v1,sphere,1\n0.6,0.8\n")
    assert np.array_equal(exact.data[0], [0.6, 0.8])
    with pytest.raises(DatasetFormatError):
        parse_dataset("rmm-v1,sphere,1\n0,1.00001\n")


@pytest.mark.parametrize("text", [
    "",
    "rmm-v0,euclidean,2\n1,2\n",
    "rmm-v1,torus,2\n1,2\n",
    "rmm-v1,euclidean,2\n1,2,3\n",
    "rmm-v1,euclidean,2\n1,x\n",
    "rmm-v1,euclidean,2\n1,nan\n",
    "rmm-v1,euclidean,2\n",
])
def test_malformed_datasets(text):
    with pytest.raises(DomainError):
        parse_dataset(text)


def test_header_must_match_requested_manifold():
    with pytest.raises(DatasetFormatError):
        read_dataset(DATA / "plane.csv", euclidean(3))
    s = parse_dataset("# comment\nrmm-v1,spd,2\n\n2,0,0,3\n")
    assert s.tag == spd(2) and np.array_equal(s.data[0], np.diag([2.0, 3.0]))


def test_report_round_trip():
    rep = make_report("estimate", {"c": math.inf}, 3, {"mean": np.array([1.0, 2.0]), "n": np.int64(4)}, {"seconds": 0.1})
    back = load_report(dump_report(rep))
    assert back["results"] == {"mean": [1.0, 2.0], "n": 4}
    assert back["config"]["c"] == "inf"
    assert without_timing(back) == without_timing(rep)
    with pytest.raises(DatasetFormatError):
        load_report(json.dumps({"schema": "other"}))


# --- estimate ----------------------------------------------------------------


def test_estimate_single_row(capsys):
    code, rep, _ = _report(capsys, "estimate", DATA / "single.csv")
    assert code == 0
    assert rep["results"]["mean"] == [0.5, -1.25, 3.0]


def test_estimate_inf_gives_arithmetic_mean(capsys):
    code, rep, _ = _report(capsys, "estimate", DATA / "plane.csv", "--c", "inf")
    data = read_dataset(DATA / "plane.csv")
    assert code == 0
    assert np.allclose(rep["results"]["mean"], data.data.mean(axis=0), atol=1e-12)
    assert rep["results"]["cutoff"] == "inf"


def test_estimate_auto_cutoff(capsys):
    code, rep, _ = _report(capsys, "estimate", DATA / "line3.csv", "--c", "auto")
    assert code == 0
    assert rep["results"]["cutoff"] == pytest.approx(1.9941, abs=1e-4)
    assert rep["results"]["mean"] == pytest.approx([0.0], abs=1e-9)


@pytest.mark.parametrize("name,manifold", [("sphere.csv", "sphere(2)"), ("spd.csv", "spd(2)")])
def test_estimate_curved(capsys, name, manifold, tmp_path):
    out = tmp_path / "r.json"
    code, _, _ = _run(capsys, "estimate", DATA / name, "--manifold", manifold, "--c", "0.2", "--loss", "pseudo", "--out", out)
    rep = load_report(out.read_text())
    assert code == 0 and rep["results"]["converged"] and rep["results"]["loss"] == "pseudo_huber"
    assert rep["results"]["final_grad_norm"] <= 1e-9


def test_estimate_non_convergence_exit_code(capsys):
    code, rep, err = _report(capsys, "estimate", DATA / "sphere.csv", "--max-iter", "1", "--tol", "1e-14")
    assert code == 3 and not rep["results"]["converged"]
    assert "iterations" in err


@pytest.mark.parametrize("argv", [
    ["estimate", DATA / "nope.csv"],
    ["estimate", DATA / "plane.csv", "--manifold", "sphere(2)"],
    ["estimate", DATA / "plane.csv", "--c", "-1"],
    ["estimate", DATA / "plane.csv", "--step", "2"],
    ["estimate"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(capsys, argv):
    code, _, err = _run(capsys, *argv)
    assert code == 2 and err


def test_reports_are_reproducible(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert _run(capsys, "estimate", DATA / "spd.csv", "--c", "auto", "--seed", "5", "--out", out)[0] == 0
    ra, rb = json.loads(a.read_text()), json.loads(b.read_text())
    assert dump_report(without_timing(ra)) == dump_report(without_timing(rb))
    assert ra["config"]["dataset"] == "spd.csv" and ra["seed"] == 5


# --- test ----------------------------------------------------------------------


def test_location_test_report(capsys):
    code, rep, _ = _report(capsys, "test", DATA / "sphere.csv", "--null-point", DATA / "sphere_null.csv", "--c", "0.3")
    res = rep["results"]
    assert code == 0
    assert set(res["test"]) == {"statistic_Tn", "df", "critical_value", "p_value", "reject", "alpha"}
    assert res["test"]["df"] == 2 and res["test"]["critical_value"] == pytest.approx(-2 * math.log(0.05))
    assert np.array(res["covariance"]).shape == (2, 2)


def test_null_at_the_mean_gives_zero_statistic(capsys, tmp_path):
    code, rep, _ = _report(capsys, "estimate", DATA / "sphere.csv", "--c", "0.3")
    null = tmp_path / "null.csv"
    write_dataset(null, Sample(sphere(2), np.array([rep["results"]["mean"]])))
    code, rep, _ = _report(capsys, "test", DATA / "sphere.csv", "--null-point", null, "--c", "0.3")
    assert code == 0
    assert rep["results"]["test"]["statistic_Tn"] == pytest.approx(0.0, abs=1e-12)
    assert rep["results"]["test"]["p_value"] == pytest.approx(1.0, abs=1e-12)
    assert rep["results"]["test"]["reject"] is False


def test_three_degree_offset_rejects_across_seeds(capsys, tmp_path):
    null = tmp_path / "null.csv"
    write_dataset(null, Sample(sphere(2), offset_point(north_pole(2), 3.0).coords[None]))
    rejected = 0
    for seed in range(20):
        path = tmp_path / f"s{seed}.csv"
        write_dataset(path, sample(VonMisesFisher(north_pole(2), 30.0), 500, SeededRng(seed)))
        code, rep, _ = _report(capsys, "test", path, "--null-point", null, "--c", "0.3")
        assert code == 0
        rejected += rep["results"]["test"]["reject"]
    assert rejected == 20


def test_test_command_errors(capsys):
    for alpha in ("1.5", "0", "1"):
        assert _run(capsys, "test", DATA / "sphere.csv", "--null-point", DATA / "sphere_null.csv", "--alpha", alpha)[0] == 2
    # null point on a different manifold
    assert _run(capsys, "test", DATA / "sphere.csv", "--null-point", DATA / "plane_null.csv")[0] == 2
    # more than one row in the null file
    assert _run(capsys, "test", DATA / "sphere.csv", "--null-point", DATA / "sphere.csv")[0] == 2
    # collinear plane data has a singular covariance
    code, _, err = _run(capsys, "test", DATA / "collinear.csv", "--null-point", DATA / "plane_null.csv", "--c", "10")
    assert code == 4 and "singular" in err


# --- are ----------------------------------------------------------------------


@pytest.mark.parametrize("family,sigma,tol", [("gaussian-real", 1.0, 0.005), ("circle-gaussian", 0.5, 0.01)])
def test_are_target(capsys, family, sigma, tol):
    code, out, _ = _run(capsys, "are", "--family", family, "--sigma", sigma, "--target", "0.95")
    assert code == 0
    assert float(out) == pytest.approx(1.345, abs=tol)


def test_are_grid_csv(capsys, tmp_path):
    out = tmp_path / "are.json"
    code, text, _ = _run(capsys, "are", "--family", "laplace-real", "--kappa-grid", "0.5:5:0.5", "--out", out)
    lines = text.strip().splitlines()
    assert code == 0 and lines[0] == "kappa,sigma,are"
    rows = [list(map(float, ln.split(","))) for ln in lines[1:]]
    assert [r[0] for r in rows] == pytest.approx(np.arange(0.5, 5.01, 0.5))
    assert all(r[2] > 1 for r in rows)
    assert len(load_report(out.read_text())["results"]["points"]) == 10


def test_are_errors(capsys):
    assert _run(capsys, "are", "--family", "gaussian-real", "--target", "2")[0] == 4
    assert _run(capsys, "are", "--family", "student", "--target", "0.9")[0] == 2
    assert _run(capsys, "are", "--family", "gaussian-real", "--kappa-grid", "5:1:1")[0] == 2
    assert _run(capsys, "are", "--family", "gaussian-real")[0] == 2


# --- simulate --------------------------------------------------------------------


def test_simulate_table3_size(capsys):
    code, rep, _ = _report(capsys, "simulate", "--study", "table3", "--reps", "200", "--seed", "7",
                           "--offsets", "0", "--n-list", "500")
    assert code == 0
    rate = rep["results"]["rejection"]["rows"][0]["rejection_rate"]
    assert 0.02 <= rate <= 0.09


def test_simulate_breakdown(capsys, tmp_path):
    code, _, _ = _run(capsys, "simulate", "--study", "breakdown", "--out-dir", tmp_path)
    rep = load_report((tmp_path / "breakdown_report.json").read_text())
    assert code == 0
    assert all(row["bounded"] for row in rep["results"]["huber_k4"]["rows"])
    frechet = rep["results"]["frechet_k5"]["rows"]
    assert next(r for r in frechet if r["distance"] == 1e4)["displacement"] > 1e3
    assert (tmp_path / "breakdown_huber_k4.csv").read_text().startswith("distance,displacement,bound,bounded")


def test_simulate_bridge(capsys):
    code, rep, _ = _report(capsys, "simulate", "--study", "bridge")
    rows = rep["results"]["bridge"]["rows"]
    assert code == 0
    assert rows[0]["dist_to_median"] <= 1e-4 and rows[-1]["dist_to_frechet"] <= 1e-4


def test_simulate_bootstrap_writes_qq(capsys, tmp_path):
    code, _, _ = _run(capsys, "simulate", "--study", "bootstrap", "--reps", "60", "--out-dir", tmp_path)
    assert code == 0
    rep = load_report((tmp_path / "bootstrap_report.json").read_text())
    assert 0.3 < rep["results"]["frobenius_ratio"] < 3
    for j in range(3):
        assert len((tmp_path / f"bootstrap_qq_coord{j}.csv").read_text().splitlines()) == 61
    assert (tmp_path / "bootstrap_bootstrap_raw_replicate_coords.csv").exists()


def test_simulate_small_tables(capsys, tmp_path):
    code, _, _ = _run(capsys, "simulate", "--study", "table1", "--reps", "100", "--threads", "2", "--out-dir", tmp_path)
    assert code == 0
    rep = load_report((tmp_path / "table1_report.json").read_text())
    assert {"contaminated_lognormal", "log_laplace"} <= set(rep["results"])
    assert (tmp_path / "table1_contaminated_lognormal_raw_frechet.csv").exists()
    code, rep, _ = _report(capsys, "simulate", "--study", "table2", "--reps", "100", "--mc-reps", "100",
                           "--n-list", "50", "--c-list", "0.3", "--sphere-dims", "2")
    assert code == 0 and rep["results"]["sphere2"]["rows"][0]["n"] == 50


def test_simulate_is_reproducible(capsys):
    argv = ["simulate", "--study", "breakdown", "--seed", "3"]
    a = without_timing(_report(capsys, *argv)[1])
    b = without_timing(_report(capsys, *argv)[1])
    assert dump_report(a) == dump_report(b)


@pytest.mark.parametrize("argv", [
    ["simulate", "--study", "table9"],
    ["simulate", "--study", "table3", "--reps", "10"],
    ["simulate", "--study", "table1", "--reps", "50"],
    ["simulate", "--study", "bootstrap", "--reps", "10"],
    ["simulate", "--study", "bridge", "--threads", "0"],
])
def test_simulate_bad_config(capsys, argv):
    assert _run(capsys, *argv)[0] == 2


def test_simulate_bootstrap_on_user_dataset(capsys):
    code, rep, _ = _report(capsys, "simulate", "--study", "bootstrap", "--reps", "50", "--dataset", DATA / "sphere.csv")
    assert code == 0
    assert rep["config"]["settings"]["manifold"] == "sphere(2)" and rep["config"]["settings"]["n"] == 40
    assert 0.3 < rep["results"]["frobenius_ratio"] < 3
