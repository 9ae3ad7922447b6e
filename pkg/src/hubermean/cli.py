"""Command-line front end: ``hubermean {estimate,test,are,simulate}``.

Exit codes: 0 success, 2 usage, parse or domain errors, 3 solver did not
converge, 4 numerical failure (singular covariance, no ARE crossing, ...).
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bench
from .distributions import SeededRng, VonMisesFisher, sample
from .efficiency import are_table, family_function, find_kappa_for_target
from .errors import (
    CutLocusError,
    DegenerateScaleError,
    DomainError,
    NoCrossingError,
    NotConvergedError,
    SingularHessianError,
    SolverError,
)
from .estimators import SolverConfig, default_cutoff, huber_mean
from .inference import limiting_covariance, location_test
from .io import (
    dump_report,
    make_report,
    read_dataset,
    read_point,
    write_csv_columns,
)
from .losses import LossSpec, Sample, parse_cutoff
from .manifolds import ManifoldPoint, ManifoldTag, euclidean, sphere, spd

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3
EXIT_NUMERICAL = 4

NUMERICAL_ERRORS = (SingularHessianError, NoCrossingError, SolverError, CutLocusError, DegenerateScaleError)
STUDIES = ("table1", "table2", "table3", "breakdown", "bridge", "bootstrap")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _cutoff_arg(text: str):
    if text.strip().lower() == "auto":
        return "auto"
    try:
        return parse_cutoff(text)
    except (DomainError, ValueError) as exc:
        raise argparse.ArgumentTypeError(f"invalid cutoff {text!r}: expected a number, auto, inf or 0") from exc


def _alpha_arg(text: str) -> float:
    try:
        a = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid alpha {text!r}") from exc
    if not 0 < a < 1:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return a


def _grid_arg(text: str) -> list[float]:
    try:
        lo, hi, step = (float(p) for p in text.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("kappa grid must look like lo:hi:step") from exc
    if not (0 < lo <= hi and step > 0):
        raise argparse.ArgumentTypeError("kappa grid needs 0 < lo <= hi and step > 0")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + i * step for i in range(count)]


def _int_list(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifold", type=ManifoldTag.parse, default=None,
                   help="expected manifold, e.g. sphere(2); must match the file header")
    p.add_argument("--c", type=_cutoff_arg, default=1.0, help="cutoff: number, auto, inf or 0")
    p.add_argument("--step", type=float, default=None, help="step size in (0, 1]")
    p.add_argument("--tol", type=float, default=1e-9, help="gradient-norm tolerance")
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="report path (default: standard output)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hubermean", description="Huber means on Riemannian manifolds")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    est = sub.add_parser("estimate", help="Huber mean of a dataset")
    est.add_argument("dataset", type=Path)
    _solver_flags(est)
    est.add_argument("--loss", choices=("huber", "pseudo"), default="huber")

    tst = sub.add_parser("test", help="one-sample location test")
    tst.add_argument("dataset", type=Path)
    tst.add_argument("--null-point", type=Path, required=True, help="single-row dataset file")
    tst.add_argument("--alpha", type=_alpha_arg, default=0.05)
    _solver_flags(tst)

    are = sub.add_parser("are", help="asymptotic relative efficiency against the Fréchet mean")
    are.add_argument("--family", required=True,
                     choices=("gaussian-real", "circle-gaussian", "circle-laplace", "laplace-real"))
    are.add_argument("--sigma", type=float, default=1.0)
    mode = are.add_mutually_exclusive_group(required=True)
    mode.add_argument("--kappa-grid", type=_grid_arg, help="lo:hi:step")
    mode.add_argument("--target", type=float, help="smallest kappa reaching this ARE")
    are.add_argument("--out", type=Path, default=None, help="also write a JSON report here")

    sim = sub.add_parser("simulate", help="run one of the simulation studies")
    sim.add_argument("--study", required=True, choices=STUDIES)
    sim.add_argument("--reps", type=int, default=None, help="replicates (bootstrap: resamples)")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--threads", type=int, default=1)
    sim.add_argument("--out-dir", type=Path, default=None)
    sim.add_argument("--n-list", type=_int_list, default=None, help="table2/table3 sample sizes")
    sim.add_argument("--c-list", type=_float_list, default=None, help="table2 cutoffs")
    sim.add_argument("--sphere-dims", type=_int_list, default=None, help="table2 sphere dimensions")
    sim.add_argument("--offsets", type=_float_list, default=None, help="table3 offsets in degrees")
    sim.add_argument("--mc-reps", type=int, default=1000, help="table2 reference replicates")
    sim.add_argument("--dataset", type=Path, default=None,
                     help="bootstrap: dataset file to resample instead of the synthetic one")
    return parser


def _solver_config(args) -> SolverConfig:
    return SolverConfig(step_alpha=args.step, grad_tol=args.tol, max_iter=args.max_iter)


def _resolve_cutoff(args, data, cfg) -> float:
    return default_cutoff(data, cfg) if args.c == "auto" else args.c


def _emit(report: dict, out: Path | None) -> None:
    text = dump_report(report)
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _config_echo(args) -> dict:
    skip = {"out", "out_dir", "dataset", "null_point", "func", "command"}
    echo = {}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        echo[key] = str(value) if isinstance(value, (Path, ManifoldTag)) else value
    for key in ("dataset", "null_point"):
        if getattr(args, key, None) is not None:
            echo[key] = Path(getattr(args, key)).name
    return echo


def cmd_estimate(args) -> int:
    t0 = time.perf_counter()
    data = read_dataset(args.dataset, args.manifold)
    cfg = _solver_config(args)
    c = _resolve_cutoff(args, data, cfg)
    spec = LossSpec.huber(c) if args.loss == "huber" else LossSpec.pseudo(c)
    rep = huber_mean(data, spec, cfg)
    results = {
        "manifold": str(data.tag),
        "n": data.n,
        "cutoff": c,
        "loss": spec.kind,
        "mean": rep.mean.coords,
        "iterations": rep.iterations,
        "final_grad_norm": rep.final_grad_norm,
        "objective_value": rep.objective_value,
        "converged": rep.converged,
        "left_data_ball": rep.left_data_ball,
    }
    report = make_report("estimate", _config_echo(args), args.seed, results,
                         {"seconds": time.perf_counter() - t0})
    _emit(report, args.out)
    if not rep.converged:
        print(f"hubermean: solver stopped after {rep.iterations} iterations "
              f"with gradient norm {rep.final_grad_norm:.3g}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_test(args) -> int:
    t0 = time.perf_counter()
    data = read_dataset(args.dataset, args.manifold)
    null = read_point(args.null_point, data.tag)
    cfg = _solver_config(args)
    c = _resolve_cutoff(args, data, cfg)
    rep = huber_mean(data, LossSpec.huber(c), cfg)
    if not rep.converged:
        raise NotConvergedError("the sample Huber mean did not converge")
    cov = limiting_covariance(data, rep.mean, c)
    res = location_test(data.n, rep.mean, cov, null, args.alpha)
    results = {
        "manifold": str(data.tag),
        "n": data.n,
        "cutoff": c,
        "mean": rep.mean.coords,
        "null_point": null.coords,
        "covariance": cov.a_hat,
        "sigma_hat": cov.sigma_hat,
        "h_hat": cov.h_hat,
        "excluded_count": cov.excluded_count,
        "test": {
            "statistic_Tn": res.statistic_Tn,
            "df": res.df,
            "critical_value": res.critical_value,
            "p_value": res.p_value,
            "reject": res.reject,
            "alpha": res.alpha,
        },
    }
    report = make_report("test", _config_echo(args), args.seed, results,
                         {"seconds": time.perf_counter() - t0})
    _emit(report, args.out)
    return EXIT_OK


def cmd_are(args) -> int:
    t0 = time.perf_counter()
    fn = family_function(args.family, args.sigma)
    if args.target is not None:
        kappa = find_kappa_for_target(fn, args.target)
        sys.stdout.write(f"{kappa!r}\n")
        results = {"target": args.target, "kappa": kappa}
    else:
        points = are_table(fn, args.kappa_grid, args.sigma)
        lines = ["kappa,sigma,are"] + [f"{p.kappa!r},{p.sigma!r},{p.are!r}" for p in points]
        sys.stdout.write("\n".join(lines) + "\n")
        results = {"points": [{"kappa": p.kappa, "sigma": p.sigma, "are": p.are} for p in points]}
    if args.out is not None:
        report = make_report("are", _config_echo(args), None, results,
                             {"seconds": time.perf_counter() - t0})
        args.out.write_text(dump_report(report))
    return EXIT_OK


# ---------------------------------------------------------------------------
# studies


def _need_reps(reps: int | None, default: int, minimum: int, study: str) -> int:
    reps = default if reps is None else reps
    if reps < minimum:
        raise DomainError(f"study {study} needs --reps >= {minimum}")
    return reps


def _study_table1(args, seed: SeededRng):
    reps = _need_reps(args.reps, bench.DEFAULT_REPS, 100, "table1")
    eye = ManifoldPoint(spd(2), np.eye(2))
    tables = {}
    for i, (name, law) in enumerate([("contaminated_lognormal", bench.contaminated_lognormal()),
                                     ("log_laplace", bench.log_laplace_spd2())]):
        tables[name] = bench.mse_bias_variance(law, eye, bench.table1_estimators(), 100, reps,
                                               seed.child(i), threads=args.threads)
    return tables, {"reps": reps, "n": 100}


def _study_table2(args, seed: SeededRng):
    reps = _need_reps(args.reps, bench.DEFAULT_REPS, 100, "table2")
    dims = args.sphere_dims or [2, 3]
    c_list = args.c_list or [0.1, 0.3, 0.5]
    n_list = args.n_list or [50, 100, 500, 1000]
    tables = {}
    for i, k in enumerate(dims):
        tables[f"sphere{k}"] = bench.covariance_error_study(
            sphere(k), 30.0, c_list, n_list, reps, seed.child(i),
            mc_reps=args.mc_reps, threads=args.threads)
    return tables, {"reps": reps, "sphere_dims": dims, "c_list": c_list, "n_list": n_list,
                    "mc_reps": args.mc_reps, "kappa": 30.0}


def _study_table3(args, seed: SeededRng):
    reps = _need_reps(args.reps, bench.DEFAULT_REPS, 200, "table3")
    offsets = args.offsets if args.offsets is not None else [0, 1, 2, 3, 4, 5]
    n_list = args.n_list or [100, 300, 500, 1000]
    table = bench.test_power_study(bench.north_pole(2), offsets, 30.0, 0.3, n_list, reps, 0.05,
                                   seed, threads=args.threads)
    return {"rejection": table}, {"reps": reps, "offsets_deg": offsets, "n_list": n_list,
                                  "kappa": 30.0, "c": 0.3, "alpha": 0.05}


def _study_breakdown(args, seed: SeededRng):
    gen = seed.child(0).generator()
    data = Sample(euclidean(2), gen.standard_normal((10, 2)))
    distances = [10.0**e for e in range(0, 7)]
    tables = {}
    for name, k, c in [("huber_k4", 4, 1.0), ("frechet_k5", 5, math.inf)]:
        rep = bench.breakdown_probe(data, k, c, distances, seed.child(1))
        rows = [{"distance": t, "displacement": d, "bound": b, "bounded": d <= b + 1e-6}
                for t, d, b in zip(rep.outlier_distance_schedule, rep.displacement, rep.bound_values)]
        tables[name] = bench.TableReport(["distance", "displacement", "bound", "bounded"], rows,
                                         {"n": rep.n, "k": k, "c": c, "radius_R": rep.radius_R})
    return tables, {"n": 10, "distances": distances}


def _study_bridge(args, seed: SeededRng):
    law = VonMisesFisher(bench.north_pole(2), 10.0)
    data = sample(law, 20, seed.child(0))
    grid = [10.0**e for e in range(-4, 4)]
    table = bench.limit_bridge_check(data, grid)
    return {"bridge": table}, {"n": 20, "kappa": 10.0, "c_grid": grid}


def _study_bootstrap(args, seed: SeededRng):
    B = _need_reps(args.reps, 300, 50, "bootstrap")
    if args.dataset is not None:
        data = read_dataset(args.dataset)
    else:
        data = bench.synthetic_shape_dataset(seed.child(0))
    c = 1.0
    res = bench.bootstrap_means(data, c, B, seed.child(1))
    cov = limiting_covariance(data, res.center, c)
    plug_in = cov.a_hat / data.n
    ratio = float(np.linalg.norm(res.covariance) / np.linalg.norm(plug_in))
    d = data.tag.dimension
    rows = [{"coordinate": j, "replicate_mean": float(res.replicate_coords[:, j].mean()),
             "replicate_sd": float(res.replicate_coords[:, j].std(ddof=1))} for j in range(d)]
    table = bench.TableReport(["coordinate", "replicate_mean", "replicate_sd"], rows,
                              {"B": B, "n": data.n, "c": c},
                              {"replicate_coords": res.replicate_coords})
    extra = {"bootstrap_covariance": res.covariance, "plug_in_covariance": plug_in,
             "frobenius_ratio": ratio, "center": res.center.coords}
    settings = {"B": B, "n": data.n, "c": c, "manifold": str(data.tag)}
    return {"bootstrap": table}, settings, extra, res.qq


def _write_raw(out_dir: Path, table_name: str, raw: dict) -> None:
    for key, arr in raw.items():
        a = np.asarray(arr, dtype=float)
        a = a.reshape(a.shape[0], -1) if a.ndim > 1 else a.reshape(-1, 1)
        cols = [f"v{j}" for j in range(a.shape[1])]
        write_csv_columns(out_dir / f"{table_name}_raw_{key}.csv", cols, a.tolist())


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    if args.threads < 1:
        raise DomainError("--threads must be at least 1")
    seed = SeededRng(args.seed)
    runner = {
        "table1": _study_table1, "table2": _study_table2, "table3": _study_table3,
        "breakdown": _study_breakdown, "bridge": _study_bridge, "bootstrap": _study_bootstrap,
    }[args.study]
    out = runner(args, seed)
    tables, settings = out[0], out[1]
    extra = out[2] if len(out) > 2 else {}
    qq = out[3] if len(out) > 3 else []
    results = {name: {"columns": t.columns, "rows": t.rows, "meta": t.meta} for name, t in tables.items()}
    results.update(extra)
    config = _config_echo(args)
    config["settings"] = settings
    report = make_report("simulate", config, args.seed, results, {"seconds": time.perf_counter() - t0})
    if args.out_dir is None:
        sys.stdout.write(dump_report(report))
        return EXIT_OK
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / f"{args.study}_report.json").write_text(dump_report(report))
    for name, t in tables.items():
        (args.out_dir / f"{args.study}_{name}.csv").write_text(t.to_csv())
        _write_raw(args.out_dir, f"{args.study}_{name}", t.raw)
    for j, (theory, emp) in enumerate(qq):
        write_csv_columns(args.out_dir / f"{args.study}_qq_coord{j}.csv", ["normal_quantile", "sample_quantile"],
                          zip(theory.tolist(), emp.tolist()))
    return EXIT_OK


COMMANDS = {"estimate": cmd_estimate, "test": cmd_test, "are": cmd_are, "simulate": cmd_simulate}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"hubermean: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NotConvergedError as exc:
        print(f"hubermean: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except NUMERICAL_ERRORS as exc:
        print(f"hubermean: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DomainError, ValueError, OSError) as exc:
        print(f"hubermean: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
