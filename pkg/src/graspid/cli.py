"""Command-line entry points: simulate, estimate, friction and eval.

Exit codes are 0 on success, 1 on usage errors and 2 on data errors.
"""
from __future__ import annotations

import sys
import time
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import io
from .baseline import baseline_least_squares
from .friction import InitialSlipError, ServoConfig, run_trials
from .graph import DataError, SolverConfig, build_graph
from .simulate import SimConfig, add_force_noise, run_sim
from .solver import solve

USAGE_EXIT = 1
DATA_EXIT = 2


class UsageFailure(click.UsageError):
    exit_code = USAGE_EXIT


class DataFailure(click.ClickException):
    exit_code = DATA_EXIT


def _data(fn, *args):
    try:
        return fn(*args)
    except (io.DataFormatError, DataError, OSError) as exc:
        raise DataFailure(str(exc)) from None


@click.group()
def cli():
    """Inertial parameter and friction estimation for grasped objects."""


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False),
              help="JSON with params, hull and contact_points.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False),
              help="JSON simulation config (defaults when omitted).")
@click.option("--noise-sigma2", default=0.0, type=float, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def simulate(model_path, config_path, noise_sigma2, seed, out):
    """Simulate a grasped body and write a trajectory JSONL file."""
    if noise_sigma2 < 0:
        raise UsageFailure("--noise-sigma2 must be non-negative")
    model = _data(io.load_model, model_path)
    config = _data(io.load_sim_config, config_path) if config_path else SimConfig()
    traj = run_sim(model, replace(config, seed=seed))
    if noise_sigma2 > 0:
        traj = add_force_noise(traj, noise_sigma2, seed)
    io.write_trajectory(traj, out)
    click.echo(f"{len(traj)} samples written to {out}")


@cli.command()
@click.option("--data", "data_path", required=True, type=click.Path(dir_okay=False))
@click.option("--hull", "hull_path", required=True, type=click.Path(dir_okay=False))
@click.option("--method", required=True, type=click.Choice(io.METHODS))
@click.option("--prior", "prior_path", type=click.Path(dir_okay=False))
@click.option("--solver-config", "solver_path", type=click.Path(dir_okay=False),
              help="key = value overrides of the solver settings.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def estimate(data_path, hull_path, method, prior_path, solver_path, out):
    """Estimate inertial parameters and write a JSON report."""
    if method == "c-plus-g" and not prior_path:
        raise UsageFailure("method c-plus-g requires --prior")
    traj = _data(io.read_trajectory, data_path)
    if len(traj) < 3:
        raise UsageFailure(f"{data_path}: at least 3 timesteps are required, got {len(traj)}")
    hull = _data(io.load_hull, hull_path)
    prior = _data(io.load_params, prior_path) if prior_path else None
    report = {"dataset": str(data_path), "method": method}
    if method == "baseline":
        start = time.perf_counter()
        try:
            result = baseline_least_squares(traj, smoothing=len(traj) > 51)
        except ValueError as exc:
            raise DataFailure(str(exc)) from None
        report.update(wall_time=time.perf_counter() - start, rank=int(result.rank),
                      rank_deficient=bool(result.rank_deficient),
                      singular_values=result.singular_values.tolist(), cost_trace=[],
                      estimate=_forms(vector=result.vector))
    else:
        base = _data(io.load_solver_config, solver_path) if solver_path else SolverConfig()
        config = replace(base, variant=method)
        try:
            sol = solve(build_graph(traj, hull, config, prior))
        except DataError as exc:
            raise DataFailure(str(exc)) from None
        estimate_ = (_forms(params=sol.params) if method != "baseline-fg"
                     else _forms(vector=sol.vector))
        report.update(wall_time=sol.wall_time, iterations=sol.iterations,
                      termination=sol.termination, failed=sol.failed,
                      cost_trace=list(sol.cost_trace), messages=list(sol.messages),
                      violations=[v.constraint for v in sol.violations],
                      constraint_weight=sol.constraint_weight, estimate=estimate_)
    io.write_report(report, out)
    m = report["estimate"].get("matrix", {}).get("mass", report["estimate"]["vector"][0])
    click.echo(f"{method}: mass {m:.6g}, report written to {out}")


def _forms(vector=None, params=None):
    try:
        return io.estimate_forms(vector=vector, params=params)
    except ValueError:
        return {"vector": np.asarray(vector, float).tolist()}


@cli.command()
@click.option("--mu-true", required=True, type=float)
@click.option("--servo-config", "servo_path", type=click.Path(dir_okay=False),
              help="key = value servo settings.")
@click.option("--trials", default=10, type=int, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def friction(mu_true, servo_path, trials, seed, out):
    """Run simulated slip trials and write per-trial estimates to CSV."""
    if trials < 1:
        raise UsageFailure("--trials must be at least 1")
    if not mu_true > 0:
        raise UsageFailure("--mu-true must be positive")
    try:
        cfg = (io.dataclass_from_key_values(ServoConfig, Path(servo_path).read_text())
               if servo_path else ServoConfig())
    except (io.DataFormatError, OSError) as exc:
        raise UsageFailure(f"invalid servo config: {exc}") from None
    try:
        results = run_trials(mu_true, cfg, trials, seed)
    except InitialSlipError as exc:
        raise UsageFailure(str(exc)) from None
    rows = list(io.friction_rows(results))
    errors = [abs(r["mu_est"] - mu_true) for r in rows]
    median = float(np.median(errors))
    for r, e in zip(rows, errors):
        r["abs_error"] = e
    rows.append({"object_id": "summary", "trial": "median", "mu_true": mu_true,
                 "mu_est": float(np.median([r["mu_est"] for r in rows])),
                 "abs_error": median})
    io.write_csv(rows, io.FRICTION_COLUMNS + ("abs_error",), out)
    click.echo(f"{trials} trials, median |error| {median:.4g}")


@cli.command(name="eval")
@click.option("--gt", "gt_path", required=True, type=click.Path(dir_okay=False))
@click.option("--reports", "report_paths", required=True, multiple=True,
              type=click.Path(dir_okay=False), help="Repeat or pass several paths.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def evaluate(gt_path, report_paths, out):
    """Compare reports against ground truth and write a metrics CSV."""
    gt = _data(io.load_params, gt_path)
    rows = []
    for path in report_paths:
        try:
            report = io.read_report(path)
            est = io.report_matrix_form(report)
        except (io.DataFormatError, KeyError, ValueError) as exc:
            raise DataFailure(f"{path}: cannot parse report ({exc})") from None
        rows.append(io.metrics_row(report.get("dataset", str(path)), report["method"], est,
                                   gt, float(report.get("wall_time", 0.0))))
    io.write_csv(rows, io.METRIC_COLUMNS, out)
    for r in rows:
        click.echo(f"{r['method']}: inertial error {r['inertial_error']:.6g}")


def _expand_reports(args):
    """Allow ``--reports a.json b.json`` by attaching bare paths to the option."""
    out, attach = [], False
    for a in args:
        if a == "--reports":
            attach = True
            continue
        if a.startswith("-"):
            attach = False
        elif attach:
            out.append("--reports")
        out.append(a)
    return out


def main(argv=None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    try:
        cli.main(args=_expand_reports(args), prog_name="graspid", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return USAGE_EXIT
    except click.UsageError as exc:
        exc.show()
        return USAGE_EXIT
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
