"""
Command-line interface.

Subcommands: ``run`` (projected gradient with bounds), ``estimate`` (bounds
for one control), ``dofs`` (space dimensions) and ``verify`` (invariant
suite). Exit codes: 0 success, 1 failed invariant, 2 invalid input,
3 numerical failure.
"""

import csv
import json
import math
import os
import sys

import click
import numpy as np

from . import algorithms as alg
from . import checks
from . import fem
from . import ocp_core as core
from .config import ConfigError, load_config
from .mesh import unit_square_mesh
from .problems import (PrecisionError, majorant_unconstrained, reference_cost,
                       solve_unconstrained_system)

TRACE_HEADER = ["iter", "J_lower_v", "J_upper_v", "J_lower_u", "step",
                "err_sq_lower", "err_sq_upper"]

EXIT_INVARIANT = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

NUMERICAL_ERRORS = (fem.SolverError, core.InvalidControlError, PrecisionError,
                    FloatingPointError, np.linalg.LinAlgError)


def _fail(code, message):
    click.echo("error: " + message, err=True)
    sys.exit(code)


def _load(path):
    try:
        return load_config(path)
    except ConfigError as exc:
        _fail(EXIT_INPUT, str(exc))


def _discretization(cfg):
    d = cfg.discretization
    return core.Discretization(cfg.problem_data(), unit_square_mesh(d.n), d.p_state, d.p_flux)


def read_control(path, space):
    """Coefficient file: first line the count, then one value per line."""
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        count = int(lines[0])
        values = np.array([float(x) for x in lines[1:]])
    except (OSError, ValueError, IndexError) as exc:
        raise ConfigError("malformed control file {}: {}".format(path, exc)) from exc
    if count != len(values):
        raise ConfigError("control file declares {} values but holds {}".format(count, len(values)))
    if count != space.n_dofs:
        raise ConfigError("control has {} coefficients, the control space has {}".format(
            count, space.n_dofs))
    if not np.all(np.isfinite(values)):
        raise ConfigError("control file holds non-finite values")
    return fem.FeFunction(space, values)


def write_control(path, v):
    with open(path, "w") as fh:
        fh.write("{}\n".format(v.space.n_dofs))
        for c in v.coefficients:
            fh.write("{!r}\n".format(float(c)))


def _fmt(x):
    return "" if x is None else repr(float(x))


def write_trace(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for r in records:
            w.writerow([r.k, _fmt(r.j_lower_v), _fmt(r.j_upper_v), _fmt(r.j_lower_u),
                        _fmt(r.step), _fmt(r.err_sq_lower), _fmt(r.err_sq_upper)])


def _record_dict(r):
    return {"iter": r.k, "J_lower_v": r.j_lower_v, "J_upper_v": float(r.j_upper_v),
            "J_lower_u": r.j_lower_u, "step": r.step,
            "change": None if r.change is None else float(r.change),
            "err_sq_lower": r.err_sq_lower, "err_sq_upper": r.err_sq_upper}


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.floating):
        return _json_safe(float(obj))
    return obj


@click.group()
def main():
    """Guaranteed cost bounds for a distributed optimal control problem."""


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output directory (overrides output.dir).")
def run(config_path, out_dir):
    """Projected gradient method with bounds at every iterate."""
    cfg = _load(config_path)
    out_dir = out_dir or cfg.output.dir
    os.makedirs(out_dir, exist_ok=True)
    trace_path = os.path.join(out_dir, "trace.csv")
    disc = _discretization(cfg)
    try:
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            trace = alg.projected_gradient(disc, params=cfg.pg_params())
    except alg.AlgorithmError as exc:
        write_trace(trace_path, exc.trace.records)
        _fail(EXIT_NUMERICAL, str(exc))
    write_trace(trace_path, trace.records)
    write_control(os.path.join(out_dir, "control.txt"), trace.final_control)

    last = trace.records[-1]
    summary = {
        "config": cfg.to_dict(),
        "c_omega": cfg.friedrichs,
        "dofs": {"control": disc.control_space.n_dofs, "state": disc.state_space.n_dofs,
                 "flux": disc.flux_space.n_dofs},
        "iterations": len(trace.records),
        "final": _record_dict(last),
        "records": [_record_dict(r) for r in trace.records],
    }
    try:
        if cfg.problem.ball_radius is None:
            summary["reference_optimal_cost"] = reference_cost(cfg.case()).j_opt
        if cfg.problem.unconstrained:
            y, u = solve_unconstrained_system(disc)
            tau = core.tau_hat(disc, u, 1.0)
            beta = core.beta_hat(disc, u, tau)
            tau = core.tau_hat(disc, u, beta)
            summary["unconstrained_system"] = {
                "J_h": core.discrete_cost(disc, u),
                "majorant": majorant_unconstrained(disc, y, tau, beta),
                "beta": beta,
            }
    except NUMERICAL_ERRORS as exc:
        _fail(EXIT_NUMERICAL, str(exc))
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(_json_safe(summary), fh, indent=2)
    click.echo("{} iterations: J_lower_v={:.10g} J_upper_v={:.10g} J_lower_u={:.10g}".format(
        len(trace.records), last.j_lower_v, last.j_upper_v, last.j_lower_u))


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--control", "control_path", type=click.Path(), default=None,
              help="Coefficient file; defaults to the interpolated closed-form optimal control.")
def estimate(config_path, control_path):
    """Bounds for J(v) and J(u) at a single control."""
    cfg = _load(config_path)
    disc = _discretization(cfg)
    if control_path is None:
        v = fem.interpolate(disc.control_space, cfg.case().u_opt)
        v = core.project(v, disc.problem.admissible)
    else:
        try:
            v = read_control(control_path, disc.control_space)
        except ConfigError as exc:
            _fail(EXIT_INPUT, str(exc))
    try:
        b = alg.generate_cost_estimates(disc, v, cfg.alg1_params())
    except core.InvalidControlError as exc:
        _fail(EXIT_INPUT, str(exc))
    except NUMERICAL_ERRORS as exc:
        _fail(EXIT_NUMERICAL, str(exc))
    click.echo("J_lower_v {!r}".format(float(b.j_lower_v)))
    click.echo("J_upper_v {!r}".format(float(b.j_upper_v)))
    click.echo("J_lower_u {!r}".format(float(b.j_lower_u)))


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
def dofs(config_path):
    """Dimensions of the control, state and flux spaces."""
    cfg = _load(config_path)
    d = cfg.discretization
    m = unit_square_mesh(d.n)
    dims = [fem.build_space(m, fem.DISCONTINUOUS, d.p_control).n_dofs,
            fem.build_space(m, fem.LAGRANGE, d.p_state).n_dofs,
            fem.build_space(m, fem.RAVIART_THOMAS, d.p_flux).n_dofs]
    click.echo(" ".join(str(x) for x in dims))


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--check", "names", multiple=True, type=click.Choice(sorted(checks.CHECKS)),
              help="Run only the named invariant (repeatable).")
def verify(config_path, names):
    """Invariant suite on small meshes."""
    cfg = _load(config_path)
    results = checks.run_checks(cfg.problem_data(), names or None)
    failed = [n for n, (ok, _) in results.items() if not ok]
    for name, (ok, detail) in results.items():
        click.echo("{} {}: {}".format("PASS" if ok else "FAIL", name, detail))
    if failed:
        click.echo("failed invariants: " + ", ".join(failed), err=True)
        sys.exit(EXIT_INVARIANT)


if __name__ == "__main__":
    main()
