"""Command line front-end: ``wied {solve,sweep,reference,diagnose} --config PATH``.

Exit codes: 0 success, 1 configuration or input error, 2 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import diagnostics as diag
from .config import RunConfig, load_config
from .energy import energy_trace, scaled_energy, to_scaled_time, weighted_energy
from .errors import NonConvergence, NonFinite
from .io import read_field, write_field
from .reference import solve_parabolic, write_step_log
from .solver import minimize

log = logging.getLogger("wied")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2


def thread_cap() -> int:
    raw = os.environ.get("WIED_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"WIED_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"WIED_THREADS must be a positive integer, got {raw!r}")
    return n


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_solve(cfg: RunConfig, out: Path) -> int:
    spec = cfg.problem
    try:
        u, report = minimize(spec, cfg.grid, cfg.solver)
        status = EXIT_OK
    except NonConvergence as exc:
        log.error("%s", exc)
        u, report, status = exc.field, exc.report, EXIT_SOLVER
    base = out / cfg.name
    write_field(base, u, spec.gamma, spec.epsilon)
    report.to_json(out / f"{cfg.name}_report.json")
    energy_trace(u, spec).to_csv(out / f"{cfg.name}_trace.csv")
    log.info("solve: converged=%s iterations=%d residual=%.3e energy=%.6g",
             report.converged, report.iterations, report.residual, report.energy["total"])
    return status


def run_reference(cfg: RunConfig, out: Path) -> int:
    rows = []
    status = EXIT_OK
    try:
        u = solve_parabolic(cfg.problem, cfg.grid, cfg.solver, step_log=rows)
    except NonConvergence as exc:
        log.error("%s", exc)
        u, status = exc.field, EXIT_SOLVER
    write_field(out / f"{cfg.name}_reference", u, cfg.problem.gamma, None)
    write_step_log(out / f"{cfg.name}_reference_steps.csv", rows)
    log.info("reference: %d steps, max Newton iterations %d", len(rows), max((r[1] for r in rows), default=0))
    return status


def run_sweep(cfg: RunConfig, out: Path) -> int:
    if not cfg.eps_list:
        raise ValueError("sweep needs problem.eps_list")
    spec = cfg.problem
    dc = cfg.diagnostics
    try:
        ref = solve_parabolic(spec, cfg.grid, cfg.solver)
        floor = None
        if dc.floor_refine:
            fine = solve_parabolic(spec, cfg.grid.refined(), cfg.solver)
            floor = diag.reference_floor(ref, fine, dc.cylinder_radius)
    except NonConvergence as exc:
        log.error("reference: %s", exc)
        return EXIT_SOLVER
    write_field(out / f"{cfg.name}_reference", ref, spec.gamma, None)

    def one(eps):
        solved = {}
        rep = diag.eps_sweep(spec, [eps], cfg.grid, cfg.solver, ref, dc.cylinder_radius, dc.theta, floor,
                             solved=solved)
        return rep, solved.get(eps)

    with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
        parts = list(pool.map(one, cfg.eps_list))
    # merge in epsilon order
    report = diag.ConvergenceReport(
        list(cfg.eps_list),
        [p.l2_errors[0] for p, _ in parts],
        [p.chi_mismatch[0] for p, _ in parts],
        dc.cylinder_radius,
        parts[0][0].theta,
        floor,
        {k: v for p, _ in parts for k, v in p.failures.items()},
        [p.solve_seconds[0] for p, _ in parts],
    )
    for eps, (_, u) in zip(cfg.eps_list, parts):
        if u is not None:
            write_field(out / f"{cfg.name}_eps{eps:g}", u, spec.gamma, eps)
    report.to_json(out / f"{cfg.name}_sweep.json")
    report.to_csv(out / f"{cfg.name}_sweep.csv")
    for e, err, chi in zip(report.eps_list, report.l2_errors, report.chi_mismatch):
        log.info("eps=%-8g l2_error=%.4e chi_mismatch=%.4e", e, err, chi)
    return EXIT_SOLVER if report.failures else EXIT_OK


def run_diagnose(cfg: RunConfig, out: Path, field_path=None) -> int:
    base = Path(field_path) if field_path else out / cfg.name
    u, header = read_field(base)
    if u.grid.metadata() != cfg.grid.metadata():
        raise ValueError(f"field grid {u.grid.metadata()} does not match the config grid {cfg.grid.metadata()}")
    spec = cfg.problem
    if header.get("epsilon") is not None and header["epsilon"] != spec.epsilon:
        spec = spec.with_epsilon(header["epsilon"])
    dc = cfg.diagnostics
    bounds = diag.check_energy_bounds(u, spec, cfg.slab_radii(spec.epsilon), dc.margin)
    bounds.to_json(out / f"{cfg.name}_energy_bounds.json")
    bounds.to_csv(out / f"{cfg.name}_slabs.csv")
    nd = diag.nondegeneracy(u, spec, dc.radii, dc.theta, dc.tol_nd)
    nd.to_json(out / f"{cfg.name}_nondegeneracy.json")
    trace = energy_trace(u, spec)
    residual, monotone = diag.check_derivative_law(trace)
    E = weighted_energy(u, spec).total
    J = scaled_energy(to_scaled_time(u, spec.epsilon), spec).total
    _write_json(out / f"{cfg.name}_derivative_law.json", {
        "residual_l1": residual,
        "monotone": monotone,
        "identity_defect": diag.derivative_identity_defect(trace),
        "E0": float(trace.E[0]),
        "scaling_defect": abs(spec.epsilon * E - J),
        "level_bound": spec.epsilon * bounds.C_est,
    })
    log.info("diagnose: kinetic_total=%.4g (C_est=%.4g) nondeg min_ratio=%s derivative residual=%.3e",
             bounds.kinetic_total, bounds.C_est, nd.min_ratio, residual)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wied", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("solve", "minimize the regularized energy"),
                        ("sweep", "epsilon sweep against the parabolic reference"),
                        ("reference", "implicit-Euler reference run"),
                        ("diagnose", "energy bounds, non-degeneracy and derivative law of a stored field")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--out", help="output directory (overrides [output] dir)")
        p.add_argument("--quiet", action="store_true", help="only report errors")
        if name == "diagnose":
            p.add_argument("--field", help="field dump base path (default: <out>/<name>)")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors are configuration errors; exit 2 is reserved for the solver
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    try:
        thread_cap()
        cfg = load_config(args.config)
        out = Path(args.out or cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "solve":
            return run_solve(cfg, out)
        if args.command == "sweep":
            return run_sweep(cfg, out)
        if args.command == "reference":
            return run_reference(cfg, out)
        return run_diagnose(cfg, out, args.field)
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except NonFinite as exc:
        log.error("%s", exc)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
