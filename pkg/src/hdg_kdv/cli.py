"""Command-line entry point ``hdg-kdv``.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 threshold failure in ``--assert`` mode.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import ConfigError, load_config
from .flux import StabilizationParams, check_stability_conditions
from .local import LocalSolveError
from .mesh import build_uniform_mesh
from .polybasis import build_reference_basis
from .report import (
    Check,
    convergence_checks,
    format_table,
    write_energy_csv,
    write_errors_csv,
    write_report,
    write_snapshots,
)
from .stepper import NewtonError
from .trace_system import SingularSystemError
from .verify import ExperimentReport, ProjectionError, hdg_projection, l2_error

log = logging.getLogger("hdg_kdv")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ASSERT = 0, 2, 3, 4


class UsageError(ValueError):
    pass


def _levels(text: str) -> tuple:
    try:
        a, b = text.split("..")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must look like n0..n1, got {text!r}") from None


def _dt_rule(args, default: ex.DtRule) -> ex.DtRule:
    if args.dt is not None:
        return ex.DtRule("fixed", args.dt)
    if getattr(args, "dt_rule", None):
        return ex.DtRule(args.dt_rule, args.dt_coeff)
    return default


def _out_dir(path) -> Path | None:
    if path is None:
        return None
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(checks, assert_mode: bool) -> int:
    for c in checks:
        print(c.line())
    if assert_mode and not all(c.passed for c in checks):
        return EXIT_ASSERT
    return EXIT_OK


def _config_lines(cfg: ex.RunConfig, **extra) -> list[str]:
    meta = cfg.metadata()
    meta.update(extra)
    return [f"{k} = {v}" for k, v in meta.items()]


# -- subcommands -----------------------------------------------------------------


def cmd_convergence(args) -> int:
    exp = args.experiment
    make = ex.experiment_1_config if exp == 1 else ex.experiment_2_config
    run = ex.run_experiment_1 if exp == 1 else ex.run_experiment_2
    default_levels = (1, 5) if exp == 1 else (3, 7)
    levels = args.levels or default_levels
    rule = _dt_rule(args, ex.DtRule())
    reports, checks = [], []
    for k in args.k:
        cfg = make(k, levels=levels, dt_rule=rule, scheme=args.scheme, T=args.T)
        rep = run(cfg)
        reports.append(rep)
        preset = levels == default_levels and rule == ex.DtRule() and cfg.scheme == "midpoint" and args.T == 0.1
        table = (ex.TABLE_1 if exp == 1 else ex.TABLE_2) if preset else None
        checks += convergence_checks(rep, table, k0_band=(0.7, 1.3) if exp == 2 else None)
    print(format_table(reports))
    out = _out_dir(args.out)
    if out:
        write_errors_csv(out / "errors.csv", reports)
        lines = _config_lines(cfg, k=",".join(map(str, args.k)), levels=f"{levels[0]}..{levels[1]}")
        write_report(out / "report.txt", lines, checks, format_table(reports).splitlines())
    return _finish(checks, args.assert_)


def _single_outputs(run: ex.SingleRun, out: Path | None, checks, extra=()):
    res = run.result
    if out:
        write_energy_csv(out / "energy.csv", res.times, res.norms)
        if res.snapshots:
            write_snapshots(out, run.disc, res.snapshots)
        write_report(out / "report.txt", _config_lines(run.config, N=run.config.N), checks, extra)


def _summary_lines(run: ex.SingleRun) -> list[str]:
    res = run.result
    lines = [
        f"steps = {len(res.times) - 1}, Newton iterations per stage: max {max(res.newton_iterations, default=0)}",
        f"initialization = {run.init_mode}",
        f"||u_h(T)|| = {res.norms[-1]:.3e}",
    ]
    for f in run.errors:
        lines.append(f"e_{f} = {run.errors[f]:.3e} (relative {run.relative_errors[f]:.3e})")
    return lines


def cmd_soliton(args) -> int:
    cfg = ex.soliton_config(N=args.N, k=args.k, dt_rule=ex.DtRule("fixed", args.dt), T=args.T,
                            snapshot_every=args.snapshot_every)
    run = ex.run_experiment_3(cfg)
    lines = _summary_lines(run)
    print("\n".join(lines))
    rel = run.relative_errors["u"]
    checks = [Check("relative L2 error of u at T below 1%", rel < 0.01, f"{rel:.3e}")]
    _single_outputs(run, _out_dir(args.out), checks, lines)
    return _finish(checks, args.assert_)


def cmd_two_soliton(args) -> int:
    cfg = ex.two_soliton_config(N=args.N, k=args.k, dt_rule=ex.DtRule("fixed", args.dt), T=args.T,
                                snapshot_every=args.snapshot_every)
    run = ex.run_experiment_4(cfg)
    summary = ex.interaction_summary(run.disc, run.snapshots)
    lines = _summary_lines(run)
    ot = summary.overlap_time
    lines.append("overlap time = " + ("not found" if ot is None else f"{ot:.3f}"))
    print("\n".join(lines))
    checks = [
        Check("tall wave starts behind and overtakes the short one", summary.crossing_detected),
        Check("overlap near t = 0.5", ot is not None and abs(ot - 0.5) <= 0.15,
              "none" if ot is None else f"t = {ot:.3f}"),
    ]
    _single_outputs(run, _out_dir(args.out), checks, lines)
    return _finish(checks, args.assert_)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        cfg.out_dir = args.out
    out = _out_dir(cfg.out_dir)
    result = ex.run_custom(cfg)
    if isinstance(result, ExperimentReport):
        print(format_table([result]))
        if out:
            write_errors_csv(out / "errors.csv", [result])
            write_report(out / "report.txt", _config_lines(cfg), [], format_table([result]).splitlines())
        return EXIT_OK
    lines = _summary_lines(result)
    log.info("Newton iterations per stage: %s", sorted(set(result.result.newton_iterations)))
    print("\n".join(lines))
    _single_outputs(result, out, [], lines)
    return EXIT_OK


def cmd_check_tau(args) -> int:
    params = StabilizationParams(*args.tau)
    rep = check_stability_conditions(params, args.delta)
    print(f"tau = ({', '.join(f'{v:g}' for v in args.tau)}), delta = {args.delta:g}")
    for line in rep.lines():
        print(line)
    return EXIT_OK


def cmd_projection_test(args) -> int:
    k = args.k
    if k < 1:
        raise UsageError("projection-test needs k >= 1")
    params = StabilizationParams(*args.tau)
    basis = build_reference_basis(k)
    checks = []
    rng = np.random.default_rng(0)
    c = rng.standard_normal((3, k + 1))
    polys = [np.polynomial.Polynomial(ci) for ci in c]
    mesh = build_uniform_mesh(0.0, 1.0, 4)
    pr = hdg_projection(mesh, basis, *polys, params)
    err = max(l2_error(getattr(pr, f), p, mesh, basis) for f, p in zip("uqp", polys))
    checks.append(Check(f"degree-{k} polynomials reproduced", err <= 1e-10, f"max L2 difference {err:.1e}"))

    errs, hs = [], []
    for n in range(1, 6):
        mesh = build_uniform_mesh(0.0, 1.0, 2**n)
        pr = hdg_projection(mesh, basis, np.sin, np.cos, lambda x: -np.sin(x), params)
        errs.append(max(l2_error(pr.u, np.sin, mesh, basis), l2_error(pr.q, np.cos, mesh, basis),
                        l2_error(pr.p, lambda x: -np.sin(x), mesh, basis)))
        hs.append(mesh.h)
    order = float(np.log(errs[-2] / errs[-1]) / np.log(hs[-2] / hs[-1]))
    for n, e in zip(range(1, 6), errs):
        print(f"h = 2^-{n}: max error {e:.2e}")
    checks.append(Check(f"projection error order >= {k + 0.8:.1f}", order >= k + 0.8, f"{order:.2f}"))
    return _finish(checks, args.assert_)


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hdg-kdv", description="HDG solver for u_t + u_xxx + F(u)_x = f")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add_assert(sp):
        sp.add_argument("--assert", dest="assert_", action="store_true",
                        help="exit with code 4 when a threshold fails")

    c = sub.add_parser("convergence", help="mesh-refinement study for experiment 1 or 2")
    c.add_argument("--experiment", type=int, choices=(1, 2), required=True)
    c.add_argument("--k", type=int, nargs="+", required=True)
    c.add_argument("--levels", type=_levels, help="n0..n1, level n uses 2^n elements")
    c.add_argument("--scheme", choices=("midpoint", "be"), default="midpoint")
    c.add_argument("--dt", type=float, help="fixed time step (overrides the h-dependent rule)")
    c.add_argument("--dt-rule", choices=("degree", "h2", "h3"))
    c.add_argument("--dt-coeff", type=float, default=0.1)
    c.add_argument("--T", type=float, default=0.1)
    c.add_argument("--out")
    add_assert(c)
    c.set_defaults(func=cmd_convergence)

    for name, N, dt, snap, func in (("soliton", 100, 1e-3, 100, cmd_soliton),
                                    ("two-soliton", 50, 1e-4, 500, cmd_two_soliton)):
        s = sub.add_parser(name)
        s.add_argument("--N", type=int, default=N)
        s.add_argument("--k", type=int, default=3)
        s.add_argument("--dt", type=float, default=dt)
        s.add_argument("--T", type=float, default=2.0)
        s.add_argument("--snapshot-every", type=int, default=snap)
        s.add_argument("--out")
        add_assert(s)
        s.set_defaults(func=func)

    r = sub.add_parser("run", help="run a problem described by a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("check-tau", help="evaluate the admissibility predicates of trace constants")
    t.add_argument("--tau", type=float, nargs=4, required=True, metavar=("QU_PLUS", "PU_PLUS", "QU_MINUS", "QP_MINUS"))
    t.add_argument("--delta", type=float, default=0.0)
    t.set_defaults(func=cmd_check_tau)

    pt = sub.add_parser("projection-test", help="exactness and convergence of the trace-tailored projection")
    pt.add_argument("--k", type=int, required=True)
    pt.add_argument("--tau", type=float, nargs=4, default=(0.0, -1.0, 1.0, 1.0))
    add_assert(pt)
    pt.set_defaults(func=cmd_projection_test)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError, ProjectionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NewtonError, LocalSolveError, SingularSystemError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
