"""Command-line front end.

    rotflow propagator <scenario> --t T [--s S]
    rotflow evolve     <scenario> --t T [--s S] [--mode vector|scalar|solenoidal]
    rotflow solve      <scenario>
    rotflow verify     <scenario> --suite lplq|gradient|qbounds|smalltime|evolutionlaw|generator

Exit codes: 0 ok, 2 validation failure, 3 numerical failure,
4 non-convergence.  All reports are CSV files under --out; runs with the
same scenario and seed produce byte-identical reports.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import verify as verify_mod
from .field_grid import ScalarField, VectorField, divergence, lp_norm, write_field
from .kato_solver import solve_mild
from .ou_kernel import OUEvolution
from .propagator import commutation_check
from .quadrature import QuadratureError
from .scenario import Scenario, ScenarioError, load_scenario
from .vector_evolution import (GeneratorWindow, NotSolenoidalError,
                               evolve_solenoidal, evolve_vector,
                               generator_residual, leray_project,
                               relative_divergence)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_NO_CONVERGENCE = 4


def _write_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(rows)


def _fmt_matrix(A) -> str:
    return " / ".join(" ".join(repr(float(x)) for x in row) for row in np.atleast_2d(A))


def _resolve_threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("ROTFLOW_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            pass
    return os.cpu_count() or 1


def cmd_propagator(scn: Scenario, args) -> int:
    evo = scn.evolution()
    s = scn.s0 if args.s is None else args.s
    t = args.t
    b = evo.bundle(s, t)
    U, g, Q = b.propagator, b.drift, b.covariance
    d = scn.d

    ortho = np.linalg.norm(U.T @ U - np.eye(d))
    skew_gap = np.linalg.norm(Q - (t - s) * np.eye(d))
    mid = 0.5 * (s + t)
    Ua, Ub = evo.bundle(mid, t).propagator, evo.bundle(s, mid).propagator
    cocycle = np.linalg.norm(Ua @ Ub - U)

    print(f"propagator: {_fmt_matrix(U)}")
    print(f"drift: {' '.join(repr(float(x)) for x in g)}")
    print(f"covariance: {_fmt_matrix(Q)}")
    print(f"orthogonality_residual: {ortho!r}")
    print(f"covariance_isotropy_gap: {skew_gap!r}")
    print(f"cocycle_residual: {cocycle!r}")

    rows = [["quantity", "values"],
            ["propagator", _fmt_matrix(U)],
            ["drift", " ".join(repr(float(x)) for x in g)],
            ["covariance", _fmt_matrix(Q)],
            ["orthogonality_residual", repr(float(ortho))],
            ["covariance_isotropy_gap", repr(float(skew_gap))],
            ["cocycle_residual", repr(float(cocycle))]]
    _write_csv(os.path.join(args.out, "propagator.csv"), rows)
    return EXIT_OK


def cmd_evolve(scn: Scenario, args) -> int:
    evo = scn.evolution()
    s = scn.s0 if args.s is None else args.s
    t = args.t
    u0 = scn.initial_data()
    mode = "solenoidal" if args.solenoidal else args.mode

    if mode == "scalar":
        out_field = evo.evolve_scalar(u0.components[0], s, t)
        div_norm = ""
    elif mode == "solenoidal":
        out_field = evolve_solenoidal(evo, u0, s, t)
        div_norm = repr(lp_norm(divergence(out_field), 2))
    else:
        out_field = evolve_vector(evo, u0, s, t)
        div_norm = repr(lp_norm(divergence(out_field), 2))

    write_field(os.path.join(args.out, "evolved.rnsf"), out_field)
    rows = [["s", "t", "norm_2", f"norm_q(q={scn.q!r})", "norm_inf", "divergence_2"],
            [repr(float(s)), repr(float(t)), repr(lp_norm(out_field, 2)),
             repr(lp_norm(out_field, scn.q)), repr(lp_norm(out_field, np.inf)),
             div_norm]]
    _write_csv(os.path.join(args.out, "norms.csv"), rows)
    print(f"evolved field written; L2 norm {lp_norm(out_field, 2)!r}")
    return EXIT_OK


def cmd_solve(scn: Scenario, args) -> int:
    scn.validate_for_solve()
    evo = scn.evolution()
    u0 = scn.initial_data()
    rel = relative_divergence(u0)
    if rel > 1e-6:
        u0 = leray_project(u0)
    traj, report = solve_mild(evo, u0, scn.T0 - scn.s0, scn.solver,
                              p=scn.p, q=scn.q)
    for i, f in enumerate(traj.fields):
        write_field(os.path.join(args.out, f"traj_{i:04d}.rnsf"), f)
    _write_csv(os.path.join(args.out, "kato_report.csv"), report.csv_rows())
    summary = [["iterations", "converged", "duhamel_residual"],
               [str(report.iterations), str(report.converged).lower(),
                repr(report.duhamel_residual)]]
    _write_csv(os.path.join(args.out, "solve_summary.csv"), summary)
    print(f"picard iterations: {report.iterations}, converged: {report.converged}, "
          f"duhamel residual: {report.duhamel_residual!r}")
    return EXIT_OK if report.converged else EXIT_NO_CONVERGENCE


def _suite_lplq(scn, evo, args, gradient: bool):
    fit_fun = verify_mod.fit_gradient_rate if gradient else verify_mod.fit_lplq_rate
    tau_range = (args.tau_min, args.tau_max)
    rep = fit_fun(evo, None, scn.p, scn.q, tau_range=tau_range,
                  samples=args.samples, s=scn.s0, grid=scn.grid)
    rows = [["suite", "p", "q", "exponent_fit", "exponent_theory", "r_squared",
             "tau_min", "tau_max", "samples", "mode", "saturating", "pass"],
            ["gradient" if gradient else "lplq", repr(scn.p), repr(scn.q),
             repr(rep.exponent_fit), repr(rep.exponent_theory),
             repr(rep.r_squared), repr(rep.time_range[0]),
             repr(rep.time_range[1]), str(rep.samples), rep.mode,
             str(rep.saturating).lower(), str(rep.within()).lower()]]
    _write_csv(os.path.join(args.out, "rate_fit.csv"), rows)
    verify_mod.write_dat(os.path.join(args.out, "rate_fit.dat"),
                         rep.taus, rep.values)
    print(f"fitted exponent {rep.exponent_fit!r} vs theory {rep.exponent_theory!r} "
          f"(r^2 {rep.r_squared!r})")
    ok = rep.within() or (rep.mode == "fixed" and not rep.saturating)
    return EXIT_OK if ok else EXIT_NUMERICAL


def _suite_qbounds(scn, evo, args):
    rep = verify_mod.qbounds_check(evo, T=max(scn.T0, 1.0), seed=scn.seed)
    rows = [["sup_whitening_stat", "inf_det_stat", "quarter_ok",
             "quarter_margin", "samples", "drift_whitening", "drift_det"],
            [repr(rep.sup_whitening_stat), repr(rep.inf_det_stat),
             str(rep.quarter_ok).lower(), repr(rep.quarter_margin),
             str(rep.samples), repr(rep.refinement_drift[0]),
             repr(rep.refinement_drift[1])]]
    _write_csv(os.path.join(args.out, "qbounds.csv"), rows)
    print(f"whitening stat {rep.sup_whitening_stat!r}, det stat {rep.inf_det_stat!r}, "
          f"quarter bound ok: {rep.quarter_ok}")
    return EXIT_OK if rep.ok else EXIT_NUMERICAL


def _suite_smalltime(scn, evo, args):
    u0 = scn.initial_data()
    rep = verify_mod.small_time_limits(evo, u0, scn.p, scn.q,
                                       k_min=args.kmin, k_max=args.kmax,
                                       s=scn.s0)
    rows = [["k", "weighted_q_norm", "weighted_grad_norm"]]
    for k, a, b in zip(rep.ks, rep.weighted_q, rep.weighted_grad):
        rows.append([str(k), repr(a), repr(b)])
    rows.append(["ratio", repr(rep.q_ratio), repr(rep.grad_ratio)])
    _write_csv(os.path.join(args.out, "smalltime.csv"), rows)
    verify_mod.write_dat(os.path.join(args.out, "smalltime.dat"),
                         [2.0 ** -k for k in rep.ks], rep.weighted_q)
    ok = rep.decreasing() and rep.reaches(1e-3)
    print(f"weighted-norm ratios: {rep.q_ratio!r}, {rep.grad_ratio!r}; "
          f"decreasing: {rep.decreasing()}")
    return EXIT_OK if ok else EXIT_NUMERICAL


def _suite_evolutionlaw(scn, evo, args):
    u0 = scn.initial_data()
    phi = u0.components[0]
    rng = np.random.default_rng(scn.seed)
    span = scn.T0 - scn.s0
    worst = 0.0
    rows = [["s", "r", "t", "residual"]]
    for _ in range(args.triples):
        a, b, c = np.sort(scn.s0 + span * rng.random(3))
        res = evo.evolution_law_residual(phi, a, b, c)
        worst = max(worst, res)
        rows.append([repr(float(a)), repr(float(b)), repr(float(c)), repr(res)])
    rows.append(["worst", "", "", repr(worst)])
    _write_csv(os.path.join(args.out, "evolutionlaw.csv"), rows)
    print(f"worst evolution-law residual: {worst!r}")
    return EXIT_OK if worst <= args.tol else EXIT_NUMERICAL


def _suite_generator(scn, evo, args):
    u0 = scn.initial_data()
    t_mid = scn.s0 + 0.5 * (scn.T0 - scn.s0)
    window = GeneratorWindow()
    dts = [4 * args.dt, 2 * args.dt, args.dt]
    residuals = [generator_residual(evo, u0, scn.s0, t_mid, dt, window)
                 for dt in dts]
    slopes = [np.log2(residuals[i] / residuals[i + 1])
              for i in range(len(dts) - 1)]
    slope = float(np.mean(slopes))
    rows = [["dt", "residual"]]
    rows += [[repr(float(dt)), repr(r)] for dt, r in zip(dts, residuals)]
    rows.append(["richardson_slope", repr(slope)])
    _write_csv(os.path.join(args.out, "generator.csv"), rows)
    print(f"generator residuals {['%.3e' % r for r in residuals]}, "
          f"richardson slope {slope!r}")
    return EXIT_OK if abs(slope - 2.0) <= 0.2 else EXIT_NUMERICAL


def cmd_verify(scn: Scenario, args) -> int:
    evo = scn.evolution()
    if args.suite in ("lplq", "gradient"):
        return _suite_lplq(scn, evo, args, gradient=args.suite == "gradient")
    if args.suite == "qbounds":
        return _suite_qbounds(scn, evo, args)
    if args.suite == "smalltime":
        return _suite_smalltime(scn, evo, args)
    if args.suite == "evolutionlaw":
        return _suite_evolutionlaw(scn, evo, args)
    return _suite_generator(scn, evo, args)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rotflow",
        description="Evolution operators, mild solutions, and estimate "
                    "verification for rotating-frame viscous flow")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="scenario file (key=value sections)")
        p.add_argument("--out", default="rotflow_out",
                       help="output directory for dumps and CSV reports")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (or ROTFLOW_THREADS; informational "
                            "for the pure-numpy backend)")

    p = sub.add_parser("propagator", help="print the propagator triple")
    common(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--s", type=float, default=None)

    p = sub.add_parser("evolve", help="apply the evolution operator")
    common(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--s", type=float, default=None)
    p.add_argument("--mode", choices=("vector", "scalar", "solenoidal"),
                   default="vector")
    p.add_argument("--solenoidal", action="store_true",
                   help="shorthand for --mode solenoidal")

    p = sub.add_parser("solve", help="run the Picard mild-solution solver")
    common(p)

    p = sub.add_parser("verify", help="run a verification suite")
    common(p)
    p.add_argument("--suite", required=True,
                   choices=("lplq", "gradient", "qbounds", "smalltime",
                            "evolutionlaw", "generator"))
    p.add_argument("--tau-min", dest="tau_min", type=float, default=2.0 ** -10)
    p.add_argument("--tau-max", dest="tau_max", type=float, default=2.0 ** -2)
    p.add_argument("--samples", type=int, default=9)
    p.add_argument("--kmin", type=int, default=2)
    p.add_argument("--kmax", type=int, default=12)
    p.add_argument("--triples", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--dt", type=float, default=1e-3)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        scn = load_scenario(args.scenario,
                            validate=args.command != "propagator")
        if args.command == "propagator":
            # validate by hand so a commutator report can be printed
            try:
                scn.validate()
            except ScenarioError as exc:
                for problem in exc.problems:
                    print(f"validation: {problem}", file=sys.stderr)
                times = np.linspace(scn.s0, max(scn.T0, scn.s0 + 1.0), 6)
                pairs = [(t, s) for i, t in enumerate(times) for s in times[:i]]
                rep = commutation_check(scn.M, pairs)
                for (t, s), r in zip(rep.pairs, rep.residuals):
                    print(f"commutator t={t!r} s={s!r} residual={r!r}",
                          file=sys.stderr)
                return EXIT_VALIDATION
    except (ScenarioError, FileNotFoundError, KeyError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    os.makedirs(args.out, exist_ok=True)
    args.threads = _resolve_threads(args)
    handler = {"propagator": cmd_propagator, "evolve": cmd_evolve,
               "solve": cmd_solve, "verify": cmd_verify}[args.command]
    try:
        return handler(scn, args)
    except (ScenarioError, NotSolenoidalError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (QuadratureError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
