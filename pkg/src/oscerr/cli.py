"""Command-line interface.

Subcommands: trees, coeffs, integrate, elint, estimate, experiment,
design-tuned, problem.  Exit codes: 0 on success, 1 on argument errors,
2 when some experiment cells failed while others ran.
"""

from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction

import numpy as np


class UsageError(SystemExit):
    def __init__(self, message):
        print(f"error: {message}", file=sys.stderr)
        super().__init__(1)


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="oscerr", description=__doc__)
    top.add_argument("--output-dir", default="results", help="directory for emitted files")
    top.add_argument("--workers", type=int, default=1, help="concurrent experiment cells")
    top.add_argument("--config", default=None, help="JSON experiment config file")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trees", help="enumerate rooted trees with statistics")
    p.add_argument("--max-order", type=int, required=True)

    p = sub.add_parser("coeffs", help="B-series coefficients of a method")
    p.add_argument("--method", required=True)
    p.add_argument("--max-order", type=int, default=None)
    p.add_argument("--modified", action="store_true",
                   help="also print the modified-field coefficients")

    p = sub.add_parser("integrate", help="fixed-step integration to CSV")
    p.add_argument("--method", required=True)
    p.add_argument("--problem", required=True, help="emden:n=3,nu=1 or airy")
    p.add_argument("--y0", default="1,0", help="initial y,y' (comma separated)")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--output", default=None)

    p = sub.add_parser("elint", help="numeric elementary integral of one tree")
    p.add_argument("--tree", required=True, help="bracket encoding, e.g. [[.].]")
    p.add_argument("--problem", default="emden:n=3,nu=1")
    p.add_argument("--y0", default="1,0")
    p.add_argument("--t-end", type=float, default=500.0)
    p.add_argument("--h-fine", type=float, default=5e-4)
    p.add_argument("--sample-dt", type=float, default=0.01)
    p.add_argument("--output", default=None)

    p = sub.add_parser("estimate", help="a priori error estimate to CSV")
    p.add_argument("--method", required=True)
    p.add_argument("--problem", default="emden:n=3,nu=1")
    p.add_argument("--y0", default="1,0")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--sample-dt", type=float, default=0.1)
    p.add_argument("--output", default=None)

    p = sub.add_parser("experiment", help="measured-vs-estimated sweep")
    p.add_argument("--problem", default=None)
    p.add_argument("--methods", default=None, help="comma-separated method names")
    p.add_argument("--h", default=None, help="comma-separated step sizes")
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--sample-dt", type=float, default=None)
    p.add_argument("--plot", action="store_true")

    p = sub.add_parser("design-tuned", help="member of the tuned 3-stage family")
    p.add_argument("--c2", required=True, help="free parameter (exact rational, e.g. 3/4)")

    p = sub.add_parser("problem", help="problem diagnostics")
    p.add_argument("kind", choices=["emden", "airy"])
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--y0", default="1,0")
    p.add_argument("--fit", action="store_true", help="fit and print c1, c2, 4K, chi")

    return top


def _parse_y0(text):
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 2:
        raise UsageError("--y0 must be 'y,yprime'")
    return parts


def _cmd_trees(args):
    from .trees import enumerate_trees, stats

    for group in enumerate_trees(args.max_order):
        for tree in group:
            st = stats(tree)
            print(f"{tree}\t{st.rho}\t{st.alpha}\t{st.sigma}\t{st.gamma_density}\t{st.d_prime}")
    return 0


def _cmd_coeffs(args):
    from .bseries import modified_equation_coeffs, rk_bseries
    from .rk import METHOD_ORDERS, get_method
    from .trees import trees_upto

    tab = get_method(args.method)
    max_order = args.max_order or 2 * METHOD_ORDERS[tab.name] - 1
    a = rk_bseries(tab, max_order)
    b = modified_equation_coeffs(a) if args.modified else None
    for tree in trees_upto(max_order):
        row = f"{tree}\t{a[tree]}"
        if b is not None:
            row += f"\t{b[tree]}"
        print(row)
    return 0


def _make_system(problem_spec, y0, t0):
    from .oscillators import EmdenFowlerProblem, airy_system, ef_system, parse_problem_spec

    problem = parse_problem_spec(problem_spec)
    if isinstance(problem, EmdenFowlerProblem):
        problem = EmdenFowlerProblem(problem.n, problem.nu, y0[0], y0[1])
        return problem, ef_system(problem), np.array([y0[0], y0[1], t0])
    return problem, airy_system(), np.array([y0[0], y0[1], t0])


def _cmd_integrate(args):
    from .experiment import write_csv
    from .rk import get_method, integrate

    y0 = _parse_y0(args.y0)
    _, system, state0 = _make_system(args.problem, y0, args.t0)
    traj = integrate(get_method(args.method), system, state0, args.t0, args.h,
                     args.t_end, args.stride)
    out = args.output or os.path.join(args.output_dir, "traj.csv")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    write_csv(out, ["t", "y1", "y2"], [traj.times, traj.states[:, 0], traj.states[:, 1]])
    print(out)
    return 0


def _cmd_elint(args):
    from .estimator import elementary_integrals_numeric
    from .experiment import write_csv
    from .oscillators import EmdenFowlerProblem, parse_problem_spec, ef_system, airy_system
    from .trees import parse_tree

    tree = parse_tree(args.tree)
    y0 = _parse_y0(args.y0)
    problem = parse_problem_spec(args.problem)
    if isinstance(problem, EmdenFowlerProblem):
        n, nu = problem.n, problem.nu
        system = ef_system(problem)
    else:
        n, nu = 1, 1.0
        system = airy_system()
    _, samples = elementary_integrals_numeric(
        system, [tree], n, nu, np.array([y0[0], y0[1], 0.0]), 0.0,
        args.t_end, args.h_fine, args.sample_dt,
    )
    sample = samples[tree]
    out = args.output or os.path.join(args.output_dir, "elint.csv")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    write_csv(out, ["t", "I1", "I2", "I3"],
              [sample.times, sample.values[:, 0], sample.values[:, 1], sample.values[:, 2]])
    print(out)
    return 0


def _cmd_estimate(args):
    from .bseries import modified_equation_coeffs, rk_bseries
    from .estimator import closed_form_error_estimate, linosc_estimate
    from .experiment import write_csv
    from .oscillators import (EmdenFowlerProblem, ef_system, fit_action_angle,
                              parse_problem_spec, wn_build)
    from .rk import METHOD_ORDERS, get_method, integrate

    y0 = _parse_y0(args.y0)
    problem = parse_problem_spec(args.problem)
    times = np.arange(max(args.t0, 1.0), args.t_end + 1e-9, args.sample_dt)
    if isinstance(problem, EmdenFowlerProblem):
        problem = EmdenFowlerProblem(problem.n, problem.nu, y0[0], y0[1])
        ref = wn_build(problem.n)
        traj = integrate(get_method("rk4"), ef_system(problem), problem.initial_state(),
                         0.0, 5e-4, min(max(200.0, args.t_end), 1000.0), stride=20)
        ref = ref.with_fit(*fit_action_angle(problem, traj, ref))
        est = closed_form_error_estimate(args.method, problem, ref)
        signed = est.evaluate(args.h, times)
        lead = est.envelope(args.h, times, leading_only=True)
    else:
        from dataclasses import replace

        from .oscillators import lg_parameters

        problem = replace(problem, y0=y0[0], y0p=y0[1])
        if problem.g(args.t0) > 0:
            problem = replace(problem, s0=lg_parameters(problem, args.t0, np.array(y0)))
        p = METHOD_ORDERS[args.method]
        b = modified_equation_coeffs(rk_bseries(get_method(args.method), 2 * p))
        signed = np.atleast_2d(linosc_estimate(problem, b, p, args.h, times, t0=args.t0))
        lead = np.abs(signed)
    out = args.output or os.path.join(args.output_dir, "est.csv")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    write_csv(out, ["t", "est1", "est2", "est1_leading_only"],
              [times, signed[:, 0], signed[:, 1], lead[:, 0]])
    print(out)
    return 0


def _cmd_experiment(args):
    from .experiment import ExperimentConfig, run_experiment

    config = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    overrides = dict(
        problem=args.problem,
        t_end=args.t_end,
        sample_dt=args.sample_dt,
        output_dir=args.output_dir,
        workers=args.workers,
    )
    if args.methods:
        overrides["methods"] = tuple(args.methods.split(","))
    if args.h:
        overrides["step_sizes"] = tuple(float(Fraction(x)) for x in args.h.split(","))
    if args.plot:
        overrides["plot"] = True
    config = config.with_overrides(**overrides)
    report = run_experiment(config)
    for cell in report.cells:
        print(f"{cell.method} h={cell.h:g}: {cell.status}"
              + (f" ({cell.message})" if cell.message else ""))
    print(os.path.join(config.output_dir, "report.json"))
    return 0 if report.ok else 2


def _cmd_design_tuned(args):
    from .rk import design_tuned_3stage

    tab = design_tuned_3stage(Fraction(args.c2))
    print(f"name: {tab.name}")
    print("c:", "  ".join(str(x) for x in tab.c))
    for i, row in enumerate(tab.A):
        print(f"A[{i}]:", "  ".join(str(x) for x in row[: max(i, 1)]))
    print("b:", "  ".join(str(x) for x in tab.b))
    return 0


def _cmd_problem(args):
    from .oscillators import EmdenFowlerProblem, ef_system, fit_action_angle, wn_build
    from .rk import get_method, integrate

    y0 = _parse_y0(args.y0)
    if args.kind == "airy":
        print("airy: y'' + t y = 0, theta(t) = (2/3) t^(3/2)")
        return 0
    problem = EmdenFowlerProblem(args.n, args.nu, y0[0], y0[1])
    ref = wn_build(problem.n)
    print(f"gamma: {problem.gamma:.12g}")
    print(f"period4K: {ref.period4K:.12g}")
    print(f"chi: {ref.chi:.12g}")
    if args.fit:
        traj = integrate(get_method("rk4"), ef_system(problem), problem.initial_state(),
                         0.0, 5e-4, 1000.0, stride=20)
        c1, c2 = fit_action_angle(problem, traj, ref)
        print(f"c1: {c1:.12g}")
        print(f"c2: {c2:.12g}")
    return 0


_COMMANDS = {
    "trees": _cmd_trees,
    "coeffs": _cmd_coeffs,
    "integrate": _cmd_integrate,
    "elint": _cmd_elint,
    "estimate": _cmd_estimate,
    "experiment": _cmd_experiment,
    "design-tuned": _cmd_design_tuned,
    "problem": _cmd_problem,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError:
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
