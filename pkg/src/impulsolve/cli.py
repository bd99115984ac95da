"""Command-line front end.

All subcommands name their input files through flags (--tree, --spec,
--strategy) and write JSON reports with sorted keys and a trailing
newline, so identical inputs give byte-identical outputs.  Exit codes:
0 success, 2 malformed or invalid input (argparse uses 2 as well),
3 exceeded enumeration/state budgets or the numerical overflow guard,
1 anything else the library flags.  The only environment the commands
read is the documented IMPULSOLVE_NODE_CAP / IMPULSOLVE_PURE pair; no
clocks, no implicit randomness (sampling sits behind --seed, default 0).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

from . import oracle, policy, risk_neutral, risk_sensitive
from ._backend import backend_name
from .errors import (BudgetExceededError, ImpulsolveError, NumericalGuardError,
                     SpecFormatError, SpecValidationError, StrategyFormatError,
                     TreeFormatError, TreeValidationError)
from .fields import load_strategy, report_json, save_strategy
from .problem import MODE_RISK_SENSITIVE, load_problem
from .scenario import (generate_walk_tree, load_tree, save_tree, tree_to_dict,
                       validate_tree)

_FORMAT_ERRORS = (TreeFormatError, TreeValidationError, SpecFormatError,
                  SpecValidationError, StrategyFormatError)
_BUDGET_ERRORS = (BudgetExceededError, NumericalGuardError)


def _emit(doc, out_path):
    text = report_json(doc)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _positive_int(raw):
    val = int(raw)
    if val < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return val


def _load_problem_with_overrides(path, args):
    spec = load_problem(path)
    mode = getattr(args, "mode", None)
    rho = getattr(args, "rho", None)
    if mode is not None or rho is not None:
        new_mode = mode if mode is not None else spec.mode
        new_rho = rho if rho is not None else spec.rho
        if new_mode != MODE_RISK_SENSITIVE:
            new_rho = None
        spec = dataclasses.replace(spec, mode=new_mode, rho=new_rho)
        spec.validate()
    return spec


def _solver_for(spec):
    return risk_sensitive if spec.mode == MODE_RISK_SENSITIVE else risk_neutral


def _regime_label(shift, count) -> str:
    return f"{count}:" + ",".join(repr(c) for c in shift)


def _write_value_csv(field, path) -> None:
    """Plot-ready value table: one row per (node, regime) pair."""
    arrays = field.node_arrays
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["node", "time", "regime", "value"])
        for shift, count, values, _ in field.entry_arrays():
            label = _regime_label(shift, count)
            for v in range(arrays.n):
                writer.writerow([arrays.ids[v], int(arrays.time[v]), label,
                                 repr(float(values[v]))])


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_generate(args):
    if args.increments is not None:
        raw = json.loads(args.increments)
        increments = [(tuple(float(c) for c in vec), float(p)) for vec, p in raw]
    elif args.branching == 2:
        increments = [((1.0,), 0.5), ((-1.0,), 0.5)]
    else:
        raise TreeFormatError(
            "--increments is required unless --branching is 2 (default +-1 walk)")
    tree = generate_walk_tree(args.branching, args.depth, increments,
                              seed=args.seed)
    if args.out:
        save_tree(tree, args.out)
    else:
        sys.stdout.write(json.dumps(tree_to_dict(tree), indent=2,
                                    sort_keys=True) + "\n")
    return 0


def _cmd_validate(args):
    with open(args.tree) as fh:
        doc = json.load(fh)
    violations = validate_tree(doc)
    if violations:
        for line in violations:
            print(line, file=sys.stderr)
        return 2
    if args.spec:
        from .scenario import tree_from_dict
        tree = tree_from_dict(doc, validate=False)
        spec = load_problem(args.spec)
        spec.validate_against_tree(tree)
    print("ok")
    return 0


def _cmd_solve(args):
    tree = load_tree(args.tree)
    spec = _load_problem_with_overrides(args.spec, args)
    solver = _solver_for(spec)
    result = solver.solve(tree, spec, n_cap=args.n_cap)
    _emit(result.report.to_dict(), args.out)
    if args.strategy_out:
        save_strategy(result.strategy, args.strategy_out)
    if args.csv:
        _write_value_csv(result.field, args.csv)
    return 0


def _cmd_evaluate(args):
    tree = load_tree(args.tree)
    spec = _load_problem_with_overrides(args.spec, args)
    strategy = load_strategy(args.strategy)
    res = policy.evaluate_exact(tree, spec, strategy,
                                strict_horizon_charging=args.strict_horizon_charging)
    _emit(res, args.out)
    return 0


def _cmd_mc_evaluate(args):
    tree = load_tree(args.tree)
    spec = _load_problem_with_overrides(args.spec, args)
    strategy = load_strategy(args.strategy)
    res = policy.evaluate_monte_carlo(
        tree, spec, strategy, args.samples, seed=args.seed,
        strict_horizon_charging=args.strict_horizon_charging)
    _emit(res, args.out)
    return 0


def _cmd_oracle(args):
    tree = load_tree(args.tree)
    spec = _load_problem_with_overrides(args.spec, args)
    res = oracle.cross_check(tree, spec, n_cap=args.n_cap, tol=args.tol)
    _emit(res, args.out)
    return 0


def _cmd_eps_bound(args):
    spec = load_problem(args.spec)
    n = risk_neutral.epsilon_budget(spec, args.eps, formula=args.formula)
    print(n)
    return 0


def _cmd_check_bounds(args):
    tree = load_tree(args.tree)
    spec = _load_problem_with_overrides(args.spec, args)
    solver = _solver_for(spec)
    result = solver.solve(tree, spec, n_cap=args.n_cap)
    checks = result.report.bound_checks
    _emit({"bound_checks": checks, "backend": backend_name()}, args.out)
    return 0 if all(c["ok"] for c in checks) else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_inputs(p, strategy=False):
    p.add_argument("--tree", required=True, help="scenario tree JSON")
    p.add_argument("--spec", required=True, help="problem description JSON")
    if strategy:
        p.add_argument("--strategy", required=True, help="strategy JSON")


def _add_mode_flags(p):
    p.add_argument("--mode", choices=["risk_neutral", "risk_sensitive"],
                   help="override the problem file's criterion")
    p.add_argument("--rho", type=float,
                   help="override the risk parameter (risk_sensitive only)")


def _add_threads_flag(p):
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1,
                   help="worker threads (default: all cores); outputs are "
                        "identical for any value")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="impulsolve",
        description="delayed impulse control on scenario trees")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a random-walk scenario tree")
    p.add_argument("--branching", type=_positive_int, default=2)
    p.add_argument("--depth", type=_positive_int, required=True)
    p.add_argument("--increments",
                   help="JSON [[increment vector, probability], ...]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("validate", help="validate a tree file (and optional spec)")
    p.add_argument("--tree", required=True)
    p.add_argument("--spec")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("solve", help="solve and report the value field")
    _add_inputs(p)
    p.add_argument("--n-cap", type=int, default=None)
    _add_mode_flags(p)
    _add_threads_flag(p)
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--strategy-out", help="also write the strategy standalone")
    p.add_argument("--csv", help="also write the value table as CSV "
                                 "(columns node, time, regime, value)")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("evaluate", help="price a strategy by path enumeration")
    _add_inputs(p, strategy=True)
    _add_mode_flags(p)
    p.add_argument("--strict-horizon-charging", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("mc-evaluate", help="price a strategy by sampling")
    _add_inputs(p, strategy=True)
    p.add_argument("--samples", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_mode_flags(p)
    _add_threads_flag(p)
    p.add_argument("--strict-horizon-charging", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_mc_evaluate)

    p = sub.add_parser("oracle", help="cross-check the solver by enumeration")
    _add_inputs(p)
    p.add_argument("--n-cap", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-9)
    _add_mode_flags(p)
    _add_threads_flag(p)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("eps-bound",
                       help="iterations needed for a target accuracy")
    p.add_argument("--spec", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--formula", choices=["paper", "theta_explicit"],
                   default="theta_explicit")
    p.set_defaults(func=_cmd_eps_bound)

    p = sub.add_parser("check-bounds",
                       help="solve and verify the a-priori value bounds")
    _add_inputs(p)
    p.add_argument("--n-cap", type=int, default=None)
    _add_mode_flags(p)
    _add_threads_flag(p)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_check_bounds)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _FORMAT_ERRORS as exc:
        _print_error(exc)
        return 2
    except _BUDGET_ERRORS as exc:
        _print_error(exc)
        return 3
    except ImpulsolveError as exc:
        _print_error(exc)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return 2


def _print_error(exc):
    print(f"error: {exc}", file=sys.stderr)
    if isinstance(exc, TreeValidationError):
        for line in getattr(exc, "violations", []):
            print(f"  {line}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
