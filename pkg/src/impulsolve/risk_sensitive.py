"""Exponential-of-sum criterion: multiplicative recursion for E[exp(rho C)].

With C the discounted payoff-minus-cost total, everything the additive
solver does has a product analogue.  Payoffs enter as factors
exp(rho * pay), intervention costs as factors exp(-rho * disc * psi), and
the per-node recursion for the utility with m impulses left reads

    V(v) = fac(v) * max( E[V(children)], Theta(v) ),     V(leaf) = fac(leaf)

where Theta chains child expectations through the execution-delay window
the same way the additive obstacle does, with running products instead of
running sums.  rho < 0 is accepted mechanically (max still picks the
larger factor, which for negative rho is the risk-averse choice embedded
in the sign of the exponent); see docs/math.md for the derivation.
"""

from __future__ import annotations

import math

import numpy as np

from . import snell
from ._engine import (DEFAULT_STATE_CAP, NEG_INF, RegimeSpace, SolveContext,
                      SolveResult, extract_stages, node_payoffs,
                      obstacle_arrays, solve_table, sup_increments, sweep_cell)
from .errors import BudgetExceededError, NumericalGuardError
from .fields import SolveReport, Stage, Strategy, ValueField
from .problem import EXP_GUARD, ProblemSpec
from .scenario import ScenarioTree, node_cap
from .risk_neutral import BOUND_ATOL, BOUND_RTOL

MODE = "risk_sensitive"


def no_impulse_utility(tree: ScenarioTree, spec: ProblemSpec, shift=None,
                       start_time: int = 0) -> snell.AdaptedProcess:
    """E[exp(rho * discounted payoff sum)] when never intervening."""
    ctx = SolveContext(tree, spec, start_time=start_time, multiplicative=True)
    shift = (0.0,) * spec.dim if shift is None else tuple(float(c) for c in shift)
    obst = np.full(ctx.arrays.n, NEG_INF)
    vals = sweep_cell(ctx, shift, obst)
    ids = ctx.arrays.ids
    return snell.AdaptedProcess({ids[v]: float(vals[v]) for v in range(ctx.arrays.n)})


def delay_window_factors(tree: ScenarioTree, spec: ProblemSpec, node_id: str,
                         impulse: int, shift=None, start_time: int = 0) -> list:
    """Per-path factors between a decision node and its execution nodes.

    Enumerates the descendants exactly delta steps below `node_id` and
    returns [(descendant_id, path_probability, factor)] where factor
    collects exp(rho * pay) over the strict interior of the window plus
    the discounted cost factor of the given impulse.  Weighting
    next-regime utilities by these factors and summing reproduces the
    obstacle entry at the node, which is exactly what the solver's
    expectation chain computes.  Raises when the window overruns the
    horizon: no execution node exists there.
    """
    ctx = SolveContext(tree, spec, start_time=start_time, multiplicative=True)
    arrays = ctx.arrays
    v = arrays.index[node_id]
    t = int(arrays.time[v])
    delta = spec.delta
    if t + delta > tree.depth:
        raise ValueError(
            f"execution window from {node_id!r} (time {t}) ends at "
            f"{t + delta}, beyond the horizon {tree.depth}")
    shift = (0.0,) * spec.dim if shift is None else tuple(float(c) for c in shift)
    fac = ctx.fac(shift)
    cost = float(ctx.cost_factor[impulse][v])
    out = []

    def walk(u, p_acc, f_acc):
        if int(arrays.time[u]) == t + delta:
            out.append((arrays.ids[u], p_acc, f_acc * cost))
            return
        f = f_acc * float(fac[u]) if int(arrays.time[u]) > t else f_acc
        for e in range(int(arrays.ptr[u]), int(arrays.ptr[u + 1])):
            walk(int(arrays.child[e]), p_acc * float(arrays.prob[e]), f)

    walk(v, 1.0, 1.0)
    return out


def intervention_obstacle(tree: ScenarioTree, spec: ProblemSpec, continuations,
                          shift=None, start_time: int = 0):
    """Multiplicative obstacle Theta for one regime, plus best impulse map.

    continuations[i] maps node ids to the utility after impulse i
    executes.  Boundary convention: horizon nodes (time T) report 1, the
    neutral factor of an intervention with nothing left to act on;
    strictly interior nodes whose delayed execution would overrun the
    horizon report -inf (branch excluded from the max).
    """
    if len(continuations) != len(spec.impulses):
        raise ValueError("need one continuation per impulse")
    ctx = SolveContext(tree, spec, start_time=start_time, multiplicative=True)
    shift = (0.0,) * spec.dim if shift is None else tuple(float(c) for c in shift)
    prev = [snell._to_array(tree, c) for c in continuations]
    obst, amax = obstacle_arrays(ctx, shift, prev)
    arrays = ctx.arrays
    ids = arrays.ids
    horizon = tree.depth
    values = {}
    for v in range(arrays.n):
        if arrays.time[v] == horizon:
            values[ids[v]] = 1.0
        else:
            values[ids[v]] = float(obst[v])
    best = {ids[v]: int(amax[v]) for v in range(arrays.n) if amax[v] >= 0}
    return snell.AdaptedProcess(values, terminal_value=NEG_INF), best


def utility_iterates(tree: ScenarioTree, spec: ProblemSpec, n_max: int,
                     tol=None, start_time: int = 0) -> list:
    """Iterates V^0 .. V^N, one ValueField per remaining-impulse budget.

    Computed through the envelope route: multiplying each node's utility
    by the product of payoff factors strictly above it turns the
    multiplicative recursion into a plain optimal stopping problem,
    solved by snell.backward_envelope, then divided back out.  solve()
    reaches the same numbers by direct sweeps; tests compare the two
    routes at relative 1e-12.

    N = n_max, or the first budget whose sup increment over the previous
    one is <= tol when tol is given (tol=0.0 stops at exact saturation).
    The prefix products double the worst-case exponent, so this route
    rejects instances at half the direct solver's overflow guard.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    if tol is not None and tol < 0.0:
        raise ValueError("tol must be >= 0")
    if 2.0 * spec.rs_exponent_bound() > EXP_GUARD:
        raise NumericalGuardError(
            f"prefix products need exponent headroom 2 * "
            f"{spec.rs_exponent_bound():.3g} > {EXP_GUARD:g}; "
            f"use solve() for this instance")
    ctx = SolveContext(tree, spec, start_time=start_time, multiplicative=True)
    space = RegimeSpace(spec.impulses, spec.dim, n_max)
    arrays = ctx.arrays
    states = arrays.n * space.total_shifts()
    limit = node_cap(DEFAULT_STATE_CAP)
    if states > limit:
        raise BudgetExceededError(
            f"augmented state space needs {states} node-shift pairs, cap is {limit}")

    prefix_cache = {}

    def prefix(shift):
        # product of payoff factors strictly above each node
        pr = prefix_cache.get(shift)
        if pr is None:
            fac = ctx.fac(shift)
            pr = np.ones(arrays.n)
            for v in range(arrays.n):
                p = arrays.parent[v]
                if p >= 0:
                    pr[v] = pr[p] * fac[p]
            prefix_cache[shift] = pr
        return pr

    rows = {}
    reached = n_max
    for m in range(n_max + 1):
        for s in range(n_max - m + 1):
            for j, shift in enumerate(space.shells[s]):
                if m == 0:
                    obst = np.full(arrays.n, NEG_INF)
                else:
                    prev = [rows[(m - 1, s + 1, space.targets[s][j][i])][0]
                            for i in range(len(spec.impulses))]
                    obst, _ = obstacle_arrays(ctx, shift, prev)
                fac = ctx.fac(shift)
                pr = prefix(shift)
                stopped = {}
                for v in range(arrays.n):
                    o = float(obst[v])
                    po = pr[v] * fac[v]
                    if arrays.is_leaf[v]:
                        # fold the unit terminal continuation into the reward
                        stopped[arrays.ids[v]] = po * max(1.0, o)
                    else:
                        stopped[arrays.ids[v]] = po * o if o != NEG_INF else NEG_INF
                env = snell.backward_envelope(
                    tree, snell.AdaptedProcess(stopped, terminal_value=NEG_INF))
                val = np.array([env[arrays.ids[v]] / pr[v] for v in range(arrays.n)])
                # the terminal condition pins leaves to the payoff factor
                # exactly; dividing the prefix back out must not blur that
                val[arrays.leaf_indices] = fac[arrays.leaf_indices]
                rows[(m, s, j)] = (val, obst)
        if tol is not None and m >= 1:
            inc = max(float(np.max(rows[(m, s, j)][0] - rows[(m - 1, s, j)][0]))
                      for s in range(n_max - m + 1)
                      for j in range(len(space.shells[s])))
            if inc <= tol:
                reached = m
                break

    fields = []
    for m in range(reached + 1):
        entries = []
        for s in range(n_max - m + 1):
            for j, shift in enumerate(space.shells[s]):
                val, obst = rows[(m, s, j)]
                entries.append((shift, s, val, obst))
        fields.append(ValueField(m, arrays, entries, kind="iterate",
                                 start_time=start_time))
    return fields


def solve(tree: ScenarioTree, spec: ProblemSpec, n_cap=None, start_time: int = 0,
          first_impulse_min_time: int = 0) -> SolveResult:
    """Fill the budget-by-shell triangle for the multiplicative recursion.

    The report carries the root utility, its certainty equivalent
    log(V) / rho, and positivity plus log-scale bound checks.  Instances
    whose worst-case exponent could overflow are rejected up front with
    NumericalGuardError.
    """
    cap = spec.saturating_cap() if n_cap is None else int(n_cap)
    if cap < 0:
        raise ValueError("n_cap must be >= 0")
    ctx = SolveContext(tree, spec, start_time=start_time, multiplicative=True)
    table, space = solve_table(ctx, cap)
    root_value = float(table.get(cap, 0, 0).value[ctx.arrays.root])
    iterations = sup_increments(table, space)
    entries = [(shift, s, cell.value, cell.obstacle)
               for s, j, shift, cell in table.diagonal(space)]
    field = ValueField(cap, ctx.arrays, entries, kind="limit",
                       start_time=start_time)
    stages = extract_stages(ctx, table, space, first_from=first_impulse_min_time)
    strategy = Strategy(tuple(Stage(stops=dict(st)) for st in stages))
    checks = _bound_checks(ctx, table, space)
    report = SolveReport(
        root_value=root_value,
        truncation_bound=abs(spec.rho) * spec.truncation_bound(),
        iterations=iterations,
        bound_checks=checks,
        mode=MODE,
        rho=spec.rho,
        certainty_equivalent=math.log(root_value) / spec.rho,
        strategy=strategy,
    )
    return SolveResult(report=report, field=field, strategy=strategy,
                       iterations=iterations, table=table, space=space, context=ctx)


def extract_strategy(result: SolveResult, first_impulse_min_time: int = 0) -> Strategy:
    """Re-run the first-hit walk, optionally blocking impulses before a time."""
    stages = extract_stages(result.context, result.table, result.space,
                            first_from=first_impulse_min_time)
    return Strategy(tuple(Stage(stops=dict(st)) for st in stages))


# ---------------------------------------------------------------------------
# a-priori bounds (log scale, plus positivity)
# ---------------------------------------------------------------------------

def _bound_checks(ctx: SolveContext, table, space: RegimeSpace) -> list:
    spec = ctx.spec
    disc = ctx.disc_by_node
    bg, bpsi, ct = spec.g_norm, spec.psi_norm, spec.c_theta
    q = math.exp(-spec.theta * spec.delta)
    rho_mag = abs(spec.rho)
    checks = []

    checked = violations = 0
    worst = -math.inf
    nonpos = 0
    for m in range(table.cap + 1):
        qsum = q * (1.0 - q ** m) / (1.0 - q)
        coef = rho_mag * (bg * ct + bpsi * qsum)
        for s, j, shift, cell in table.row(m, space):
            pos = cell.value > 0.0
            nonpos += int(np.count_nonzero(~pos))
            logs = np.abs(np.log(cell.value[pos]))
            exc = logs - (coef * disc[pos] * (1.0 + BOUND_RTOL) + BOUND_ATOL)
            checked += exc.size
            violations += int(np.count_nonzero(exc > 0.0))
            if exc.size:
                worst = max(worst, float(exc.max()))
    checks.append({"name": "iterate_utilities", "checked": checked,
                   "violations": violations,
                   "max_excess": worst if checked else 0.0,
                   "ok": violations == 0})
    checks.append({"name": "utility_positive",
                   "checked": checked + nonpos, "violations": nonpos,
                   "max_excess": 0.0, "ok": nonpos == 0})

    checked = violations = 0
    for m in range(1, table.cap + 1):
        for s, j, shift, cell in table.row(m, space):
            finite = cell.obstacle != NEG_INF
            checked += int(np.count_nonzero(finite))
            violations += int(np.count_nonzero(cell.obstacle[finite] <= 0.0))
    checks.append({"name": "obstacle_positive", "checked": checked,
                   "violations": violations, "max_excess": 0.0,
                   "ok": violations == 0})

    checked = violations = 0
    worst = -math.inf
    coef = rho_mag * (bg * ct + bpsi * q / (1.0 - q))
    for s, j, shift, cell in table.diagonal(space):
        pos = cell.value > 0.0
        logs = np.abs(np.log(cell.value[pos]))
        exc = logs - (coef * disc[pos] * (1.0 + BOUND_RTOL) + BOUND_ATOL)
        checked += exc.size
        violations += int(np.count_nonzero(exc > 0.0))
        if exc.size:
            worst = max(worst, float(exc.max()))
    checks.append({"name": "limit_field", "checked": checked,
                   "violations": violations,
                   "max_excess": worst if checked else 0.0,
                   "ok": violations == 0})

    leaf = ctx.arrays.leaf_indices
    checked = violations = 0
    for m in range(table.cap + 1):
        for s, j, shift, cell in table.row(m, space):
            fac = ctx.fac(shift)
            checked += int(leaf.size)
            violations += int(np.count_nonzero(cell.value[leaf] != fac[leaf]))
    checks.append({"name": "terminal_unit", "checked": checked,
                   "violations": violations, "max_excess": 0.0,
                   "ok": violations == 0})
    return checks


def check_utility_bounds(fields, spec: ProblemSpec) -> list:
    """Positivity, log-scale a-priori bounds, and the exact terminal seed.

    Iterate fields: |log V^n| <= rho * (Bg * c + Bpsi * q(1-q^n)/(1-q))
    * exp(-theta k) with q = exp(-theta delta) and n the field's budget;
    limit fields swap the cost sum for its limit q/(1-q).  Values must be
    strictly positive, finite obstacle entries strictly positive, and at
    horizon leaves the value must equal its payoff factor bit for bit
    (the terminal continuation is the unit factor).  Reports produced by
    solve() carry the same families over the full budget table.
    """
    bg, bpsi, ct = spec.g_norm, spec.psi_norm, spec.c_theta
    q = math.exp(-spec.theta * spec.delta)
    rho_mag = abs(spec.rho) if spec.rho is not None else 1.0
    names = ("iterate_utilities", "utility_positive", "obstacle_positive",
             "limit_field", "terminal_unit")
    acc = {name: [0, 0, -math.inf] for name in names}

    def tally(name, n_checked, n_bad, worst=None):
        got = acc[name]
        got[0] += n_checked
        got[1] += n_bad
        if worst is not None:
            got[2] = max(got[2], worst)

    for fld in fields:
        arrays = fld.node_arrays
        disc = np.array([math.exp(-spec.theta * t)
                         for t in range(int(arrays.depth) + 1)])[arrays.time]
        leaf = arrays.leaf_indices
        if fld.kind == "iterate":
            qsum = q * (1.0 - q ** fld.n) / (1.0 - q)
            coef = rho_mag * (bg * ct + bpsi * qsum)
            log_name = "iterate_utilities"
        else:
            coef = rho_mag * (bg * ct + bpsi * q / (1.0 - q))
            log_name = "limit_field"
        for shift, count, values, obst in fld.entry_arrays():
            pos = values > 0.0
            tally("utility_positive", int(values.size),
                  int(np.count_nonzero(~pos)))
            logs = np.abs(np.log(values[pos]))
            exc = logs - (coef * disc[pos] * (1.0 + BOUND_RTOL) + BOUND_ATOL)
            tally(log_name, exc.size, int(np.count_nonzero(exc > 0.0)),
                  float(exc.max()) if exc.size else None)
            if obst is not None:
                finite = obst != NEG_INF
                tally("obstacle_positive", int(np.count_nonzero(finite)),
                      int(np.count_nonzero(obst[finite] <= 0.0)))
            fac = np.exp(node_payoffs(arrays, spec, shift,
                                      start_time=fld.start_time,
                                      multiplicative=True))
            tally("terminal_unit", int(leaf.size),
                  int(np.count_nonzero(values[leaf] != fac[leaf])))

    return [{"name": name, "checked": checked, "violations": violations,
             "max_excess": worst if worst > -math.inf else 0.0,
             "ok": violations == 0}
            for name, (checked, violations, worst) in acc.items()]
