"""Expected-value criterion: delayed-impulse value iterates and their limit.

The value with m interventions left satisfies, node by node,

    Y(v) = pay(v) + max( E[Y(children)], O(v) ),      Y(leaf) = pay(leaf)

where pay is the discounted running payoff (zero before the start time) and
O is the intervention obstacle: expected window payoffs over the execution
delay, plus the next-regime value at execution, minus the discounted
intervention cost, maximised over impulses.  `solve` fills the whole
budget-by-shell triangle with direct backward sweeps; `value_iterates`
recomputes it through cumulative-payoff (prefix) coordinates and the
optimal-stopping envelope, so the two routes check each other.
"""

from __future__ import annotations

import math

import numpy as np

from . import snell
from ._engine import (DEFAULT_STATE_CAP, NEG_INF, CellTable, RegimeSpace,
                      SolveContext, SolveResult, extract_stages,
                      obstacle_arrays, solve_table, sup_increments, sweep_cell)
from .errors import BudgetExceededError
from .fields import SolveReport, Stage, Strategy, ValueField
from .problem import ProblemSpec
from .scenario import ScenarioTree, node_cap

MODE = "risk_neutral"

# slack for floating-point bound verification: a magnitude only counts as a
# violation beyond relative 1e-12 plus absolute 1e-15
BOUND_RTOL = 1e-12
BOUND_ATOL = 1e-15


def no_impulse_value(tree: ScenarioTree, spec: ProblemSpec, shift=None,
                     start_time: int = 0) -> snell.AdaptedProcess:
    """Value of never intervening: discounted payoff expectations.

    `shift` is the cumulative impulse displacement of the regime being
    priced (default none); `start_time` zeroes payoffs strictly before it.
    """
    ctx = SolveContext(tree, spec, start_time=start_time)
    shift = (0.0,) * spec.dim if shift is None else tuple(float(c) for c in shift)
    obst = np.full(ctx.arrays.n, NEG_INF)
    vals = sweep_cell(ctx, shift, obst)
    ids = ctx.arrays.ids
    return snell.AdaptedProcess({ids[v]: float(vals[v]) for v in range(ctx.arrays.n)})


def intervention_obstacle(tree: ScenarioTree, spec: ProblemSpec, continuations,
                          shift=None, start_time: int = 0):
    """Obstacle process for one regime.

    continuations[i] maps node ids to the value obtained after impulse i
    executes (an AdaptedProcess or a plain mapping).  Returns the obstacle
    as an AdaptedProcess together with {node_id: best impulse index} where
    an impulse is admissible.  Ties keep the lowest index.  Boundary
    convention: horizon nodes (time T) report 0, the value of an
    intervention that can never produce anything inside the horizon;
    strictly interior nodes whose delayed execution would overrun the
    horizon report -inf (branch excluded from the max).
    """
    if len(continuations) != len(spec.impulses):
        raise ValueError("need one continuation per impulse")
    ctx = SolveContext(tree, spec, start_time=start_time)
    shift = (0.0,) * spec.dim if shift is None else tuple(float(c) for c in shift)
    prev = [snell._to_array(tree, c) for c in continuations]
    obst, amax = obstacle_arrays(ctx, shift, prev)
    arrays = ctx.arrays
    ids = arrays.ids
    horizon = tree.depth
    values = {}
    for v in range(arrays.n):
        if arrays.time[v] == horizon:
            values[ids[v]] = 0.0
        else:
            values[ids[v]] = float(obst[v])
    best = {ids[v]: int(amax[v]) for v in range(arrays.n) if amax[v] >= 0}
    return snell.AdaptedProcess(values, terminal_value=NEG_INF), best


def value_iterates(tree: ScenarioTree, spec: ProblemSpec, n_max: int,
                   tol=None, start_time: int = 0) -> list:
    """Iterates Y^0 .. Y^N, one ValueField per remaining-impulse budget.

    Computed through the envelope route: in cumulative-payoff coordinates
    the recursion becomes a plain optimal stopping problem, solved by
    snell.backward_envelope, then mapped back.  solve() reaches the same
    numbers by direct sweeps; tests hold the two routes to 1e-12.

    N = n_max, or the first budget whose sup increment over the previous
    one is <= tol when tol is given.  tol=0.0 stops at exact saturation:
    once extra impulses cannot execute within the horizon the recursion
    reproduces the previous row bit for bit.  Increments stay above
    -1e-12 (the scheme is monotone up to roundoff).
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    if tol is not None and tol < 0.0:
        raise ValueError("tol must be >= 0")
    ctx = SolveContext(tree, spec, start_time=start_time)
    space = RegimeSpace(spec.impulses, spec.dim, n_max)
    arrays = ctx.arrays
    states = arrays.n * space.total_shifts()
    limit = node_cap(DEFAULT_STATE_CAP)
    if states > limit:
        raise BudgetExceededError(
            f"augmented state space needs {states} node-shift pairs, cap is {limit}")

    prefix_cache = {}

    def prefix(shift):
        # cumulative payoff strictly before each node, along its path
        pr = prefix_cache.get(shift)
        if pr is None:
            pay = ctx.pay(shift)
            pr = np.zeros(arrays.n)
            for v in range(arrays.n):
                p = arrays.parent[v]
                if p >= 0:
                    pr[v] = pr[p] + pay[p]
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
                pay = ctx.pay(shift)
                pr = prefix(shift)
                stopped = {}
                for v in range(arrays.n):
                    o = float(obst[v])
                    if arrays.is_leaf[v]:
                        # fold the terminal condition into the leaf reward
                        stopped[arrays.ids[v]] = pr[v] + pay[v] + max(0.0, o)
                    else:
                        stopped[arrays.ids[v]] = pr[v] + pay[v] + o
                env = snell.backward_envelope(
                    tree, snell.AdaptedProcess(stopped, terminal_value=NEG_INF))
                val = np.array([env[arrays.ids[v]] - pr[v] for v in range(arrays.n)])
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
    """Solve up to the saturating impulse budget (or an explicit n_cap).

    The default budget ceil(horizon / delta) + 1 saturates: extra
    interventions cannot execute within the horizon, so larger caps cannot
    change the value.  The returned field pairs each used-impulse shell s
    with budget n_cap - s, which is the stationary object the extracted
    strategy walks.
    """
    cap = spec.saturating_cap() if n_cap is None else int(n_cap)
    if cap < 0:
        raise ValueError("n_cap must be >= 0")
    ctx = SolveContext(tree, spec, start_time=start_time)
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
        truncation_bound=spec.truncation_bound(),
        iterations=iterations,
        bound_checks=checks,
        mode=MODE,
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
# a-priori bounds
# ---------------------------------------------------------------------------

def _excess(mag: float, bound: float) -> float:
    return mag - (bound * (1.0 + BOUND_RTOL) + BOUND_ATOL)


def _bound_checks(ctx: SolveContext, table: CellTable, space: RegimeSpace) -> list:
    spec = ctx.spec
    disc = ctx.disc_by_node
    bg, bpsi, ct = spec.g_norm, spec.psi_norm, spec.c_theta
    checks = []

    checked = violations = 0
    worst = -math.inf
    for m in range(table.cap + 1):
        coef = (2 * m + 1) * ct * bg + m * bpsi
        for s, j, shift, cell in table.row(m, space):
            exc = np.abs(cell.value) - (coef * disc * (1.0 + BOUND_RTOL) + BOUND_ATOL)
            checked += exc.size
            violations += int(np.count_nonzero(exc > 0.0))
            worst = max(worst, float(exc.max()))
    checks.append({"name": "iterate_values", "checked": checked,
                   "violations": violations, "max_excess": worst,
                   "ok": violations == 0})

    checked = violations = 0
    worst = -math.inf
    for m in range(1, table.cap + 1):
        coef = 2 * m * ct * bg + m * bpsi
        for s, j, shift, cell in table.row(m, space):
            finite = cell.obstacle != NEG_INF
            if not np.any(finite):
                continue
            exc = (np.abs(cell.obstacle[finite])
                   - (coef * disc[finite] * (1.0 + BOUND_RTOL) + BOUND_ATOL))
            checked += exc.size
            violations += int(np.count_nonzero(exc > 0.0))
            worst = max(worst, float(exc.max()))
    checks.append({"name": "obstacles", "checked": checked,
                   "violations": violations,
                   "max_excess": worst if checked else 0.0,
                   "ok": violations == 0})

    checked = violations = 0
    worst = -math.inf
    coef = spec.limit_constant
    for s, j, shift, cell in table.diagonal(space):
        exc = np.abs(cell.value) - (coef * disc * (1.0 + BOUND_RTOL) + BOUND_ATOL)
        checked += exc.size
        violations += int(np.count_nonzero(exc > 0.0))
        worst = max(worst, float(exc.max()))
    checks.append({"name": "limit_field", "checked": checked,
                   "violations": violations, "max_excess": worst,
                   "ok": violations == 0})
    return checks


def check_value_bounds(fields, spec: ProblemSpec) -> list:
    """Verify the discounted a-priori bounds on a list of value fields.

    Iterate fields: values against ((2n+1)*c*Bg + n*Bpsi) * exp(-theta k)
    with n the field's budget, finite obstacle entries against
    (2n*c*Bg + n*Bpsi) * exp(-theta k).  Limit fields: values against the
    limit constant; their obstacle entries keep the per-regime budget
    n - count.  Magnitudes only count as violations past a relative
    1e-12 plus absolute 1e-15 slack.  Reports produced by solve() carry
    the same three families, computed over the full budget table.
    """
    bg, bpsi, ct = spec.g_norm, spec.psi_norm, spec.c_theta
    acc = {name: [0, 0, -math.inf]
           for name in ("iterate_values", "obstacles", "limit_field")}

    def tally(name, mags, bound_arr):
        exc = mags - (bound_arr * (1.0 + BOUND_RTOL) + BOUND_ATOL)
        got = acc[name]
        got[0] += exc.size
        got[1] += int(np.count_nonzero(exc > 0.0))
        if exc.size:
            got[2] = max(got[2], float(exc.max()))

    for fld in fields:
        arrays = fld.node_arrays
        disc = np.array([math.exp(-spec.theta * t)
                         for t in range(int(arrays.depth) + 1)])[arrays.time]
        for shift, count, values, obst in fld.entry_arrays():
            if fld.kind == "iterate":
                m = fld.n
                coef = (2 * m + 1) * ct * bg + m * bpsi
                tally("iterate_values", np.abs(values), coef * disc)
            else:
                m = fld.n - count
                tally("limit_field", np.abs(values), spec.limit_constant * disc)
            if obst is not None:
                finite = obst != NEG_INF
                if np.any(finite):
                    ocoef = 2 * m * ct * bg + m * bpsi
                    tally("obstacles", np.abs(obst[finite]), ocoef * disc[finite])

    return [{"name": name, "checked": checked, "violations": violations,
             "max_excess": worst if checked else 0.0, "ok": violations == 0}
            for name, (checked, violations, worst) in acc.items()]


# ---------------------------------------------------------------------------
# how many iterations a target accuracy needs
# ---------------------------------------------------------------------------

def epsilon_budget(spec: ProblemSpec, eps: float,
                   formula: str = "theta_explicit") -> int:
    """Iterations sufficient for the stationary field to be eps-close.

    "theta_explicit" takes the smallest n >= 1 with

        exp(-theta (1+n) delta) / (1 - exp(-theta)) * Bg
      + exp(-theta (n+1) delta) / (1 - exp(-theta delta)) * Bpsi  <  eps,

    scanning upward.  "paper" uses the closed form
    n = max(1, floor(log(C0 / eps) / delta) + 1) with
    C0 = exp(-delta) / (1 - exp(-delta)) * (Bg + Bpsi), a unit-rate
    simplification kept for comparison.
    """
    if not (eps > 0.0):
        raise ValueError("eps must be positive")
    bg, bpsi = spec.g_norm, spec.psi_norm
    th, d = spec.theta, spec.delta
    if formula == "paper":
        c0 = math.exp(-d) / (1.0 - math.exp(-d)) * (bg + bpsi)
        return max(1, math.floor(math.log(c0 / eps) / d) + 1)
    if formula != "theta_explicit":
        raise ValueError(f"unknown formula {formula!r}")
    n = 1
    while True:
        tail = (math.exp(-th * (1 + n) * d) / (1.0 - math.exp(-th)) * bg
                + math.exp(-th * (n + 1) * d) / (1.0 - math.exp(-th * d)) * bpsi)
        if tail < eps:
            return n
        n += 1
        if n > 10**6:
            raise ValueError("eps is too small to reach with a sane budget")
