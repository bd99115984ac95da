"""Shared solver machinery: shift regimes, cell tables, strategy extraction.

Both solvers walk the same augmented state space.  A *regime* is a pair
(cumulative shift, impulses used); regimes form shells by impulse count.
A *cell* holds per-node arrays for one (budget m, shell s, shift j): the
value of acting optimally from that regime with m interventions left.

Cells are computed in ascending budget order.  The intervention branch of a
cell at time k only reads budget m-1 cells at time k + delta, so one pass
over budgets needs no fixed-point iteration: the obstacle

    O(v) = E[ window payoffs (k+1 .. k+delta-1) + next-regime value at k+delta | v ]
           - discount(k+delta) * cost(beta),   maximised over beta

is assembled from delta child-expectation chains, and the cell value follows
from one backward sweep of max(continuation, obstacle).  Nodes whose delayed
execution would land beyond the horizon keep obstacle -inf: the intervention
branch is excluded there, matching an executed-within-horizon-only cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _backend, snell
from .errors import BudgetExceededError, NumericalGuardError
from .problem import EXP_GUARD, ProblemSpec, eval_expr
from .scenario import ScenarioTree, node_cap

NEG_INF = float("-inf")
DEFAULT_STATE_CAP = 10**7


def _eval_g_vec(g, states: np.ndarray) -> np.ndarray:
    """Vectorised payoff grammar evaluation over an (n, dim) state block.

    Elementwise numpy ops agree bit-for-bit with the scalar evaluator in
    problem.eval_expr, which the path evaluator uses; tests rely on that.
    """

    def ev(expr):
        if isinstance(expr, (int, float)) and not isinstance(expr, bool):
            return np.full(states.shape[0], float(expr))
        op = expr[0]
        if op == "coord":
            return states[:, expr[1]].copy()
        if op == "+":
            return ev(expr[1]) + ev(expr[2])
        if op == "-":
            return ev(expr[1]) - ev(expr[2])
        if op == "*":
            return ev(expr[1]) * ev(expr[2])
        if op == "min":
            return np.minimum(ev(expr[1]), ev(expr[2]))
        if op == "max":
            return np.maximum(ev(expr[1]), ev(expr[2]))
        if op == "clamp":
            return np.minimum(np.maximum(ev(expr[1]), float(expr[2])), float(expr[3]))
        if op == "step":
            return np.where(ev(expr[1]) >= float(expr[2]), 1.0, 0.0)
        raise ValueError(f"unknown operator {op!r}")

    # validate via the scalar path once so both evaluators reject alike
    eval_expr(g.expr, tuple(states[0]))
    return ev(g.expr)


def node_payoffs(arrays, spec: ProblemSpec, shift: tuple, start_time: int = 0,
                 multiplicative: bool = False) -> np.ndarray:
    """Discounted running payoff per node under a cumulative shift.

    Zero strictly before the start time; scaled by rho when the
    multiplicative (exponential-criterion) solver asks.  This is the one
    payoff definition: the solver contexts and the standalone bound
    checkers both call it, so their arrays agree bit for bit.
    """
    theta = spec.theta
    disc = np.array([math.exp(-theta * t) for t in range(int(arrays.depth) + 1)])
    active = arrays.time >= start_time
    states = arrays.state + np.asarray(shift, dtype=np.float64)
    gvals = _eval_g_vec(spec.g, states)
    if multiplicative:
        rho = spec.rho if spec.rho is not None else 1.0
        gvals = rho * gvals
    return np.where(active, disc[arrays.time] * gvals, 0.0)


class RegimeSpace:
    """Cumulative shifts reachable with at most `max_count` impulses.

    shells[s] lists the distinct shifts after exactly s impulses (value
    deduplicated; the representative is the first sum encountered, in
    impulse declaration order, so construction is deterministic).
    targets[s][j][i] indexes shells[s+1] at shells[s][j] + impulse i.
    """

    def __init__(self, impulses, dim: int, max_count: int):
        self.impulses = impulses
        self.dim = dim
        self.shells = [[(0.0,) * dim]]
        self.targets = []
        for s in range(max_count):
            index = {}
            shell = []
            rows = []
            for shift in self.shells[s]:
                row = []
                for beta in impulses:
                    nxt = tuple(shift[d] + beta[d] for d in range(dim))
                    k = index.get(nxt)
                    if k is None:
                        k = len(shell)
                        index[nxt] = k
                        shell.append(nxt)
                    row.append(k)
                rows.append(row)
            self.shells.append(shell)
            self.targets.append(rows)

    def total_shifts(self) -> int:
        return sum(len(shell) for shell in self.shells)


@dataclass
class Cell:
    value: np.ndarray
    obstacle: np.ndarray
    argmax: Optional[np.ndarray]


class CellTable:
    """Triangular table of cells: budget m plus shell s at most `cap`."""

    def __init__(self, cap: int):
        self.cap = cap
        self.cells = {}

    def put(self, m, s, j, cell):
        self.cells[(m, s, j)] = cell

    def get(self, m, s, j) -> Cell:
        return self.cells[(m, s, j)]

    def row(self, m, space: RegimeSpace):
        """Cells of budget m: [(s, j, shift, cell)] for shells s <= cap - m."""
        out = []
        for s in range(self.cap - m + 1):
            for j, shift in enumerate(space.shells[s]):
                out.append((s, j, shift, self.cells[(m, s, j)]))
        return out

    def diagonal(self, space: RegimeSpace):
        """Limit view: shell s paired with budget cap - s."""
        out = []
        for s in range(self.cap + 1):
            for j, shift in enumerate(space.shells[s]):
                out.append((s, j, shift, self.cells[(self.cap - s, s, j)]))
        return out


class SolveContext:
    """Per-solve caches: discounts, payoff arrays per shift, guards."""

    def __init__(self, tree: ScenarioTree, spec: ProblemSpec, start_time: int = 0,
                 multiplicative: bool = False):
        spec.validate_against_tree(tree)
        self.tree = tree
        self.spec = spec
        self.start_time = start_time
        self.multiplicative = multiplicative
        self.rho = 1.0
        if multiplicative:
            self.rho = spec.rho if spec.rho is not None else 1.0
            if spec.rs_exponent_bound() > EXP_GUARD:
                raise NumericalGuardError(
                    f"risk-sensitive exponent bound {spec.rs_exponent_bound():.3g} "
                    f"exceeds {EXP_GUARD:g}; instance rejected before overflow")
        arrays = tree.arrays
        self.arrays = arrays
        T = tree.depth
        delta = spec.delta
        disc = np.array([math.exp(-spec.theta * t) for t in range(T + delta + 1)])
        self.disc = disc
        self.disc_by_node = disc[arrays.time]
        self.exec_disc = disc[arrays.time + delta]
        self.exec_mask = (arrays.time + delta) <= T
        self.active = arrays.time >= start_time
        self.psi_scaled = [self.rho * p for p in spec.psi] if multiplicative else list(spec.psi)
        # intervention cost terms, fixed per impulse across all cells
        self.cost_term = [self.exec_disc * ps for ps in self.psi_scaled]
        if multiplicative:
            self.cost_factor = [np.exp(-ct) for ct in self.cost_term]
        self._pay = {}
        self._fac = {}

    def pay(self, shift: tuple) -> np.ndarray:
        """Discounted running payoff per node under `shift`, zero before start."""
        arr = self._pay.get(shift)
        if arr is None:
            arr = node_payoffs(self.arrays, self.spec, shift,
                               start_time=self.start_time,
                               multiplicative=self.multiplicative)
            self._pay[shift] = arr
        return arr

    def fac(self, shift: tuple) -> np.ndarray:
        """exp of the (scaled) running payoff; multiplicative solves only."""
        arr = self._fac.get(shift)
        if arr is None:
            arr = np.exp(self.pay(shift))
            self._fac[shift] = arr
        return arr


def obstacle_arrays(ctx: SolveContext, shift: tuple, prev_values: list):
    """Intervention obstacle for one cell.

    prev_values[i] is the node-value array of the next regime after impulse
    i (budget one lower, shift moved by impulse i).  Returns (obstacle,
    argmax); argmax is -1 where no branch is admissible, and ties keep the
    lowest impulse index.
    """
    arrays = ctx.arrays
    delta = ctx.spec.delta
    n = arrays.n
    obst = np.full(n, NEG_INF)
    amax = np.full(n, -1, dtype=np.int64)
    if ctx.multiplicative:
        window = ctx.fac(shift)
    else:
        window = ctx.pay(shift)
    for i, prev in enumerate(prev_values):
        a = np.empty(n)
        _backend.expect_children(arrays.ptr, arrays.child, arrays.prob, prev, a)
        for _ in range(delta - 1):
            b = np.empty(n)
            if ctx.multiplicative:
                _backend.expect_children_mul(arrays.ptr, arrays.child, arrays.prob,
                                             window, a, b)
            else:
                _backend.expect_children_add(arrays.ptr, arrays.child, arrays.prob,
                                             window, a, b)
            a = b
        if ctx.multiplicative:
            branch = a * ctx.cost_factor[i]
        else:
            branch = a - ctx.cost_term[i]
        better = ctx.exec_mask & (branch > obst)
        obst[better] = branch[better]
        amax[better] = i
    return obst, amax


def sweep_cell(ctx: SolveContext, shift: tuple, obst: np.ndarray) -> np.ndarray:
    arrays = ctx.arrays
    out = np.empty(arrays.n)
    if ctx.multiplicative:
        _backend.sweep_max_mul(arrays.ptr, arrays.child, arrays.prob,
                               ctx.fac(shift), obst, 1.0, out)
    else:
        _backend.sweep_max_add(arrays.ptr, arrays.child, arrays.prob,
                               ctx.pay(shift), obst, 0.0, out)
    return out


def solve_table(ctx: SolveContext, cap: int) -> tuple:
    """Fill the budget-by-shell triangle up to `cap`; returns (table, space)."""
    spec = ctx.spec
    space = RegimeSpace(spec.impulses, spec.dim, cap)
    states = ctx.arrays.n * space.total_shifts()
    limit = node_cap(DEFAULT_STATE_CAP)
    if states > limit:
        raise BudgetExceededError(
            f"augmented state space needs {states} node-shift pairs, cap is {limit}")
    table = CellTable(cap)
    neg_inf = np.full(ctx.arrays.n, NEG_INF)
    for m in range(cap + 1):
        for s in range(cap - m + 1):
            for j, shift in enumerate(space.shells[s]):
                if m == 0:
                    obst, amax = neg_inf, None
                else:
                    prev = [table.get(m - 1, s + 1, space.targets[s][j][i]).value
                            for i in range(len(spec.impulses))]
                    obst, amax = obstacle_arrays(ctx, shift, prev)
                value = sweep_cell(ctx, shift, obst)
                table.put(m, s, j, Cell(value=value, obstacle=obst, argmax=amax))
    return table, space


def sup_increments(table: CellTable, space: RegimeSpace) -> list:
    """Per-budget convergence rows for the report: [{n, sup_increment}].

    Increment n compares budgets n and n-1 on the shells both rows carry
    (every shell of row n also exists one budget lower).  The max is
    signed; monotonicity keeps it nonnegative up to float noise, so it
    doubles as the sup-norm of the difference.
    """
    rows = []
    for m in range(1, table.cap + 1):
        worst = NEG_INF
        for s, j, shift, cell in table.row(m, space):
            prev = table.get(m - 1, s, j)
            worst = max(worst, float(np.max(cell.value - prev.value)))
        rows.append({"n": m, "sup_increment": worst})
    return rows


# ---------------------------------------------------------------------------
# strategy extraction
# ---------------------------------------------------------------------------


@dataclass
class SolveResult:
    """Everything a solve produced: the JSON-able report plus live objects."""

    report: object
    field: object
    strategy: object
    iterations: list
    table: CellTable
    space: RegimeSpace
    context: SolveContext

    @property
    def root_value(self) -> float:
        return self.report.root_value


def extract_stages(ctx: SolveContext, table: CellTable, space: RegimeSpace,
                   first_from: int = 0) -> list:
    """First-hit stopping stages of the limit field.

    Walk the tree; in regime (s, j) a node fires as stage s when the cell
    value meets the intervention branch (value == payoff-composed obstacle
    within the hitting tolerance), which happens exactly when the backward
    sweep took the obstacle.  After a hit the walk drops into the next
    regime and blocks further hits until the execution delay has elapsed.
    """
    arrays = ctx.arrays
    delta = ctx.spec.delta
    stages = []
    stack = [(arrays.root, 0, 0, first_from)]
    while stack:
        v, s, j, from_t = stack.pop()
        cell = table.get(table.cap - s, s, j)
        fired = False
        if arrays.time[v] >= from_t:
            o = cell.obstacle[v]
            if o != NEG_INF:
                if ctx.multiplicative:
                    stopped = ctx.fac(space.shells[s][j])[v] * o
                else:
                    stopped = ctx.pay(space.shells[s][j])[v] + o
                fired = snell.is_hit(float(cell.value[v]), float(stopped))
        if fired:
            i = int(cell.argmax[v])
            while len(stages) <= s:
                stages.append({})
            stages[s][arrays.ids[v]] = i
            nj = space.targets[s][j][i]
            nxt = (s + 1, nj, int(arrays.time[v]) + delta)
        else:
            nxt = (s, j, from_t)
        for e in range(int(arrays.ptr[v + 1]) - 1, int(arrays.ptr[v]) - 1, -1):
            stack.append((int(arrays.child[e]),) + nxt)
    return stages
