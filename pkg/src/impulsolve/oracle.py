"""Exhaustive reference pricing for small trees.

An adapted deterministic strategy is a map {node id: impulse index} whose
firings respect the execution-delay gap along every root-to-leaf path and
never exceed the impulse budget.  On trees of a few dozen nodes these maps
can be enumerated outright, every one priced by forward simulation, and
the best compared against the backward solver.  Slow on purpose and kept
completely independent of the solver internals: the only shared code is
the path evaluator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import policy, risk_neutral, risk_sensitive
from .errors import BudgetExceededError
from .fields import Stage, Strategy
from .problem import ProblemSpec
from .scenario import ScenarioTree, node_cap


@dataclass
class EnumerationBudget:
    max_strategies: int = 10_000_000
    max_nodes: int = field(default_factory=lambda: node_cap(64))


def _check_tree_size(tree: ScenarioTree, budget: EnumerationBudget):
    n = len(tree.nodes)
    if n > budget.max_nodes:
        raise BudgetExceededError(
            f"tree has {n} nodes, enumeration is capped at {budget.max_nodes}")


def count_strategies(tree: ScenarioTree, spec: ProblemSpec, n_max: int,
                     start_time: int = 0, budget: EnumerationBudget = None) -> int:
    """Number of admissible strategies with at most n_max firings per path.

    Counts without enumerating: subtree counts only depend on (node,
    firings used, earliest allowed firing time), and impulse choices
    multiply in symmetrically.  start_time gates the first firing.
    """
    budget = budget or EnumerationBudget()
    _check_tree_size(tree, budget)
    n_impulses = len(spec.impulses)
    memo = {}

    def count(nid: str, used: int, gate: int) -> int:
        key = (nid, used, gate)
        got = memo.get(key)
        if got is not None:
            return got
        node = tree.node(nid)
        total = 1
        for cid, _ in node.children:
            total *= count(cid, used, gate)
        if used < n_max and node.time >= gate:
            fired = 1
            for cid, _ in node.children:
                fired *= count(cid, used + 1, node.time + spec.delta)
            total += n_impulses * fired
        memo[key] = total
        return total

    return count(tree.root_id, 0, start_time)


def enumerate_strategies(tree: ScenarioTree, spec: ProblemSpec, n_max: int,
                         start_time: int = 0, budget: EnumerationBudget = None):
    """Yield every admissible firing map, no-fire branch first at each node.

    Aborts with BudgetExceededError once the yield count would pass the
    budget.  Firings at nodes whose delayed execution overruns the horizon
    are included; they price as plain waiting (no shift, no charge).
    """
    budget = budget or EnumerationBudget()
    _check_tree_size(tree, budget)
    n_impulses = len(spec.impulses)
    emitted = 0

    def subtree(nid: str, used: int, gate: int):
        node = tree.node(nid)
        children = [cid for cid, _ in node.children]

        def across(idx: int, used_: int, gate_: int):
            if idx == len(children):
                yield {}
                return
            for head in subtree(children[idx], used_, gate_):
                for rest in across(idx + 1, used_, gate_):
                    combined = dict(head)
                    combined.update(rest)
                    yield combined

        yield from across(0, used, gate)
        if used < n_max and node.time >= gate:
            for imp in range(n_impulses):
                for rest in across(0, used + 1, node.time + spec.delta):
                    combined = {nid: imp}
                    combined.update(rest)
                    yield combined

    for firing_map in subtree(tree.root_id, 0, start_time):
        emitted += 1
        if emitted > budget.max_strategies:
            raise BudgetExceededError(
                f"enumeration passed {budget.max_strategies} strategies")
        yield firing_map


def firing_map_to_strategy(tree: ScenarioTree, firing_map: dict) -> Strategy:
    """Group a firing map into stages by the firing count along each prefix."""
    stages = []
    for nid, imp in firing_map.items():
        s = 0
        cur = tree.node(nid).parent
        while cur is not None:
            if cur in firing_map:
                s += 1
            cur = tree.node(cur).parent
        while len(stages) <= s:
            stages.append({})
        stages[s][nid] = imp
    return Strategy(tuple(Stage(stops=dict(st)) for st in stages))


def brute_force_optimum(tree: ScenarioTree, spec: ProblemSpec, n_max: int,
                        start_time: int = 0, budget: EnumerationBudget = None):
    """Best value over all admissible strategies, by exhaustive pricing.

    Returns (value, strategy, n_strategies).  Ties keep the strategy
    enumerated first.  The objective is the solver's: expected total in
    expected-value mode, E[exp(rho total)] in exponential mode, maximised
    as-is in both.
    """
    best_value = None
    best_map = None
    n_seen = 0
    for firing_map in enumerate_strategies(tree, spec, n_max,
                                           start_time=start_time, budget=budget):
        n_seen += 1
        strat = firing_map_to_strategy(tree, firing_map)
        res = policy.evaluate_exact(tree, spec, strat, start_time=start_time)
        if best_value is None or res["value"] > best_value:
            best_value = res["value"]
            best_map = firing_map
    return best_value, firing_map_to_strategy(tree, best_map), n_seen


def cross_check(tree: ScenarioTree, spec: ProblemSpec, n_cap: int = None,
                start_time: int = 0, budget: EnumerationBudget = None,
                tol: float = 1e-9) -> dict:
    """Compare the backward solver against exhaustive enumeration.

    Runs both at the same impulse budget (the saturating cap by default)
    and reports {strategy_count, best_value, solver_value, gap,
    strategy_payoff_gap, pass}.  gap is the root-value difference,
    strategy_payoff_gap prices the solver's extracted strategy against
    the enumerated best, and pass requires both within tol relative to
    1 + |best_value|.
    """
    cap = spec.saturating_cap() if n_cap is None else int(n_cap)
    if spec.mode == "risk_sensitive":
        solved = risk_sensitive.solve(tree, spec, n_cap=cap, start_time=start_time)
    else:
        solved = risk_neutral.solve(tree, spec, n_cap=cap, start_time=start_time)
    best_value, _, n_seen = brute_force_optimum(
        tree, spec, cap, start_time=start_time, budget=budget)
    extracted = policy.evaluate_exact(tree, spec, solved.strategy,
                                      start_time=start_time)["value"]
    gap = abs(solved.root_value - best_value)
    strategy_gap = abs(extracted - best_value)
    scale = 1.0 + abs(best_value)
    return {
        "strategy_count": n_seen,
        "best_value": best_value,
        "solver_value": solved.root_value,
        "gap": gap,
        "strategy_payoff_gap": strategy_gap,
        "pass": gap <= tol * scale and strategy_gap <= tol * scale,
    }
