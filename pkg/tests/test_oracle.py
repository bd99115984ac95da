"""Exhaustive enumeration oracle and the solver cross-check."""

import pytest

from conftest import (as_risk_sensitive, chain_tree, flat_instance, make_spec,
                      random_instance, step_instance, subsidy_instance)
from impulsolve import oracle, policy
from impulsolve.errors import BudgetExceededError


def test_count_tiny_chain():
    tree = chain_tree(1)
    spec = make_spec(horizon=1)
    assert oracle.count_strategies(tree, spec, 0) == 1
    assert oracle.count_strategies(tree, spec, 1) == 3  # never, fire@0, fire@1
    two = make_spec(horizon=1, impulses=((1.0,), (-1.0,)), psi=(0.1, 0.1))
    assert oracle.count_strategies(tree, two, 1) == 5


def test_count_respects_the_delay_gate():
    tree = chain_tree(2)
    spec = make_spec(horizon=2, delta=2)
    # singles at t in {0,1,2}; the only pair is (0, 2)
    assert oracle.count_strategies(tree, spec, 2) == 1 + 3 + 1


def test_count_matches_enumeration():
    for seed in (0, 5, 9):
        tree, spec = random_instance(seed)
        want = oracle.count_strategies(tree, spec, 2)
        got = sum(1 for _ in oracle.enumerate_strategies(tree, spec, 2))
        assert got == want


def test_enumerated_maps_are_admissible():
    tree, spec = random_instance(2)
    for fm in oracle.enumerate_strategies(tree, spec, 2):
        strat = oracle.firing_map_to_strategy(tree, fm)
        # pricing walks every path and raises on any delay violation
        policy.evaluate_exact(tree, spec, strat)


def test_firing_map_stage_grouping():
    tree = chain_tree(3)
    strat = oracle.firing_map_to_strategy(tree, {"n0": 1, "n2": 0})
    assert strat.n_stages == 2
    assert strat.stages[0].stops == {"n0": 1}
    assert strat.stages[1].stops == {"n2": 0}


def test_budgets_abort():
    tree, spec = random_instance(3)
    tight = oracle.EnumerationBudget(max_strategies=2)
    with pytest.raises(BudgetExceededError):
        list(oracle.enumerate_strategies(tree, spec, 2, budget=tight))
    small = oracle.EnumerationBudget(max_nodes=1)
    with pytest.raises(BudgetExceededError):
        oracle.count_strategies(tree, spec, 1, budget=small)


def test_brute_force_value_grows_with_budget():
    tree, spec = random_instance(6)
    values = [oracle.brute_force_optimum(tree, spec, n)[0] for n in range(3)]
    for lo, hi in zip(values, values[1:]):
        assert lo <= hi + 1e-15


def test_brute_force_on_the_step_instance():
    tree, spec = step_instance()
    value, strat, n_seen = oracle.brute_force_optimum(tree, spec, 1)
    assert abs(value - 0.825) < 1e-15
    assert strat.stages[0].stops == {"n0": 0}
    assert n_seen == oracle.count_strategies(tree, spec, 1)


def test_never_intervene_when_payoff_is_flat():
    tree, spec = flat_instance()
    value, strat, _ = oracle.brute_force_optimum(tree, spec,
                                                 spec.saturating_cap())
    assert abs(value - 1.875) < 1e-15
    assert all(not st.stops for st in strat.stages)


def test_cross_check_passes_on_worked_instances():
    for tree, spec in (step_instance(), subsidy_instance()):
        report = oracle.cross_check(tree, spec)
        assert report["pass"]
        assert report["gap"] <= 1e-9
        assert report["strategy_payoff_gap"] <= 1e-9
        assert set(report) == {"strategy_count", "best_value", "solver_value",
                               "gap", "strategy_payoff_gap", "pass"}
    tree, spec = subsidy_instance()
    report = oracle.cross_check(tree, spec)
    assert report["strategy_count"] == 16  # subsets of the four firing times


def test_cross_check_risk_sensitive_mode():
    tree, base = step_instance()
    spec = as_risk_sensitive(base, rho=1.0)
    report = oracle.cross_check(tree, spec)
    assert report["pass"]
    assert report["best_value"] > 1.0


def test_cross_check_random_instances():
    for seed in (30, 31):
        tree, spec = random_instance(seed)
        assert oracle.cross_check(tree, spec, n_cap=2)["pass"]
