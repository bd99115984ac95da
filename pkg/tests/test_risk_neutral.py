"""Expected-value solver: worked instances, recursion properties, bounds."""

import math

import numpy as np
import pytest

from conftest import (LN2, chain_tree, flat_instance, make_spec,
                      random_instance, step_instance, subsidy_instance)
from impulsolve import risk_neutral, snell
from impulsolve.errors import BudgetExceededError


# ---------------------------------------------------------------------------
# worked instances
# ---------------------------------------------------------------------------

def test_flat_chain_never_intervenes():
    tree, spec = flat_instance()
    base = risk_neutral.no_impulse_value(tree, spec)
    assert abs(base["n0"] - 1.875) < 1e-15
    res = risk_neutral.solve(tree, spec)
    assert abs(res.root_value - 1.875) < 1e-15
    assert all(not st.stops for st in res.strategy.stages)
    assert all(row["sup_increment"] == 0.0 for row in res.iterations)


def test_step_obstacle_value_at_root():
    # continuation after the impulse still worthless: obstacle = -fee * discount
    tree, spec = step_instance()
    zero = {nid: 0.0 for nid in tree.nodes}
    obstacle, best = risk_neutral.intervention_obstacle(tree, spec, [zero])
    assert abs(obstacle["n0"] - (-0.05)) < 1e-15
    assert best["n0"] == 0


def test_step_single_impulse_value():
    tree, spec = step_instance()
    fields = risk_neutral.value_iterates(tree, spec, 1)
    assert fields[0].root_value == 0.0
    assert abs(fields[1].root_value - 0.825) < 1e-15
    res = risk_neutral.solve(tree, spec)
    assert abs(res.root_value - 0.825) < 1e-15
    # the extracted strategy fires once, immediately
    assert res.strategy.stages[0].stops == {"n0": 0}


def test_subsidy_chain_fires_every_step():
    tree, spec = subsidy_instance()
    res = risk_neutral.solve(tree, spec)
    assert abs(res.root_value - 2.75) < 1e-15
    fired = [st.stops for st in res.strategy.stages if st.stops]
    assert fired == [{"n0": 0}, {"n1": 0}, {"n2": 0}]
    sups = [row["sup_increment"] for row in res.iterations]
    assert sups[:3] == [0.5, 0.25, 0.125]
    assert all(s == 0.0 for s in sups[3:])
    assert [row["n"] for row in res.iterations] == list(range(1, len(sups) + 1))


def test_no_impulse_value_is_discounted_payoff_sum():
    tree, spec = random_instance(101)
    vals = risk_neutral.no_impulse_value(tree, spec)
    leaf_expect = {}
    for sample in tree.paths():
        total = sum(math.exp(-spec.theta * tree.node(nid).time)
                    * spec.g(tree.node(nid).state)
                    for nid in sample.node_ids)
        leaf_expect[sample.node_ids[-1]] = total
    root_direct = sum(s.probability * leaf_expect[s.node_ids[-1]]
                      for s in tree.paths())
    assert abs(vals[tree.root_id] - root_direct) < 1e-12


def test_no_impulse_value_shift_moves_the_state():
    tree, spec = step_instance()
    plain = risk_neutral.no_impulse_value(tree, spec)
    lifted = risk_neutral.no_impulse_value(tree, spec, shift=(1.0,))
    assert plain["n0"] == 0.0
    assert abs(lifted["n0"] - 1.875) < 1e-15  # step payoff on from time 0


# ---------------------------------------------------------------------------
# obstacle boundary conventions
# ---------------------------------------------------------------------------

def test_obstacle_horizon_conventions():
    tree = chain_tree(3)
    spec = make_spec(delta=2, horizon=3)
    zero = {nid: 0.0 for nid in tree.nodes}
    obstacle, best = risk_neutral.intervention_obstacle(tree, spec, [zero])
    # horizon nodes report the neutral value 0
    assert obstacle["n3"] == 0.0
    # interior node whose execution would land beyond the horizon: excluded
    assert obstacle["n2"] == float("-inf")
    assert "n2" not in best and "n3" not in best
    assert math.isfinite(obstacle["n0"]) and math.isfinite(obstacle["n1"])


def test_obstacle_prefers_lowest_index_on_ties():
    tree, spec = step_instance()
    twin = make_spec(g_expr=spec.g.expr, impulses=((1.0,), (1.0,)),
                     psi=(0.1, 0.1), horizon=3)
    zero = {nid: 0.0 for nid in tree.nodes}
    _, best = risk_neutral.intervention_obstacle(tree, twin, [zero, zero])
    assert best["n0"] == 0


# ---------------------------------------------------------------------------
# iterates: monotonicity, saturation, route agreement
# ---------------------------------------------------------------------------

def test_iterates_increase_with_budget():
    for seed in range(5):
        tree, spec = random_instance(seed)
        fields = risk_neutral.value_iterates(tree, spec, 4)
        for lo, hi in zip(fields, fields[1:]):
            lower = {(s, c): v for s, c, v, _ in lo.entry_arrays()}
            # the higher budget tracks one shell less; compare where both live
            for shift, count, values, _ in hi.entry_arrays():
                assert np.all(lower[(shift, count)] <= values + 1e-12)


def test_budget_zero_field_matches_no_impulse_value():
    tree, spec = random_instance(11)
    field = risk_neutral.value_iterates(tree, spec, 0)[0]
    base = risk_neutral.no_impulse_value(tree, spec)
    for nid in tree.nodes:
        assert abs(field.value(nid) - base[nid]) < 1e-12


def test_solve_agrees_with_iterates_at_cap():
    for seed in (21, 22, 23):
        tree, spec = random_instance(seed)
        cap = spec.saturating_cap()
        fields = risk_neutral.value_iterates(tree, spec, cap)
        res = risk_neutral.solve(tree, spec)
        assert abs(res.root_value - fields[cap].root_value) < 1e-12


def test_tol_zero_stops_at_exact_saturation():
    tree, spec = subsidy_instance()
    fields = risk_neutral.value_iterates(tree, spec, 10, tol=0.0)
    # three executions fit in the horizon, so the fourth row repeats the third
    assert fields[-1].n == 4
    assert abs(fields[-1].root_value - 2.75) < 1e-15


def test_tol_positive_stops_early():
    tree, spec = subsidy_instance()
    fields = risk_neutral.value_iterates(tree, spec, 10, tol=0.3)
    # increments are 0.5, 0.25, ...: the second is already <= 0.3
    assert fields[-1].n == 2
    fields_all = risk_neutral.value_iterates(tree, spec, 10, tol=None)
    assert fields_all[-1].n == 10


def test_iterates_argument_validation():
    tree, spec = flat_instance()
    with pytest.raises(ValueError):
        risk_neutral.value_iterates(tree, spec, -1)
    with pytest.raises(ValueError):
        risk_neutral.value_iterates(tree, spec, 2, tol=-0.5)


def test_field_metadata():
    tree, spec = step_instance()
    fields = risk_neutral.value_iterates(tree, spec, 2, start_time=1)
    assert all(f.kind == "iterate" for f in fields)
    assert all(f.start_time == 1 for f in fields)
    res = risk_neutral.solve(tree, spec)
    assert res.field.kind == "limit"
    assert res.field.start_time == 0


# ---------------------------------------------------------------------------
# start-time consistency
# ---------------------------------------------------------------------------

def test_later_start_agrees_beyond_it():
    for seed in (31, 32):
        tree, spec = random_instance(seed)
        for nu, nu2 in ((0, 1), (1, 2)):
            early = risk_neutral.value_iterates(tree, spec, 2, start_time=nu)
            late = risk_neutral.value_iterates(tree, spec, 2, start_time=nu2)
            for fe, fl in zip(early, late):
                for nid, node in tree.nodes.items():
                    if node.time >= nu2:
                        assert abs(fe.value(nid) - fl.value(nid)) < 1e-12


# ---------------------------------------------------------------------------
# strategy extraction
# ---------------------------------------------------------------------------

def test_extract_strategy_respects_min_time():
    tree, spec = subsidy_instance()
    res = risk_neutral.solve(tree, spec)
    delayed = risk_neutral.extract_strategy(res, first_impulse_min_time=1)
    first = min(tree.node(nid).time
                for st in delayed.stages for nid in st.stops)
    assert first >= 1


# ---------------------------------------------------------------------------
# a-priori bounds and budgets
# ---------------------------------------------------------------------------

def test_solve_report_bounds_all_ok():
    for seed in (41, 42, 43):
        tree, spec = random_instance(seed)
        res = risk_neutral.solve(tree, spec)
        names = [c["name"] for c in res.report.bound_checks]
        assert names == ["iterate_values", "obstacles", "limit_field"]
        assert all(c["ok"] and c["violations"] == 0
                   for c in res.report.bound_checks)


def test_check_value_bounds_on_iterate_fields():
    tree, spec = random_instance(44)
    fields = risk_neutral.value_iterates(tree, spec, 3)
    checks = risk_neutral.check_value_bounds(fields, spec)
    assert [c["name"] for c in checks] == ["iterate_values", "obstacles",
                                           "limit_field"]
    assert all(c["ok"] for c in checks)


def test_node_budget_guard(monkeypatch):
    tree, spec = flat_instance()
    monkeypatch.setenv("IMPULSOLVE_NODE_CAP", "3")
    with pytest.raises(BudgetExceededError):
        risk_neutral.value_iterates(tree, spec, 2)


# ---------------------------------------------------------------------------
# degenerate instances
# ---------------------------------------------------------------------------

def test_zero_payoff_means_zero_value():
    tree = chain_tree(3)
    spec = make_spec(g_expr=0.0, psi=(0.5,), horizon=3)
    res = risk_neutral.solve(tree, spec)
    assert res.root_value == 0.0
    assert all(not st.stops for st in res.strategy.stages)


def test_prohibitive_fee_means_no_impulse():
    tree, _ = step_instance()
    spec = make_spec(g_expr=["step", ["coord", 0], 1.0],
                     impulses=((1.0,),), psi=(10.0,), horizon=3)
    res = risk_neutral.solve(tree, spec)
    base = risk_neutral.no_impulse_value(tree, spec)
    assert abs(res.root_value - base["n0"]) < 1e-15
    assert all(not st.stops for st in res.strategy.stages)


# ---------------------------------------------------------------------------
# iteration budgets from accuracy targets
# ---------------------------------------------------------------------------

def test_epsilon_budget_closed_form():
    spec = make_spec(g_bound=1.0, psi=(1.0,), delta=1, horizon=6)
    # C0 = e^{-1}/(1 - e^{-1}) * 2, about 1.164
    assert risk_neutral.epsilon_budget(spec, 0.1, formula="paper") == 3
    assert risk_neutral.epsilon_budget(spec, 2.0, formula="paper") == 1


def test_epsilon_budget_theta_scan():
    spec = make_spec(g_bound=1.0, psi=(1.0,), theta=LN2, delta=1, horizon=6)
    n = risk_neutral.epsilon_budget(spec, 0.1, formula="theta_explicit")
    assert n == 5
    # the returned budget is the smallest one meeting the target
    def tail(m):
        return (math.exp(-LN2 * (1 + m)) / (1.0 - math.exp(-LN2))
                + math.exp(-LN2 * (m + 1)) / (1.0 - math.exp(-LN2)))
    assert tail(n) < 0.1 <= tail(n - 1)


def test_epsilon_budget_monotone_and_guarded():
    spec = make_spec(g_bound=1.0, psi=(1.0,), theta=LN2, delta=1, horizon=6)
    budgets = [risk_neutral.epsilon_budget(spec, e) for e in (0.5, 0.1, 0.01)]
    assert budgets == sorted(budgets)
    with pytest.raises(ValueError):
        risk_neutral.epsilon_budget(spec, 0.0)
    with pytest.raises(ValueError):
        risk_neutral.epsilon_budget(spec, 0.1, formula="newton")


# ---------------------------------------------------------------------------
# the two routes
# ---------------------------------------------------------------------------

def test_stopped_form_matches_direct_sweeps():
    # value_iterates goes through the envelope route, solve through direct
    # sweeps; they must agree to near machine precision everywhere
    for seed in (51, 52, 53, 54):
        tree, spec = random_instance(seed)
        cap = spec.saturating_cap()
        fields = risk_neutral.value_iterates(tree, spec, cap)
        res = risk_neutral.solve(tree, spec, n_cap=cap)
        diag = fields[cap]
        for nid in tree.nodes:
            assert abs(diag.value(nid) - res.field.value(nid)) < 1e-12
