"""Shared instance builders for the test suite.

Plain functions rather than fixtures, so each test file still reads like
the small standalone scripts these started as.  Every random draw goes
through the package's own counter-mode generator; batteries therefore
reproduce bit for bit on any machine and backend.

State increments and branch probabilities are kept on dyadic grids
(multiples of 1/8).  That makes tree arithmetic exactly representable,
which the cross-backend bit-identity tests rely on.
"""

import dataclasses
import math

from impulsolve import oracle, problem, risk_neutral, risk_sensitive, scenario
from impulsolve.rng import SplitMix64

LN2 = math.log(2.0)

# dyadic branch probabilities: p and 1 - p are both exact doubles
_P_CHOICES = (0.25, 0.375, 0.5, 0.625, 0.75)


def make_spec(g_expr=1.0, g_bound=None, impulses=((1.0,),), psi=(0.1,),
              theta=LN2, delta=1, horizon=3, mode="risk_neutral", rho=None):
    """Problem description with small defaults; the g bound is inferred."""
    if g_bound is None:
        lo, hi = problem.expr_interval(g_expr)
        g_bound = max(abs(lo), abs(hi))
    spec = problem.ProblemSpec(
        theta=float(theta), delta=int(delta),
        impulses=tuple(tuple(float(c) for c in u) for u in impulses),
        psi=tuple(float(p) for p in psi),
        g=problem.BoundedFunction(expr=g_expr, bound=float(g_bound)),
        horizon=int(horizon), mode=mode, rho=rho)
    spec.validate()
    return spec


def as_risk_sensitive(spec, rho=1.0):
    return dataclasses.replace(spec, mode=problem.MODE_RISK_SENSITIVE,
                               rho=float(rho))


def solver_for(spec):
    return risk_sensitive if spec.mode == problem.MODE_RISK_SENSITIVE else risk_neutral


def iterates_for(tree, spec, n_max, **kw):
    if spec.mode == problem.MODE_RISK_SENSITIVE:
        return risk_sensitive.utility_iterates(tree, spec, n_max, **kw)
    return risk_neutral.value_iterates(tree, spec, n_max, **kw)


# ---------------------------------------------------------------------------
# worked instances with hand-checkable values
# ---------------------------------------------------------------------------

def chain_tree(depth=3, step=0.0):
    """Deterministic single-path tree; states drift by `step` per tick."""
    return scenario.generate_walk_tree(1, depth, [((step,), 1.0)])


def binary_tree(depth, up=1.0, down=-1.0, p=0.5):
    return scenario.generate_walk_tree(2, depth, [((up,), p), ((down,), 1.0 - p)])


def flat_instance(horizon=3):
    """g constant 1 on a chain, impulses useless: Y0 root = 1.875 at T=3.

    The sum 1 + 1/2 + 1/4 + 1/8 with theta = ln 2; intervening only adds
    cost, so the full solve returns the same number.
    """
    tree = chain_tree(horizon)
    spec = make_spec(g_expr=1.0, impulses=((1.0,),), psi=(0.1,), horizon=horizon)
    return tree, spec


def step_instance():
    """g = 1{x >= 1} with X identically 0 on a T=3 chain, U = {+1}, psi 0.1.

    One impulse at tau = 0 lifts the state to 1 from k = 1 on: payoff
    1/2 + 1/4 + 1/8 minus the discounted fee 0.1/2, so Y1 root = 0.825.
    """
    tree = chain_tree(3)
    spec = make_spec(g_expr=["step", ["coord", 0], 1.0],
                     impulses=((1.0,),), psi=(0.1,), horizon=3)
    return tree, spec


def subsidy_instance():
    """Negative fee: firing is paid 1 per impulse, g constant 1, T=3 chain.

    Firing at k = 0, 1, 2 (executions at 1, 2, 3) collects the subsidy
    7/8 on top of the running payoff 15/8: root value 2.75.
    """
    tree = chain_tree(3)
    spec = make_spec(g_expr=1.0, impulses=((0.0,),), psi=(-1.0,), horizon=3)
    return tree, spec


# ---------------------------------------------------------------------------
# randomized batteries
# ---------------------------------------------------------------------------

def _dyadic(rng, lo=-1.0, hi=1.0):
    """Multiple of 1/8 in [lo, hi], endpoints included."""
    k = int(round((hi - lo) * 8))
    return lo + rng.next_below(k + 1) / 8.0


def random_tree(rng, depth, max_nodes=40, branch_p=0.4):
    """Irregular tree: 1 or 2 children per node, all leaves at `depth`.

    Grows level by level and redraws from scratch if the node budget is
    passed; a pure chain always fits, so this terminates.
    """
    for _ in range(200):
        nodes = [{"id": "n0", "time": 0, "state": [0.0], "children": []}]
        frontier = [0]
        fits = True
        for t in range(1, depth + 1):
            nxt = []
            for v in frontier:
                width = 2 if rng.next_uniform() < branch_p else 1
                if width == 2:
                    p = _P_CHOICES[rng.next_below(len(_P_CHOICES))]
                    probs = [p, 1.0 - p]
                else:
                    probs = [1.0]
                base = nodes[v]["state"][0]
                for w, pr in enumerate(probs):
                    inc = _dyadic(rng, -0.5, 0.5) + (0.5 - w if width == 2 else 0.0)
                    u = len(nodes)
                    nodes.append({"id": f"n{u}", "time": t,
                                  "state": [base + inc],
                                  "parent": nodes[v]["id"], "children": []})
                    nodes[v]["children"].append({"id": f"n{u}", "p": pr})
                    nxt.append(u)
            frontier = nxt
            if len(nodes) > max_nodes:
                fits = False
                break
        if fits:
            for entry in nodes:
                if not entry["children"]:
                    del entry["children"]
            return scenario.tree_from_dict({"dim": 1, "depth": depth,
                                            "nodes": nodes})
    raise RuntimeError(f"no tree with <= {max_nodes} nodes after 200 draws")


def random_g(rng):
    """Bounded payoff expression over one coordinate, several shapes."""
    shape = rng.next_below(4)
    if shape == 0:
        b = (0.5, 1.0)[rng.next_below(2)]
        return ["clamp", ["coord", 0], -b, b]
    if shape == 1:
        return ["step", ["coord", 0], _dyadic(rng)]
    if shape == 2:
        return ["clamp", ["+", ["coord", 0], _dyadic(rng)], -1.0, 1.0]
    return ["*", 0.5, ["step", ["coord", 0], _dyadic(rng)]]


def random_spec(rng, horizon, mode="risk_neutral", rho=1.0, delta=None):
    """Spec within the battery caps: Delta in {1,2}, |U| <= 2, mixed-sign psi."""
    if delta is None:
        delta = 1 + rng.next_below(2)
    n_imp = 1 + rng.next_below(2)
    impulses, psi = [], []
    for _ in range(n_imp):
        impulses.append((_dyadic(rng),))
        fee = (1 + rng.next_below(8)) / 8.0
        if rng.next_uniform() < 0.3:
            fee = -fee
        psi.append(fee)
    theta = (0.35, LN2, 1.0)[rng.next_below(3)]
    return make_spec(g_expr=random_g(rng), impulses=tuple(impulses),
                     psi=tuple(psi), theta=theta, delta=delta,
                     horizon=horizon, mode=mode,
                     rho=rho if mode == problem.MODE_RISK_SENSITIVE else None)


def random_instance(seed, mode="risk_neutral", rho=1.0, n_max=2,
                    max_nodes=40, max_strategies=3000, min_depth=2,
                    max_depth=6):
    """Tree plus spec sized for exhaustive enumeration at budget n_max.

    Redraws until the strategy count at n_max stays under max_strategies,
    so the brute-force batteries keep a predictable runtime.
    """
    rng = SplitMix64(seed)
    for _ in range(100):
        depth = min_depth + rng.next_below(max_depth - min_depth + 1)
        tree = random_tree(rng, depth, max_nodes=max_nodes)
        spec = random_spec(rng, horizon=depth, mode=mode, rho=rho)
        if oracle.count_strategies(tree, spec, n_max) <= max_strategies:
            return tree, spec
    raise RuntimeError(f"no enumerable instance for seed {seed}")


def random_firing_map(rng, tree, spec, n_max, fire_p=0.35, start_time=0):
    """Admissible firing map sampled by an adapted walk over the tree."""
    fm = {}

    def walk(nid, used, gate):
        node = tree.node(nid)
        fired = used < n_max and node.time >= gate and rng.next_uniform() < fire_p
        if fired:
            fm[nid] = rng.next_below(len(spec.impulses))
        for cid, _ in node.children:
            if fired:
                walk(cid, used + 1, node.time + spec.delta)
            else:
                walk(cid, used, gate)

    walk(tree.root_id, 0, start_time)
    return fm


def random_strategy(rng, tree, spec, n_max, fire_p=0.35, start_time=0):
    fm = random_firing_map(rng, tree, spec, n_max, fire_p=fire_p,
                           start_time=start_time)
    return oracle.firing_map_to_strategy(tree, fm)
