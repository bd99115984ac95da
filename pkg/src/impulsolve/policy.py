"""Run stage strategies along scenario paths and price them.

A strategy is a list of stages; stage s maps node ids to impulse indices.
On a path, stage s fires at the first of its nodes the path visits, no
earlier than delta steps after stage s-1 fired (violations raise
InadmissibleStrategyError).  A fired impulse executes delta steps later:
the state shift starts at the execution time, the discounted cost is
charged then.  Impulses whose execution lands beyond the horizon never
execute; they cost nothing unless strict_horizon_charging is set, which
charges them anyway (the pessimistic accounting variant).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InadmissibleStrategyError
from .fields import Strategy
from .problem import ProblemSpec, eval_expr
from .scenario import PathSample, ScenarioTree
from . import _backend

import numpy as np


@dataclass(frozen=True)
class ImpulseEvent:
    stage: int
    node_id: str
    time: int
    impulse: int
    execution_time: int
    executed: bool
    cost: float


@dataclass
class ControlledPath:
    node_ids: list
    probability: float
    events: list = field(default_factory=list)
    running_payoff: float = 0.0
    impulse_cost: float = 0.0

    @property
    def total(self) -> float:
        return self.running_payoff - self.impulse_cost


def _resolve_path(tree: ScenarioTree, path):
    if isinstance(path, PathSample):
        return list(path.node_ids)
    if isinstance(path, str):
        ids = []
        nid = path
        while nid is not None:
            ids.append(nid)
            nid = tree.node(nid).parent
        ids.reverse()
        return ids
    ids = list(path)
    for prev, nxt in zip(ids, ids[1:]):
        if nxt not in (c for c, _ in tree.node(prev).children):
            raise ValueError(f"{nxt!r} is not a child of {prev!r}")
    return ids


def apply_strategy_path(tree: ScenarioTree, spec: ProblemSpec, strategy: Strategy,
                        path, start_time: int = 0,
                        strict_horizon_charging: bool = False) -> ControlledPath:
    """Simulate one path under a strategy; returns payoffs, costs, events."""
    ids = _resolve_path(tree, path)
    prob = 1.0
    for prev, nxt in zip(ids, ids[1:]):
        for cid, p in tree.node(prev).children:
            if cid == nxt:
                prob *= p
                break
    horizon = tree.depth
    shift = (0.0,) * spec.dim
    pending = []  # (execution_time, impulse index), time-ordered
    out = ControlledPath(node_ids=ids, probability=prob)
    stage = 0
    blocked_until = 0
    for nid in ids:
        node = tree.node(nid)
        t = node.time
        while pending and pending[0][0] <= t:
            _, imp = pending.pop(0)
            beta = spec.impulses[imp]
            shift = tuple(shift[d] + beta[d] for d in range(spec.dim))
        if stage < strategy.n_stages and nid in strategy.stages[stage].stops:
            if t < blocked_until:
                raise InadmissibleStrategyError(
                    f"stage {stage} fires at {nid!r} (time {t}) before the "
                    f"previous execution delay elapses at time {blocked_until}")
            imp = strategy.stages[stage].stops[nid]
            if not 0 <= imp < len(spec.impulses):
                raise InadmissibleStrategyError(
                    f"stage {stage} at {nid!r} names impulse {imp}, "
                    f"have {len(spec.impulses)}")
            exec_t = t + spec.delta
            executed = exec_t <= horizon
            charged = executed or strict_horizon_charging
            cost = math.exp(-spec.theta * exec_t) * spec.psi[imp] if charged else 0.0
            out.events.append(ImpulseEvent(
                stage=stage, node_id=nid, time=t, impulse=imp,
                execution_time=exec_t, executed=executed, cost=cost))
            out.impulse_cost += cost
            if executed:
                pending.append((exec_t, imp))
            stage += 1
            blocked_until = exec_t
        if t >= start_time:
            x = tuple(node.state[d] + shift[d] for d in range(spec.dim))
            out.running_payoff += math.exp(-spec.theta * t) * eval_expr(spec.g.expr, x)
    return out


def evaluate_exact(tree: ScenarioTree, spec: ProblemSpec, strategy: Strategy,
                   start_time: int = 0,
                   strict_horizon_charging: bool = False) -> dict:
    """Price a strategy by full path enumeration.

    Expected-value mode returns the objective E[payoffs - costs] with its
    breakdown; exponential mode returns E[exp(rho * total)] and the
    certainty equivalent log(value) / rho, alongside the same breakdown.
    """
    value = payoff = cost = expected_total = 0.0
    rho = spec.rho if spec.mode == "risk_sensitive" else None
    for sample in tree.paths():
        cp = apply_strategy_path(tree, spec, strategy, sample,
                                 start_time=start_time,
                                 strict_horizon_charging=strict_horizon_charging)
        p = sample.probability
        payoff += p * cp.running_payoff
        cost += p * cp.impulse_cost
        expected_total += p * cp.total
        if rho is None:
            value += p * cp.total
        else:
            value += p * math.exp(rho * cp.total)
    result = {
        "mode": spec.mode,
        "value": value,
        "breakdown": {"running": payoff, "impulse": cost},
    }
    if rho is not None:
        result["expected_total"] = expected_total
        result["rho"] = rho
        result["certainty_equivalent"] = math.log(value) / rho
    return result


def evaluate_monte_carlo(tree: ScenarioTree, spec: ProblemSpec, strategy: Strategy,
                         n_samples: int, seed: int = 0, start_time: int = 0,
                         strict_horizon_charging: bool = False) -> dict:
    """Price a strategy from sampled paths.

    Sampling draws whole root-to-leaf paths with the counter-mode
    generator, so the estimate is a weighted mean over leaves: exact
    reproduction needs only the per-leaf totals plus the leaf visit
    counts, and the same seed gives the same counts on every backend.
    On a deterministic tree (one path) the estimate is exact.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    arrays = tree.arrays
    counts = np.zeros(arrays.n, dtype=np.int64)
    # the draw stream works mod 2^64, so canonicalize the seed for the kernels
    seed_u64 = seed & ((1 << 64) - 1)
    _backend.sample_leaf_counts(arrays.ptr, arrays.child, arrays.thr,
                                arrays.root, tree.depth, seed_u64, n_samples, counts)
    rho = spec.rho if spec.mode == "risk_sensitive" else None
    leaf_ids = [arrays.ids[v] for v in arrays.leaf_indices]
    comps = []  # (mode-transformed total, running part, impulse part)
    for lid in leaf_ids:
        cp = apply_strategy_path(tree, spec, strategy, lid,
                                 start_time=start_time,
                                 strict_horizon_charging=strict_horizon_charging)
        tot = cp.total if rho is None else math.exp(rho * cp.total)
        comps.append((tot, cp.running_payoff, cp.impulse_cost))
    est = est_running = est_impulse = 0.0
    for v, (tot, run, chg) in zip(arrays.leaf_indices, comps):
        c = int(counts[v])
        if c:
            w = c / n_samples
            est += w * tot
            est_running += w * run
            est_impulse += w * chg
    if n_samples > 1:
        ssq = 0.0
        for v, (tot, _, _) in zip(arrays.leaf_indices, comps):
            c = int(counts[v])
            if c:
                d = tot - est
                ssq += c * d * d
        stderr = math.sqrt(ssq / (n_samples - 1)) / math.sqrt(n_samples)
    else:
        stderr = float("inf")
    result = {
        "mode": spec.mode,
        "value": est,
        "stderr": stderr,
        "breakdown": {"running": est_running, "impulse": est_impulse},
        "n_samples": n_samples,
        "seed": seed,
    }
    if rho is not None:
        result["rho"] = rho
    return result


def certainty_equivalent(tree: ScenarioTree, spec: ProblemSpec, strategy: Strategy,
                         rho_list, start_time: int = 0,
                         strict_horizon_charging: bool = False) -> list:
    """Certainty equivalents of one strategy across risk parameters.

    For each rho returns {rho, gamma, mean, variance, residual} where
    gamma = log E[exp(rho total)] / rho and residual measures the gap to
    the two-term expansion mean + (rho/2) variance.  The path totals are
    enumerated once and reused.
    """
    rows = []
    totals = []
    for sample in tree.paths():
        cp = apply_strategy_path(tree, spec, strategy, sample,
                                 start_time=start_time,
                                 strict_horizon_charging=strict_horizon_charging)
        totals.append((sample.probability, cp.total))
    mean = sum(p * c for p, c in totals)
    var = sum(p * (c - mean) * (c - mean) for p, c in totals)
    for rho in rho_list:
        rho = float(rho)
        if rho == 0.0:
            raise ValueError("rho must be nonzero")
        util = sum(p * math.exp(rho * c) for p, c in totals)
        gamma = math.log(util) / rho
        rows.append({
            "rho": rho,
            "gamma": gamma,
            "mean": mean,
            "variance": var,
            "residual": abs(gamma - mean - 0.5 * rho * var),
        })
    return rows
