"""Smallest supermartingale dominating an obstacle process on a tree.

The envelope E of an obstacle L satisfies, node by node,

    E(v) = max( sum_children p * E(child), L(v) )

with E(leaf) = max(terminal_value, L(leaf)); the scalar terminal value stands
in for whatever lives beyond the horizon, and callers that need a per-path
tail fold it into the leaf entries of L instead.  Minimality holds because
the recursion makes E(v) the pointwise max of continuation and obstacle:
lowering any single value breaks one of the two constraints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .scenario import ScenarioTree

NEG_INF = float("-inf")

#: relative tolerance for envelope == obstacle tests
HIT_RTOL = 1e-9


@dataclass
class AdaptedProcess:
    """Per-node values plus a scalar continuation value beyond the horizon."""

    values: dict
    terminal_value: float = NEG_INF

    def __getitem__(self, node_id):
        return self.values[node_id]


@dataclass(frozen=True)
class StoppingRegion:
    """A set of nodes meant to contain at most one node per root-leaf path."""

    node_ids: frozenset

    def __contains__(self, node_id):
        return node_id in self.node_ids

    def __len__(self):
        return len(self.node_ids)

    def is_antichain(self, tree: ScenarioTree) -> bool:
        hits = self.node_ids
        for sample in tree.paths():
            if sum(1 for nid in sample.node_ids if nid in hits) > 1:
                return False
        return True


def _to_array(tree: ScenarioTree, process) -> np.ndarray:
    """Node values of an AdaptedProcess (or plain mapping) in array order."""
    values = process.values if isinstance(process, AdaptedProcess) else process
    arrays = tree.arrays
    out = np.empty(arrays.n, dtype=np.float64)
    for nid, i in arrays.index.items():
        out[i] = values[nid]
    return out


def backward_envelope(tree: ScenarioTree, obstacle: AdaptedProcess) -> AdaptedProcess:
    """Envelope of `obstacle`; requires a value for every node."""
    arrays = tree.arrays
    obst = _to_array(tree, obstacle)
    out = np.empty(arrays.n, dtype=np.float64)
    zeros = np.zeros(arrays.n, dtype=np.float64)
    _backend.sweep_max_add(arrays.ptr, arrays.child, arrays.prob,
                           zeros, obst, obstacle.terminal_value, out)
    values = {nid: float(out[i]) for nid, i in arrays.index.items()}
    return AdaptedProcess(values=values, terminal_value=obstacle.terminal_value)


def is_hit(envelope_value: float, obstacle_value: float) -> bool:
    """Envelope-meets-obstacle test at the documented relative tolerance."""
    diff = envelope_value - obstacle_value
    if diff != diff:  # both infinite: no usable comparison, treat as no hit
        return False
    return abs(diff) <= HIT_RTOL * (1.0 + abs(envelope_value))


def hitting_region(tree: ScenarioTree, envelope: AdaptedProcess,
                   obstacle: AdaptedProcess, from_time: int = 0) -> StoppingRegion:
    """First node per path, at time >= from_time, where envelope == obstacle.

    Paths that never touch the obstacle contribute no node; the region is an
    antichain by construction since the walk stops descending at a hit.
    """
    hits = []
    stack = [tree.root_id]
    while stack:
        nid = stack.pop()
        node = tree.nodes[nid]
        if node.time >= from_time and is_hit(envelope.values[nid], obstacle.values[nid]):
            hits.append(nid)
            continue
        for child_id, _ in node.children:
            stack.append(child_id)
    return StoppingRegion(node_ids=frozenset(hits))
