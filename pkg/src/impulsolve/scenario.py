"""Scenario trees: the finite filtration all solvers run on.

A tree document is JSON of the form

    {"dim": d, "depth": T, "nodes": [
        {"id": "n0", "time": 0, "state": [...], "children": [{"id": "n1", "p": 0.5}, ...]},
        {"id": "n1", "time": 1, "state": [...], "parent": "n0", "children": [...]},
        ...]}

Non-recombining by construction: every non-root node has exactly one parent,
times increase by 1 along edges, child probabilities are in (0, 1] and sum to
1 within 1e-12, and every leaf sits at depth T.  Values are stored per node
because the processes the solvers handle are path-dependent.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .errors import BudgetExceededError, TreeFormatError, TreeValidationError

DEFAULT_NODE_CAP = 10**6
PROB_SUM_TOL = 1e-12


def node_cap(default: int = DEFAULT_NODE_CAP) -> int:
    """Structural node cap; IMPULSOLVE_NODE_CAP overrides all guard caps."""
    raw = os.environ.get("IMPULSOLVE_NODE_CAP")
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise BudgetExceededError(f"IMPULSOLVE_NODE_CAP is not an integer: {raw!r}") from exc


@dataclass(frozen=True)
class Node:
    id: str
    time: int
    state: tuple
    parent: Optional[str]
    children: tuple  # of (child_id, probability)


@dataclass(frozen=True)
class PathSample:
    """A root-to-leaf path: node ids in time order plus its probability."""

    node_ids: tuple
    probability: float


class ScenarioTree:
    """Validated scenario tree with lazily built dense arrays."""

    def __init__(self, dim: int, depth: int, nodes: dict):
        self.dim = dim
        self.depth = depth
        self.nodes = nodes  # id -> Node, in document order
        self.root_id = next(iter(nodes))
        self._arrays = None

    def __len__(self):
        return len(self.nodes)

    def node(self, node_id: str) -> Node:
        return self.nodes[node_id]

    def children(self, node_id: str) -> tuple:
        return self.nodes[node_id].children

    def leaves(self) -> list:
        return [n.id for n in self.nodes.values() if not n.children]

    def nodes_at_time(self, t: int) -> list:
        return [n.id for n in self.nodes.values() if n.time == t]

    def paths(self) -> Iterator[PathSample]:
        """Root-to-leaf paths in depth-first child order."""

        def walk(node_id, trail, prob):
            node = self.nodes[node_id]
            trail = trail + (node_id,)
            if not node.children:
                yield PathSample(trail, prob)
                return
            for child_id, p in node.children:
                yield from walk(child_id, trail, prob * p)

        yield from walk(self.root_id, (), 1.0)

    @property
    def arrays(self) -> "TreeArrays":
        if self._arrays is None:
            self._arrays = TreeArrays(self)
        return self._arrays


class TreeArrays:
    """Dense index view of a tree, sorted by (time, document order).

    Index order ascending in time is an invariant the kernels rely on: a
    backward sweep is a plain reverse iteration.  `thr` holds the running
    partial sums of child probabilities in child order; the Monte Carlo
    sampler compares uniforms against these exact values on both backends.
    """

    def __init__(self, tree: ScenarioTree):
        doc_pos = {nid: i for i, nid in enumerate(tree.nodes)}
        ids = sorted(tree.nodes, key=lambda nid: (tree.nodes[nid].time, doc_pos[nid]))
        self.ids = ids
        self.index = {nid: i for i, nid in enumerate(ids)}
        n = len(ids)
        self.n = n
        self.time = np.empty(n, dtype=np.int64)
        self.state = np.empty((n, tree.dim), dtype=np.float64)
        self.parent = np.full(n, -1, dtype=np.int64)
        counts = np.empty(n, dtype=np.int64)
        for i, nid in enumerate(ids):
            node = tree.nodes[nid]
            self.time[i] = node.time
            self.state[i] = node.state
            counts[i] = len(node.children)
        self.ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=self.ptr[1:])
        n_edges = int(self.ptr[-1])
        self.child = np.empty(n_edges, dtype=np.int64)
        self.prob = np.empty(n_edges, dtype=np.float64)
        self.thr = np.empty(n_edges, dtype=np.float64)
        for i, nid in enumerate(ids):
            node = tree.nodes[nid]
            e = int(self.ptr[i])
            acc = 0.0
            for child_id, p in node.children:
                ci = self.index[child_id]
                self.parent[ci] = i
                self.child[e] = ci
                self.prob[e] = p
                acc += p
                self.thr[e] = acc
                e += 1
        self.is_leaf = self.ptr[:-1] == self.ptr[1:]
        self.leaf_indices = np.nonzero(self.is_leaf)[0]
        self.root = self.index[tree.root_id]
        self.depth = tree.depth

    def edges(self, i: int) -> range:
        return range(int(self.ptr[i]), int(self.ptr[i + 1]))


# ---------------------------------------------------------------------------
# document parsing and validation
# ---------------------------------------------------------------------------

def validate_tree(doc: dict) -> list:
    """Check a tree document against the structural invariants.

    Returns a list of human-readable violation strings; an empty list means
    the document is valid.  Parsing problems (missing/bad-typed fields)
    raise TreeFormatError instead of being reported as violations.
    """
    if not isinstance(doc, dict):
        raise TreeFormatError("tree document must be a JSON object")
    for key in ("dim", "depth", "nodes"):
        if key not in doc:
            raise TreeFormatError(f"tree document missing field {key!r}")
    dim, depth, raw_nodes = doc["dim"], doc["depth"], doc["nodes"]
    if not isinstance(dim, int) or isinstance(dim, bool):
        raise TreeFormatError("dim must be an integer")
    if not isinstance(depth, int) or isinstance(depth, bool):
        raise TreeFormatError("depth must be an integer")
    if not isinstance(raw_nodes, list):
        raise TreeFormatError("nodes must be a list")

    violations = []
    if dim < 1:
        violations.append("dim must be >= 1")
    if depth < 1:
        violations.append("depth must be >= 1")

    seen = {}
    for pos, entry in enumerate(raw_nodes):
        if not isinstance(entry, dict) or "id" not in entry:
            raise TreeFormatError(f"node at position {pos} has no id")
        nid = entry["id"]
        if not isinstance(nid, str):
            raise TreeFormatError(f"node at position {pos}: id must be a string")
        for key in ("time", "state"):
            if key not in entry:
                raise TreeFormatError(f"node {nid}: missing field {key!r}")
        if nid in seen:
            violations.append(f"node {nid}: duplicate id")
            continue
        seen[nid] = entry

    roots = []
    for nid, entry in seen.items():
        t = entry["time"]
        if not isinstance(t, int) or isinstance(t, bool):
            raise TreeFormatError(f"node {nid}: time must be an integer")
        state = entry["state"]
        if not isinstance(state, list):
            raise TreeFormatError(f"node {nid}: state must be a list")
        if dim >= 1 and len(state) != dim:
            violations.append(f"node {nid}: state has length {len(state)}, expected {dim}")
        for x in state:
            if not isinstance(x, (int, float)) or isinstance(x, bool):
                raise TreeFormatError(f"node {nid}: state entries must be numbers")
            if not math.isfinite(x):
                violations.append(f"node {nid}: state entries must be finite")
                break
        if "parent" not in entry:
            roots.append(nid)
            if t != 0:
                violations.append(f"node {nid}: root must sit at time 0")
        else:
            parent = entry["parent"]
            if parent not in seen:
                violations.append(f"node {nid}: parent {parent!r} does not exist")

        children = entry.get("children", [])
        if not isinstance(children, list):
            raise TreeFormatError(f"node {nid}: children must be a list")
        total = 0.0
        for c in children:
            if not isinstance(c, dict) or "id" not in c or "p" not in c:
                raise TreeFormatError(f"node {nid}: child entries need id and p")
            cid, p = c["id"], c["p"]
            if not isinstance(p, (int, float)) or isinstance(p, bool):
                raise TreeFormatError(f"node {nid}: child probability must be a number")
            if cid not in seen:
                violations.append(f"node {nid}: child {cid!r} does not exist")
                continue
            centry = seen[cid]
            if centry.get("parent") != nid:
                violations.append(f"node {cid}: parent field does not match child list of {nid}")
            if centry["time"] != t + 1:
                violations.append(f"node {cid}: time must increment by 1")
            if not (0.0 < p <= 1.0) or not math.isfinite(p):
                violations.append(f"node {nid}: child probability {p:g} outside (0, 1]")
            total += p
        if children and abs(total - 1.0) > PROB_SUM_TOL:
            violations.append(f"node {nid}: probabilities sum {total:g}")

    if len(roots) != 1:
        violations.append(f"tree must have exactly one root, found {len(roots)}")
        return violations

    # reachability and leaf depth
    reached = set()
    stack = [roots[0]]
    while stack:
        nid = stack.pop()
        if nid in reached:
            violations.append(f"node {nid}: reached twice (not a tree)")
            continue
        reached.add(nid)
        for c in seen[nid].get("children", []):
            if c["id"] in seen:
                stack.append(c["id"])
    for nid, entry in seen.items():
        if nid not in reached:
            violations.append(f"node {nid}: unreachable from root")
        elif not entry.get("children") and entry["time"] != depth:
            violations.append(f"node {nid}: leaf at time {entry['time']}, expected depth {depth}")
    return violations


def tree_from_dict(doc: dict, validate: bool = True) -> ScenarioTree:
    if validate:
        violations = validate_tree(doc)
        if violations:
            raise TreeValidationError(violations)
    nodes = {}
    for entry in doc["nodes"]:
        nodes[entry["id"]] = Node(
            id=entry["id"],
            time=entry["time"],
            state=tuple(float(x) for x in entry["state"]),
            parent=entry.get("parent"),
            children=tuple((c["id"], float(c["p"])) for c in entry.get("children", [])),
        )
    return ScenarioTree(dim=doc["dim"], depth=doc["depth"], nodes=nodes)


def tree_to_dict(tree: ScenarioTree) -> dict:
    nodes = []
    for node in tree.nodes.values():
        entry = {"id": node.id, "time": node.time, "state": list(node.state)}
        if node.parent is not None:
            entry["parent"] = node.parent
        entry["children"] = [{"id": cid, "p": p} for cid, p in node.children]
        nodes.append(entry)
    return {"dim": tree.dim, "depth": tree.depth, "nodes": nodes}


def load_tree(path: str) -> ScenarioTree:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise TreeFormatError(f"{path}: {exc}") from exc
    return tree_from_dict(doc)


def save_tree(tree: ScenarioTree, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(tree_to_dict(tree), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def generate_walk_tree(branching: int, depth: int, increments, seed: int = 0) -> ScenarioTree:
    """Non-recombining walk tree: every node branches the same way.

    `increments` is a list of (state_delta, probability) pairs, one per child
    slot; child states are parent state plus the slot's delta.  `seed` is
    reserved for optional state jitter and currently unused (zero jitter),
    so identical arguments always produce an identical document.
    """
    if branching < 1:
        raise TreeFormatError("branching must be >= 1")
    if depth < 1:
        raise TreeFormatError("depth must be >= 1")
    if len(increments) != branching:
        raise TreeFormatError(
            f"need {branching} increment entries, got {len(increments)}")
    deltas = []
    probs = []
    for delta, p in increments:
        deltas.append(tuple(float(x) for x in delta))
        probs.append(float(p))
    dim = len(deltas[0])
    if any(len(d) != dim for d in deltas):
        raise TreeFormatError("increment vectors must share one dimension")
    if abs(sum(probs) - 1.0) > PROB_SUM_TOL:
        raise TreeFormatError(f"increment probabilities sum {sum(probs):g}")
    if any(not (0.0 < p <= 1.0) for p in probs):
        raise TreeFormatError("increment probabilities must lie in (0, 1]")

    if branching == 1:
        total = depth + 1
    else:
        total = (branching ** (depth + 1) - 1) // (branching - 1)
    cap = node_cap()
    if total > cap:
        raise BudgetExceededError(f"walk tree needs {total} nodes, cap is {cap}")

    nodes = {}
    root = Node(id="n0", time=0, state=(0.0,) * dim, parent=None, children=())
    nodes["n0"] = root
    frontier = ["n0"]
    next_id = 1
    for t in range(depth):
        new_frontier = []
        for nid in frontier:
            parent = nodes[nid]
            children = []
            for slot in range(branching):
                cid = f"n{next_id}"
                next_id += 1
                state = tuple(parent.state[d] + deltas[slot][d] for d in range(dim))
                nodes[cid] = Node(id=cid, time=t + 1, state=state, parent=nid, children=())
                children.append((cid, probs[slot]))
                new_frontier.append(cid)
            nodes[nid] = Node(id=nid, time=parent.time, state=parent.state,
                              parent=parent.parent, children=tuple(children))
        frontier = new_frontier
    return ScenarioTree(dim=dim, depth=depth, nodes=nodes)
