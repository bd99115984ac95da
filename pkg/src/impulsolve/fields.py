"""Value fields over shift regimes, strategies, and solve reports.

A regime key is (node, cumulative shift, impulses used so far).  Values are
stored per regime because applying an impulse moves every later state by the
impulse vector, so the same tree node carries one value per reachable shift.
For times at or after the start time the value depends on the shift only,
which is why no start-time coordinate appears in the key.

A strategy is a list of stages; stage p maps stopping nodes to the impulse
index fired there.  Nodes suffice (no shift coordinate in the document):
the root-to-node path is unique on a tree, so a node determines the whole
impulse history of any strategy that reaches it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional

from .errors import StrategyFormatError


class RegimeKey(NamedTuple):
    node: str
    shift: tuple
    count: int


class ValueField:
    """Map from RegimeKey to value, backed by per-regime node arrays.

    `n` is the iterate index the field belongs to (impulse budget of the
    scheme that produced it); for a limit field it is the saturating cap.
    `kind` records which of the two: "iterate" fields hold budget n at
    every regime, "limit" fields pair shell s with budget n - s (the
    stationary pairing the extracted strategy walks).  `start_time` is the
    payoff activation time the field was computed with; bound checkers
    need it to rebuild the per-node payoff terms.
    """

    def __init__(self, n: int, arrays, entries, kind: str = "iterate",
                 start_time: int = 0):
        # entries: list of (shift_tuple, count, value_array, obstacle_array|None)
        if kind not in ("iterate", "limit"):
            raise ValueError(f"unknown field kind {kind!r}")
        self.n = n
        self.kind = kind
        self.start_time = start_time
        self._arrays = arrays
        self._entries = entries
        self._lookup = {(shift, count): k for k, (shift, count, _, _) in enumerate(entries)}

    def value(self, node_id: str, shift: tuple = None, count: int = 0) -> float:
        if shift is None:
            shift = (0.0,) * self._arrays.state.shape[1]
        k = self._lookup[(tuple(shift), count)]
        return float(self._entries[k][2][self._arrays.index[node_id]])

    @property
    def root_value(self) -> float:
        root_shift = (0.0,) * self._arrays.state.shape[1]
        k = self._lookup[(root_shift, 0)]
        return float(self._entries[k][2][self._arrays.root])

    def regimes(self) -> list:
        return [(shift, count) for shift, count, _, _ in self._entries]

    def entry_arrays(self):
        """Yield (shift, count, value_array, obstacle_array_or_None) per regime."""
        for shift, count, values, obst in self._entries:
            yield shift, count, values, obst

    @property
    def node_arrays(self):
        """The shared per-tree array bundle (times, indices, leaf mask)."""
        return self._arrays

    def items(self) -> Iterator:
        """Yield (RegimeKey, value) over every node and regime."""
        for shift, count, values, _ in self._entries:
            for nid, i in self._arrays.index.items():
                yield RegimeKey(nid, shift, count), float(values[i])

    def __len__(self):
        return len(self._entries) * self._arrays.n


# ---------------------------------------------------------------------------
# strategies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Stage:
    """Stopping rule of one intervention: node -> impulse index."""

    stops: dict

    def to_dict(self) -> dict:
        return {"stops": [{"node": nid, "impulse_index": i}
                          for nid, i in self.stops.items()]}


@dataclass(frozen=True)
class Strategy:
    stages: tuple

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    def to_dict(self) -> dict:
        return {"stages": [stage.to_dict() for stage in self.stages]}

    @classmethod
    def from_dict(cls, doc) -> "Strategy":
        if not isinstance(doc, dict) or "stages" not in doc:
            raise StrategyFormatError("strategy document must contain stages")
        stages = []
        for raw in doc["stages"]:
            if not isinstance(raw, dict) or "stops" not in raw:
                raise StrategyFormatError("each stage must contain stops")
            stops = {}
            for stop in raw["stops"]:
                if "node" not in stop or "impulse_index" not in stop:
                    raise StrategyFormatError("each stop needs node and impulse_index")
                stops[stop["node"]] = int(stop["impulse_index"])
            stages.append(Stage(stops=stops))
        return cls(stages=tuple(stages))


EMPTY_STRATEGY = Strategy(stages=())


def load_strategy(path: str) -> Strategy:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise StrategyFormatError(f"{path}: {exc}") from exc
    return Strategy.from_dict(doc)


def save_strategy(strategy: Strategy, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(strategy.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class SolveReport:
    root_value: float
    truncation_bound: float
    iterations: list = field(default_factory=list)
    bound_checks: list = field(default_factory=list)
    mode: str = "risk_neutral"
    rho: Optional[float] = None
    certainty_equivalent: Optional[float] = None
    strategy: Optional[Strategy] = None

    def to_dict(self) -> dict:
        doc = {
            "root_value": self.root_value,
            "truncation_bound": self.truncation_bound,
            "iterations": self.iterations,
            "bound_checks": self.bound_checks,
            "mode": self.mode,
        }
        if self.rho is not None:
            doc["rho"] = self.rho
        if self.certainty_equivalent is not None:
            doc["certainty_equivalent"] = self.certainty_equivalent
        if self.strategy is not None:
            doc["strategy"] = self.strategy.to_dict()
        return doc


def report_json(doc: dict) -> str:
    """Canonical serialization: sorted keys, fixed separators, newline end.

    Reports must be byte-identical across repeated runs; float repr in
    Python is shortest-round-trip and deterministic, so this is enough.
    """
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
