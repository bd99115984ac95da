"""Problem documents: payoff grammar, intervention costs, discounting.

A problem document is JSON of the form

    {"theta": 0.693, "delta": 1, "impulses": [[1.0]], "psi": [0.1],
     "g": {"expr": ..., "bound": 1.0}, "horizon": 3,
     "mode": {"type": "risk_neutral"}}

The running payoff g is written in a tiny closed expression grammar so that
its sup-norm bound can be certified by interval arithmetic rather than
trusted: a document is rejected unless the expression provably stays inside
[-bound, bound] (a top-level clamp always qualifies).

Grammar (JSON encodings):
    number                       constant
    ["coord", i]                 i-th state coordinate
    ["+", a, b]  ["-", a, b]  ["*", a, b]
    ["min", a, b]  ["max", a, b]
    ["clamp", a, lo, hi]         lo, hi literal numbers
    ["step", a, c]               1.0 if a >= c else 0.0, c a literal number
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

from .errors import SpecFormatError, SpecValidationError

_INF = float("inf")

#: a priori bound on risk-sensitive exponents; larger instances are rejected
#: before any exp() is evaluated.
EXP_GUARD = 700.0


# ---------------------------------------------------------------------------
# expression grammar
# ---------------------------------------------------------------------------

def eval_expr(expr, x) -> float:
    """Evaluate an expression at state vector x. Total on finite vectors."""
    if isinstance(expr, (int, float)) and not isinstance(expr, bool):
        return float(expr)
    if not isinstance(expr, list) or not expr:
        raise SpecFormatError(f"bad expression node: {expr!r}")
    op = expr[0]
    if op == "coord":
        i = expr[1]
        if not 0 <= i < len(x):
            raise SpecFormatError(f"coord {i} out of range for dim {len(x)}")
        return float(x[i])
    if op == "+":
        return eval_expr(expr[1], x) + eval_expr(expr[2], x)
    if op == "-":
        return eval_expr(expr[1], x) - eval_expr(expr[2], x)
    if op == "*":
        return eval_expr(expr[1], x) * eval_expr(expr[2], x)
    if op == "min":
        return min(eval_expr(expr[1], x), eval_expr(expr[2], x))
    if op == "max":
        return max(eval_expr(expr[1], x), eval_expr(expr[2], x))
    if op == "clamp":
        v = eval_expr(expr[1], x)
        lo, hi = float(expr[2]), float(expr[3])
        return min(max(v, lo), hi)
    if op == "step":
        return 1.0 if eval_expr(expr[1], x) >= float(expr[2]) else 0.0
    raise SpecFormatError(f"unknown operator {op!r}")


def _mul_interval(a, b):
    lo_a, hi_a = a
    lo_b, hi_b = b
    candidates = []
    for u in (lo_a, hi_a):
        for v in (lo_b, hi_b):
            p = u * v
            if math.isnan(p):  # 0 * inf: treat as unbounded, conservatively
                return (-_INF, _INF)
            candidates.append(p)
    return (min(candidates), max(candidates))


def expr_interval(expr):
    """Conservative range of an expression over all finite states."""
    if isinstance(expr, (int, float)) and not isinstance(expr, bool):
        return (float(expr), float(expr))
    if not isinstance(expr, list) or not expr:
        raise SpecFormatError(f"bad expression node: {expr!r}")
    op = expr[0]
    if op == "coord":
        return (-_INF, _INF)
    if op == "+":
        a, b = expr_interval(expr[1]), expr_interval(expr[2])
        return (a[0] + b[0], a[1] + b[1])
    if op == "-":
        a, b = expr_interval(expr[1]), expr_interval(expr[2])
        return (a[0] - b[1], a[1] - b[0])
    if op == "*":
        return _mul_interval(expr_interval(expr[1]), expr_interval(expr[2]))
    if op == "min":
        a, b = expr_interval(expr[1]), expr_interval(expr[2])
        return (min(a[0], b[0]), min(a[1], b[1]))
    if op == "max":
        a, b = expr_interval(expr[1]), expr_interval(expr[2])
        return (max(a[0], b[0]), max(a[1], b[1]))
    if op == "clamp":
        lo, hi = float(expr[2]), float(expr[3])
        a = expr_interval(expr[1])
        return (min(max(a[0], lo), hi), min(max(a[1], lo), hi))
    if op == "step":
        expr_interval(expr[1])  # still validate the operand
        return (0.0, 1.0)
    raise SpecFormatError(f"unknown operator {op!r}")


@dataclass(frozen=True)
class BoundedFunction:
    """Expression with a declared, certified sup-norm bound."""

    expr: object
    bound: float

    def __call__(self, x) -> float:
        return eval_expr(self.expr, x)

    def interval(self):
        return expr_interval(self.expr)

    def validate(self):
        if not math.isfinite(self.bound) or self.bound < 0:
            raise SpecValidationError(f"bound must be finite and >= 0, got {self.bound}")
        lo, hi = self.interval()
        if lo < -self.bound or hi > self.bound:
            raise SpecValidationError(
                f"expression range [{lo:g}, {hi:g}] not certified within "
                f"[-{self.bound:g}, {self.bound:g}]")

    @classmethod
    def from_dict(cls, doc) -> "BoundedFunction":
        if not isinstance(doc, dict) or "expr" not in doc or "bound" not in doc:
            raise SpecFormatError("g must be an object with expr and bound")
        return cls(expr=doc["expr"], bound=float(doc["bound"]))

    def to_dict(self) -> dict:
        return {"expr": self.expr, "bound": self.bound}


# ---------------------------------------------------------------------------
# problem spec
# ---------------------------------------------------------------------------

MODE_RISK_NEUTRAL = "risk_neutral"
MODE_RISK_SENSITIVE = "risk_sensitive"


@dataclass(frozen=True)
class ProblemSpec:
    theta: float
    delta: int
    impulses: tuple  # of impulse vectors (tuples of float)
    psi: tuple       # intervention cost per impulse, aligned with impulses
    g: BoundedFunction
    horizon: int
    mode: str = MODE_RISK_NEUTRAL
    rho: Optional[float] = None

    # -- derived quantities -------------------------------------------------

    @property
    def dim(self) -> int:
        return len(self.impulses[0])

    @property
    def g_norm(self) -> float:
        return self.g.bound

    @property
    def psi_norm(self) -> float:
        return max(abs(p) for p in self.psi)

    @property
    def c_theta(self) -> float:
        """Geometric tail constant (1 - e^{-theta})^{-1}."""
        return 1.0 / -math.expm1(-self.theta)

    @property
    def limit_constant(self) -> float:
        """Decay constant C of the limit value: |value at time k| <= C e^{-theta k}."""
        gap = -math.expm1(-self.theta * self.delta)  # 1 - e^{-theta delta}
        return self.c_theta * self.g_norm + math.exp(-self.delta * self.theta) / gap * self.psi_norm

    def truncation_bound(self, horizon: Optional[int] = None) -> float:
        T = self.horizon if horizon is None else horizon
        return self.limit_constant * math.exp(-self.theta * T)

    def saturating_cap(self) -> int:
        """Impulse budget beyond which the horizon cannot fit more impulses."""
        return math.ceil(self.horizon / self.delta) + 1

    def discounts(self, upto: int):
        """[e^{-theta t} for t in 0..upto] as a list."""
        return [math.exp(-self.theta * t) for t in range(upto + 1)]

    def rs_exponent_bound(self) -> float:
        """A priori bound on risk-sensitive exponent magnitudes."""
        rho = 1.0 if self.rho is None else abs(self.rho)
        gap = -math.expm1(-self.theta * self.delta)
        return rho * (self.c_theta * self.g_norm + self.psi_norm / gap)

    # -- validation ---------------------------------------------------------

    def validate(self):
        if not (math.isfinite(self.theta) and self.theta > 0):
            raise SpecValidationError(f"theta must be positive and finite, got {self.theta}")
        if not isinstance(self.delta, int) or self.delta < 1:
            raise SpecValidationError(f"delta must be an integer >= 1, got {self.delta}")
        if not isinstance(self.horizon, int) or self.horizon < 1:
            raise SpecValidationError(f"horizon must be an integer >= 1, got {self.horizon}")
        if not self.impulses:
            raise SpecValidationError("impulse set must be non-empty")
        dim = len(self.impulses[0])
        if dim < 1:
            raise SpecValidationError("impulse vectors must have dimension >= 1")
        for beta in self.impulses:
            if len(beta) != dim:
                raise SpecValidationError("impulse vectors must share one dimension")
            if any(not math.isfinite(b) for b in beta):
                raise SpecValidationError("impulse vectors must be finite")
        if len(self.psi) != len(self.impulses):
            raise SpecValidationError(
                f"psi has {len(self.psi)} entries for {len(self.impulses)} impulses")
        if any(not math.isfinite(p) for p in self.psi):
            raise SpecValidationError("psi entries must be finite")
        self.g.validate()
        if self.mode == MODE_RISK_NEUTRAL:
            pass
        elif self.mode == MODE_RISK_SENSITIVE:
            if self.rho is None or not math.isfinite(self.rho) or self.rho == 0.0:
                raise SpecValidationError("risk_sensitive mode needs a finite nonzero rho")
        else:
            raise SpecValidationError(f"unknown mode {self.mode!r}")

    def validate_against_tree(self, tree):
        self.validate()
        if self.dim != tree.dim:
            raise SpecValidationError(
                f"impulse dimension {self.dim} does not match tree dimension {tree.dim}")
        if self.horizon != tree.depth:
            raise SpecValidationError(
                f"horizon {self.horizon} does not match tree depth {tree.depth}")


def problem_from_dict(doc: dict) -> ProblemSpec:
    if not isinstance(doc, dict):
        raise SpecFormatError("problem document must be a JSON object")
    for key in ("theta", "delta", "impulses", "psi", "g", "horizon", "mode"):
        if key not in doc:
            raise SpecFormatError(f"problem document missing field {key!r}")
    mode_doc = doc["mode"]
    if not isinstance(mode_doc, dict) or "type" not in mode_doc:
        raise SpecFormatError("mode must be an object with a type field")
    mode = mode_doc["type"]
    rho = mode_doc.get("rho")
    try:
        spec = ProblemSpec(
            theta=float(doc["theta"]),
            delta=int(doc["delta"]),
            impulses=tuple(tuple(float(b) for b in beta) for beta in doc["impulses"]),
            psi=tuple(float(p) for p in doc["psi"]),
            g=BoundedFunction.from_dict(doc["g"]),
            horizon=int(doc["horizon"]),
            mode=mode,
            rho=None if rho is None else float(rho),
        )
    except (TypeError, ValueError) as exc:
        raise SpecFormatError(f"malformed problem document: {exc}") from exc
    spec.validate()
    return spec


def problem_to_dict(spec: ProblemSpec) -> dict:
    mode = {"type": spec.mode}
    if spec.rho is not None:
        mode["rho"] = spec.rho
    return {
        "theta": spec.theta,
        "delta": spec.delta,
        "impulses": [list(beta) for beta in spec.impulses],
        "psi": list(spec.psi),
        "g": spec.g.to_dict(),
        "horizon": spec.horizon,
        "mode": mode,
    }


def load_problem(path: str) -> ProblemSpec:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SpecFormatError(f"{path}: {exc}") from exc
    return problem_from_dict(doc)


def save_problem(spec: ProblemSpec, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(spec), fh, indent=2, sort_keys=True)
        fh.write("\n")
