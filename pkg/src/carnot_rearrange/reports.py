"""Structured pass/fail records for identities, inequalities and self-tests."""
from __future__ import annotations

import json
import math
from collections.abc import Iterable
from dataclasses import asdict, dataclass, field
from typing import Any


@dataclass
class VerificationReport:
    """One checked claim.

    ``kind`` selects the pass rule:

    * ``"identity"``: ``|lhs - rhs| <= tolerance * max(1, |rhs|)``
    * ``"relative"``: ``|lhs - rhs| <= tolerance * |rhs|`` (``0 == 0`` passes)
    * ``"inequality"``: ``lhs / (constant * rhs) <= 1 + tolerance``
    """

    claim_id: str
    lhs: float
    rhs: float
    constant: float = 1.0
    tolerance: float = 0.0
    kind: str = "inequality"
    meta: dict[str, Any] = field(default_factory=dict)
    ratio: float = field(init=False)
    passed: bool = field(init=False)

    def __post_init__(self):
        self.lhs = float(self.lhs)
        self.rhs = float(self.rhs)
        self.constant = float(self.constant)
        denom = self.constant * self.rhs
        if denom != 0.0:
            self.ratio = self.lhs / denom
        else:
            self.ratio = 1.0 if self.lhs == 0.0 else math.inf
        if self.kind == "identity":
            self.passed = abs(self.lhs - self.rhs) <= self.tolerance * max(1.0, abs(self.rhs))
        elif self.kind == "relative":
            self.passed = abs(self.lhs - self.rhs) <= self.tolerance * abs(self.rhs)
        elif self.kind == "inequality":
            self.passed = bool(self.ratio <= 1.0 + self.tolerance)
        else:
            raise ValueError(f"unknown report kind {self.kind!r}")

    @classmethod
    def bound(cls, claim_id, value, limit, **meta) -> VerificationReport:
        """``value <= limit`` with no slack (used for violation maxima)."""
        return cls(claim_id, value, limit, tolerance=0.0, kind="inequality", meta=meta)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["passed"] = bool(self.passed)
        return _jsonable(d)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"[{flag}] {self.claim_id}: lhs={self.lhs:.6g} rhs={self.rhs:.6g} "
                f"C={self.constant:.6g} ratio={self.ratio:.6g} tol={self.tolerance:g}")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        try:
            return _jsonable(obj.item())
        except (ValueError, AttributeError):
            return _jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def all_passed(reports: Iterable[VerificationReport]) -> bool:
    return all(r.passed for r in reports)


def reports_to_json(reports: Iterable[VerificationReport], **header) -> str:
    payload = {**_jsonable(header), "reports": [r.to_dict() for r in reports]}
    return json.dumps(payload, sort_keys=True, indent=2)


def format_table(reports: Iterable[VerificationReport]) -> str:
    return "\n".join(r.line() for r in reports)
