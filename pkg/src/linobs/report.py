from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass
class CheckReport:
    """Outcome of one verification: worst residual against a tolerance."""

    check_name: str
    max_residual: float
    tolerance: float
    sample_count: int
    details: list[dict[str, Any]] = field(default_factory=list)
    truncation_order: int | None = None

    def __post_init__(self):
        self.max_residual = float(self.max_residual)
        if not np.isfinite(self.max_residual):
            self.max_residual = float("inf")

    @property
    def status(self) -> str:
        return "pass" if self.max_residual <= self.tolerance else "fail"

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict[str, Any]:
        out = {
            "name": self.check_name,
            "status": self.status,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "sample_count": self.sample_count,
            "details": _jsonable(self.details),
        }
        if self.truncation_order is not None:
            out["truncation_order"] = self.truncation_order
        return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
