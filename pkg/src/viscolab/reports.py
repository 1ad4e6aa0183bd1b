"""Structured reports with a stable JSON schema."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

SCHEMA = "viscolab.report.v1"


def to_jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"


@dataclass
class Report:
    """Outcome of a check: a name, a pass flag and free-form findings."""

    name: str
    passed: bool
    data: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.passed)

    def __getitem__(self, key):
        return self.data[key]

    def to_dict(self) -> dict:
        return {"schema": SCHEMA, "name": self.name, "pass": bool(self.passed), **to_jsonable(self.data)}

    def to_json(self) -> str:
        return dumps(self.to_dict())
