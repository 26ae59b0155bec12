"""Per-depth weight rules for tails.

A schedule is ``w(k) = head[k]`` for ``k < len(head)`` and
``values[k % P] * ratio**k`` afterwards. Constant, geometric and periodic
table rules are special cases, which keeps sums and suprema closed-form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import ValidationError


@dataclass(frozen=True)
class Schedule:
    values: tuple = (1.0,)
    ratio: float = 1.0
    head: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "head", tuple(float(v) for v in self.head))
        object.__setattr__(self, "ratio", float(self.ratio))
        if not self.values:
            raise ValidationError("schedule needs at least one periodic value")
        bad = [v for v in self.values + self.head if not (v > 0 and math.isfinite(v))]
        if bad or not (self.ratio > 0 and math.isfinite(self.ratio)):
            raise ValidationError(f"schedule weights must be positive and finite: {self}")

    @classmethod
    def constant(cls, c=1.0):
        return cls((c,), 1.0)

    @classmethod
    def geometric(cls, scale, ratio):
        return cls((scale,), ratio)

    @classmethod
    def table(cls, values: Sequence[float], head: Sequence[float] = ()):
        return cls(tuple(values), 1.0, tuple(head))

    @property
    def period(self) -> int:
        return len(self.values)

    def __call__(self, k: int) -> float:
        if k < 0:
            raise ValueError("negative depth")
        if k < len(self.head):
            return self.head[k]
        return self.values[k % len(self.values)] * self.ratio ** k

    def tail_sum(self, start: int = 0) -> float:
        """sum_{k >= start} w(k); ``inf`` when the series diverges."""
        start = max(int(start), 0)
        total = math.fsum(self.head[start:])
        k0 = max(start, len(self.head))
        if self.ratio >= 1.0:
            return math.inf
        P = self.period
        rP = self.ratio ** P
        # sum over k >= k0 of values[k % P] r^k, grouped by residue class
        s = 0.0
        for j in range(P):
            k = k0 + j
            s += self.values[k % P] * self.ratio ** k
        return total + s / (1.0 - rP)

    def scaled(self, c: float) -> "Schedule":
        return Schedule(tuple(c * v for v in self.values), self.ratio, tuple(c * v for v in self.head))

    def to_json(self):
        d = {"values": list(self.values), "ratio": self.ratio}
        if self.head:
            d["head"] = list(self.head)
        return d

    @classmethod
    def from_json(cls, obj) -> "Schedule":
        if isinstance(obj, (int, float)):
            return cls.constant(obj)
        if not isinstance(obj, dict):
            raise ValidationError(f"bad schedule {obj!r}")
        if "constant" in obj:
            return cls.constant(obj["constant"])
        if "geometric" in obj:
            g = obj["geometric"]
            return cls.geometric(g.get("scale", 1.0), g["ratio"])
        if "table" in obj:
            return cls.table(obj["table"], obj.get("head", ()))
        if "values" in obj:
            return cls(tuple(obj["values"]), obj.get("ratio", 1.0), tuple(obj.get("head", ())))
        raise ValidationError(f"bad schedule {obj!r}")
