"""Domain types for parsed table cells.

A cell value is one of four kinds: a scalar, a numeric range ``a-b``, a
gaussian ``m ± s``, or free text when nothing numeric can be recovered.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Union

from conevec.errors import NonFiniteInput


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise NonFiniteInput(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class Scalar:
    x: float

    def __post_init__(self) -> None:
        _require_finite("Scalar.x", self.x)


@dataclass(frozen=True)
class Range:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        _require_finite("Range bounds", self.lo, self.hi)
        if self.lo > self.hi:
            raise ValueError(f"Range requires lo <= hi, got ({self.lo}, {self.hi})")

    @property
    def center(self) -> float:
        return (self.lo + self.hi) / 2.0

    @property
    def length(self) -> float:
        return abs(self.hi - self.lo)


@dataclass(frozen=True)
class Gaussian:
    mean: float
    sd: float

    def __post_init__(self) -> None:
        _require_finite("Gaussian parameters", self.mean, self.sd)
        if self.sd < 0:
            raise ValueError(f"Gaussian requires sd >= 0, got {self.sd}")


@dataclass(frozen=True)
class Text:
    raw: str


NumericKind = Union[Scalar, Range, Gaussian, Text]

_KIND_NAMES = {Scalar: "scalar", Range: "range", Gaussian: "gaussian", Text: "text"}


@dataclass(frozen=True)
class ParsedCell:
    """One table cell as an (attribute, value kind, optional unit) triplet.

    The attribute is the whitespace-trimmed column header; the unit, when
    present, is already in canonical form.
    """

    attribute: str
    kind: NumericKind
    unit: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "attribute", self.attribute.strip())

    @property
    def kind_name(self) -> str:
        return _KIND_NAMES[type(self.kind)]

    def payload(self) -> list[float] | list[str]:
        k = self.kind
        if isinstance(k, Scalar):
            return [k.x]
        if isinstance(k, Range):
            return [k.lo, k.hi]
        if isinstance(k, Gaussian):
            return [k.mean, k.sd]
        return [k.raw]

    def to_json(self) -> str:
        """One JSON record with a stable field order: attr, kind, payload, unit."""
        record = {
            "attr": self.attribute,
            "kind": self.kind_name,
            "payload": self.payload(),
            "unit": self.unit,
        }
        return json.dumps(record, ensure_ascii=False)
