"""Unit canonicalization backed by a small shipped surface-form table.

The table file is two-column text, ``surface<TAB>canonical``, with
``#dim: <class>`` lines annotating the dimension class of the canonical
symbols that follow. Lookup is case-insensitive (casefolded) and trimmed;
every canonical symbol is its own fixed point.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from conevec.cells import ParsedCell

DIM_CLASSES = frozenset({
    "length", "mass", "time", "volume", "concentration",
    "temperature", "pressure", "ratio", "count", "other",
})


@dataclass
class UnitTable:
    """Read-only map from unit surface forms to canonical symbols."""

    _surface_to_canonical: dict[str, str] = field(default_factory=dict)
    _dim_class: dict[str, str] = field(default_factory=dict)

    def canonicalize(self, surface: str) -> str | None:
        """Canonical symbol for a surface form, or None when unknown."""
        return self._surface_to_canonical.get(surface.strip().casefold())

    def dim_class(self, canonical: str) -> str | None:
        return self._dim_class.get(canonical)

    def canonicals(self) -> tuple[str, ...]:
        return tuple(sorted(self._dim_class))

    def surfaces(self) -> tuple[str, ...]:
        return tuple(sorted(self._surface_to_canonical))

    def _register(self, surface: str, canonical: str, dim: str) -> None:
        key = surface.strip().casefold()
        if not key or not canonical:
            raise ValueError(f"empty surface or canonical in unit table: {surface!r}")
        existing = self._surface_to_canonical.get(key)
        if existing is not None and existing != canonical:
            raise ValueError(
                f"surface {surface!r} maps to both {existing!r} and {canonical!r}"
            )
        self._surface_to_canonical[key] = canonical
        self._dim_class.setdefault(canonical, dim)

    @classmethod
    def from_text(cls, text: str) -> "UnitTable":
        table = cls()
        dim = "other"
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                if stripped.lower().startswith("#dim:"):
                    dim = stripped[5:].strip().lower()
                    if dim not in DIM_CLASSES:
                        raise ValueError(f"line {lineno}: unknown dimension class {dim!r}")
                continue
            parts = stripped.split("\t")
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'surface<TAB>canonical'")
            surface, canonical = parts[0], parts[1].strip()
            table._register(surface, canonical, dim)
            # Canonical symbols are their own fixed point.
            table._register(canonical, canonical, dim)
        return table

    @classmethod
    def from_file(cls, path: str | Path) -> "UnitTable":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def merged_with(self, other: "UnitTable") -> "UnitTable":
        """New table with this table's entries extended by another's.

        Conflicting surface targets are an error, matching the one-target
        invariant of the format.
        """
        merged = UnitTable(dict(self._surface_to_canonical), dict(self._dim_class))
        for key, canonical in other._surface_to_canonical.items():
            merged._register(key, canonical, other._dim_class[canonical])
        return merged


def shipped_units() -> UnitTable:
    """The seed unit table bundled with the package."""
    text = resources.files("conevec").joinpath("data/units.tsv").read_text("utf-8")
    return UnitTable.from_text(text)


def load_units(extra_path: str | Path | None = None) -> UnitTable:
    """Shipped table, optionally extended by a user-supplied file."""
    table = shipped_units()
    if extra_path is not None:
        table = table.merged_with(UnitTable.from_file(extra_path))
    return table


def infer_unit(column_cells: Sequence[ParsedCell] | Iterable[ParsedCell]) -> str | None:
    """Majority canonical unit within one column's cells.

    Cells without a unit abstain. Ties resolve to the unit that appears
    first in cell order; returns None when no cell carries a unit.
    """
    units = [c.unit for c in column_cells if c.unit is not None]
    if not units:
        return None
    counts = Counter(units)
    first_seen = {u: i for i, u in reversed(list(enumerate(units)))}
    return min(counts, key=lambda u: (-counts[u], first_seen[u]))
