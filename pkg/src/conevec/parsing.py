"""Rule-based parsing of raw cell text into numeric kinds with units.

The grammar recognizes scalars (``3,000 mL``), ranges (``76-118``, en/em
dashes and ``--`` included), and gaussians (``21.8 ± 2.9``, ``+-`` and
``+/-`` included), each with an optional single-token unit suffix. A comma
is a thousands separator only when it groups exactly three digits;
anything else numeric-looking degrades to Text rather than failing.
"""

from __future__ import annotations

import re

from conevec.cells import Gaussian, NumericKind, ParsedCell, Range, Scalar, Text
from conevec.units import UnitTable

# Optional sign, then either comma-grouped thousands or plain digits, with
# an optional decimal part; or a bare decimal fraction.
_NUM = r"(?:[+-]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d*)?|[+-]?\.\d+)"

# One unit-ish token: starts with a letter-like symbol, short, no spaces.
_UNIT = r"[A-Za-zµ°%$€][A-Za-z0-9µ°%$€/^²³.\-]{0,11}"

_NUMBER_RX = re.compile(_NUM + r"\Z")
_SCALAR_RX = re.compile(rf"({_NUM})(?:\s*({_UNIT}))?\Z")
_RANGE_RX = re.compile(rf"({_NUM})\s*(?:–|—|-{{1,2}})\s*({_NUM})(?:\s*({_UNIT}))?\Z")
_GAUSSIAN_RX = re.compile(rf"({_NUM})\s*(?:±|\+/-|\+-)\s*({_NUM})(?:\s*({_UNIT}))?\Z")
_CURRENCY_RX = re.compile(rf"([$€])\s*({_NUM})\Z")
_HEADER_UNIT_RX = re.compile(r"\(([^()]+)\)\s*\Z")
_WS_RX = re.compile(r"\s+")


def clean_text(raw: str) -> str:
    """Trim, collapse whitespace, and normalize the Unicode minus sign."""
    return _WS_RX.sub(" ", raw.replace("−", "-")).strip()


def parse_number(word: str) -> float | None:
    """Float value of one number token, or None; strips thousands commas."""
    if _NUMBER_RX.fullmatch(word) is None:
        return None
    return float(word.replace(",", ""))


def header_unit(header: str, units: UnitTable) -> str | None:
    """Canonical unit from a trailing parenthetical in the header, if any."""
    m = _HEADER_UNIT_RX.search(header.strip())
    if m is None:
        return None
    return units.canonicalize(m.group(1))


def _resolve_unit(suffix: str | None, header: str, units: UnitTable) -> str | None:
    if suffix is not None:
        canonical = units.canonicalize(suffix)
        if canonical is not None:
            return canonical
    return header_unit(header, units)


def parse_cell(raw: str, header: str, units: UnitTable) -> ParsedCell:
    """Decompose one cell into (attribute, numeric kind, canonical unit).

    Total: inputs that fit no numeric pattern come back as Text with the
    original string preserved.
    """
    attr = header.strip()
    cleaned = clean_text(raw)

    m = _GAUSSIAN_RX.fullmatch(cleaned)
    if m is not None:
        mean, sd = parse_number(m.group(1)), parse_number(m.group(2))
        if mean is not None and sd is not None and sd >= 0:
            unit = _resolve_unit(m.group(3), header, units)
            return ParsedCell(attr, Gaussian(mean, sd), unit)

    m = _RANGE_RX.fullmatch(cleaned)
    if m is not None:
        lo, hi = parse_number(m.group(1)), parse_number(m.group(2))
        if lo is not None and hi is not None and lo <= hi:
            unit = _resolve_unit(m.group(3), header, units)
            return ParsedCell(attr, Range(lo, hi), unit)

    m = _CURRENCY_RX.fullmatch(cleaned)
    if m is not None:
        x = parse_number(m.group(2))
        if x is not None:
            return ParsedCell(attr, Scalar(x), units.canonicalize(m.group(1)))

    m = _SCALAR_RX.fullmatch(cleaned)
    if m is not None:
        x = parse_number(m.group(1))
        if x is not None:
            unit = _resolve_unit(m.group(2), header, units)
            return ParsedCell(attr, Scalar(x), unit)

    return ParsedCell(attr, Text(raw))


def parse_column(header: str, raw_cells: list[str], units: UnitTable) -> list[ParsedCell]:
    return [parse_cell(raw, header, units) for raw in raw_cells]


def kind_counts(cells: list[ParsedCell]) -> dict[str, int]:
    """Histogram of kind names over a list of parsed cells."""
    out: dict[str, int] = {}
    for c in cells:
        out[c.kind_name] = out.get(c.kind_name, 0) + 1
    return out


__all__ = [
    "clean_text",
    "header_unit",
    "kind_counts",
    "parse_cell",
    "parse_column",
    "parse_number",
]
