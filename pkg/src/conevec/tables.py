"""CSV table loading and the in-memory table shape used across the package."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from conevec.cells import ParsedCell
from conevec.errors import LengthMismatch
from conevec.parsing import parse_cell
from conevec.units import UnitTable


@dataclass(frozen=True)
class Table:
    """A single-header-row table: column names plus raw string cells."""

    name: str
    headers: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        for r in self.rows:
            if len(r) != len(self.headers):
                raise LengthMismatch(
                    f"table {self.name!r}: row of width {len(r)} vs "
                    f"{len(self.headers)} headers"
                )

    @property
    def n_columns(self) -> int:
        return len(self.headers)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def column(self, j: int) -> list[str]:
        return [r[j] for r in self.rows]

    def parse_column(self, j: int, units: UnitTable) -> list[ParsedCell]:
        header = self.headers[j]
        return [parse_cell(raw, header, units) for raw in self.column(j)]


def read_table(path: str | Path, delimiter: str = ",") -> Table:
    """Load one UTF-8 CSV file with a single header row."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        rows = [tuple(r) for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: empty table")
    return Table(path.stem, rows[0], tuple(rows[1:]))


def write_table(table: Table, path: str | Path, delimiter: str = ",") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(table.headers)
        writer.writerows(table.rows)


def read_corpus(corpus_dir: str | Path, delimiter: str = ",") -> list[Table]:
    """All CSV tables in a directory, sorted by file name for determinism."""
    paths = sorted(Path(corpus_dir).glob("*.csv"))
    return [read_table(p, delimiter) for p in paths]
