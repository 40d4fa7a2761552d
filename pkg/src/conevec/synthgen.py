"""Synthetic table corpus with generated retrieval ground truth.

Twenty attribute templates across five table types; each table draws one
column per template of its type, with noisy headers (synonym pools),
units that move between header parentheticals and cell suffixes or go
missing, and thousands separators on large integers. Two template pairs
are deliberate near-collisions: one shares header pool and unit but
differs in value scale, one shares header pool and scale but differs in
unit. Those pairs are what make the retrieval comparison informative:
header text alone cannot separate them.

Ground truth falls out of the construction: columns sharing a template
are mutually relevant, rows of tables sharing a type are mutually
relevant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from conevec.tables import Table, write_table


@dataclass(frozen=True)
class AttributeTemplate:
    key: str
    table_type: str
    headers: tuple[str, ...]
    kind: str
    lo: float
    hi: float
    spread_lo: float = 0.0
    spread_hi: float = 0.0
    unit: str | None = None
    unit_surfaces: tuple[str, ...] = ()
    decimals: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("scalar", "range", "gaussian"):
            raise ValueError(f"unknown value kind {self.kind!r}")
        if not self.headers:
            raise ValueError("empty header pool")
        if not self.lo <= self.hi:
            raise ValueError(f"{self.key}: lo must not exceed hi")
        if not 0 <= self.spread_lo <= self.spread_hi:
            raise ValueError(f"{self.key}: bad spread interval")
        if self.unit is not None and not self.unit_surfaces:
            raise ValueError(f"{self.key}: unit without surface forms")


DEFAULT_TEMPLATES: tuple[AttributeTemplate, ...] = (
    # patients
    AttributeTemplate(
        "patients/age", "patients",
        ("Age", "Patient age", "Age at entry"), "scalar", 18, 90,
    ),
    AttributeTemplate(
        "patients/bmi", "patients",
        ("BMI", "Body mass index", "BMI score"), "gaussian", 19, 35, 1, 4,
        unit="kg/m²", unit_surfaces=("kg/m2", "kg/m^2"), decimals=1,
    ),
    AttributeTemplate(
        "patients/bp", "patients",
        ("BP", "Blood pressure", "Resting BP"), "range", 60, 95, 25, 55,
        unit="mmHg", unit_surfaces=("mmHg", "mmhg"),
    ),
    AttributeTemplate(
        "patients/dose", "patients",
        ("Dose", "Dosage", "Drug dose"), "scalar", 1, 10,
        unit="mg", unit_surfaces=("mg", "milligram"),
    ),
    # labs: labs/dose shares the Dose header pool and mg unit with
    # patients/dose but sits two decades higher: only magnitude separates.
    AttributeTemplate(
        "labs/dose", "labs",
        ("Dose", "Dosage", "Drug dose"), "scalar", 100, 2000,
        unit="mg", unit_surfaces=("mg", "milligram"),
    ),
    AttributeTemplate(
        "labs/yield", "labs",
        ("Output", "Yield", "Amount"), "scalar", 10, 500,
        unit="mL", unit_surfaces=("mL", "ml", "cc"),
    ),
    AttributeTemplate(
        "labs/hemoglobin", "labs",
        ("Hemoglobin", "Hgb", "Hb level"), "gaussian", 11, 16, 0.5, 1.5,
        unit="g/dL", unit_surfaces=("g/dl", "g/dL"), decimals=1,
    ),
    AttributeTemplate(
        "labs/turnaround", "labs",
        ("Turnaround", "Processing time", "Lag"), "range", 1, 24, 2, 24,
        unit="h", unit_surfaces=("h", "hr", "hrs", "hours"),
    ),
    # materials: materials/yield mirrors labs/yield in headers and scale
    # but measures mass, not volume: only the unit separates.
    AttributeTemplate(
        "materials/yield", "materials",
        ("Output", "Yield", "Amount"), "scalar", 10, 500,
        unit="g", unit_surfaces=("g", "gram", "grams"),
    ),
    AttributeTemplate(
        "materials/thickness", "materials",
        ("Thickness", "Gauge", "Sheet thickness"), "scalar", 0.5, 10,
        unit="mm", unit_surfaces=("mm", "millimeter"), decimals=1,
    ),
    AttributeTemplate(
        "materials/hardness", "materials",
        ("Hardness", "Shore hardness", "Indentation hardness"),
        "range", 20, 80, 5, 20,
    ),
    AttributeTemplate(
        "materials/cure", "materials",
        ("Cure time", "Curing period", "Set time"), "gaussian", 20, 90, 2, 10,
        unit="min", unit_surfaces=("min", "mins", "minutes"),
    ),
    # weather
    AttributeTemplate(
        "weather/temp", "weather",
        ("Temperature", "Air temp", "Mean temp"), "gaussian", -5, 35, 1, 5,
        unit="°C", unit_surfaces=("°C", "celsius", "degC"), decimals=1,
    ),
    AttributeTemplate(
        "weather/humidity", "weather",
        ("Humidity", "Relative humidity", "RH"), "scalar", 20, 100,
        unit="%", unit_surfaces=("%", "percent"),
    ),
    AttributeTemplate(
        "weather/rainfall", "weather",
        ("Rainfall", "Precipitation", "Rain amount"), "range", 0, 40, 5, 80,
        unit="mm", unit_surfaces=("mm",),
    ),
    AttributeTemplate(
        "weather/visibility", "weather",
        ("Visibility", "Sight range", "Visual range"), "scalar", 1, 40,
        unit="km", unit_surfaces=("km",),
    ),
    # sales
    AttributeTemplate(
        "sales/price", "sales",
        ("Price", "Unit price", "List price"), "scalar", 5, 500,
        unit="$", unit_surfaces=("$", "usd"), decimals=2,
    ),
    AttributeTemplate(
        "sales/discount", "sales",
        ("Discount", "Markdown", "Price cut"), "scalar", 1, 60,
        unit="%", unit_surfaces=("%", "pct"),
    ),
    AttributeTemplate(
        "sales/delivery", "sales",
        ("Delivery window", "Shipping window", "Delivery period"),
        "range", 1, 10, 1, 15,
        unit="day", unit_surfaces=("days", "day"),
    ),
    AttributeTemplate(
        "sales/margin", "sales",
        ("Margin", "Profit margin", "Net margin"), "gaussian", 5, 40, 1, 6,
        unit="%", unit_surfaces=("%", "percent"), decimals=1,
    ),
)


@dataclass(frozen=True)
class NoiseSpec:
    synonym_headers: bool = True
    header_unit_p: float = 0.5
    missing_unit_p: float = 0.3
    thousands_p: float = 0.7


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    tables_per_type: int = 4
    rows_per_table: int = 8
    templates: tuple[AttributeTemplate, ...] = DEFAULT_TEMPLATES
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self) -> None:
        if self.tables_per_type < 2:
            raise ValueError("need at least two tables per type for ground truth")
        if self.rows_per_table < 1:
            raise ValueError("need at least one row per table")
        if not self.templates:
            raise ValueError("empty template pool")

    @property
    def table_types(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for t in self.templates:
            seen.setdefault(t.table_type, None)
        return tuple(seen)


@dataclass(frozen=True)
class SynthCorpus:
    tables: tuple[Table, ...]
    column_truth: dict[str, set[str]]
    tuple_truth: dict[str, set[str]]
    column_templates: dict[str, str]
    tuple_types: dict[str, str]


def _fmt(value: float, decimals: int, thousands: bool) -> str:
    if decimals == 0:
        n = int(round(value))
        return f"{n:,d}" if thousands and abs(n) >= 1000 else str(n)
    return f"{value:.{decimals}f}"


def _render_cell(
    t: AttributeTemplate, rng: np.random.Generator, noise: NoiseSpec,
    unit_in_header: bool,
) -> str:
    thousands = t.decimals == 0 and rng.random() < noise.thousands_p
    if t.kind == "scalar":
        core = _fmt(rng.uniform(t.lo, t.hi), t.decimals, thousands)
    elif t.kind == "range":
        a = rng.uniform(t.lo, t.hi)
        b = a + rng.uniform(t.spread_lo, t.spread_hi)
        core = f"{_fmt(a, t.decimals, False)}-{_fmt(b, t.decimals, thousands)}"
    else:
        mu = rng.uniform(t.lo, t.hi)
        sd = rng.uniform(t.spread_lo, t.spread_hi)
        core = f"{_fmt(mu, t.decimals, False)} ± {_fmt(sd, t.decimals, False)}"
    if t.unit is None or unit_in_header or rng.random() < noise.missing_unit_p:
        return core
    surface = t.unit_surfaces[rng.integers(0, len(t.unit_surfaces))]
    if surface == "$":
        return f"${core}"
    if surface == "%":
        return f"{core}%"
    return f"{core} {surface}"


def generate(spec: SyntheticCorpusSpec, seed: int) -> SynthCorpus:
    """Deterministic corpus: one RNG, fixed iteration order."""
    rng = np.random.default_rng(seed)
    by_type: dict[str, list[AttributeTemplate]] = {}
    for t in spec.templates:
        by_type.setdefault(t.table_type, []).append(t)
    tables: list[Table] = []
    column_templates: dict[str, str] = {}
    tuple_types: dict[str, str] = {}
    for table_type in spec.table_types:
        templates = by_type[table_type]
        for i in range(spec.tables_per_type):
            name = f"{table_type}_{i}"
            order = [templates[j] for j in rng.permutation(len(templates))]
            headers = []
            unit_in_header = []
            for t in order:
                syn = (
                    t.headers[rng.integers(0, len(t.headers))]
                    if spec.noise.synonym_headers
                    else t.headers[0]
                )
                in_header = t.unit is not None and rng.random() < spec.noise.header_unit_p
                if in_header:
                    surface = t.unit_surfaces[rng.integers(0, len(t.unit_surfaces))]
                    syn = f"{syn} ({surface})"
                headers.append(syn)
                unit_in_header.append(in_header)
            rows = []
            for _ in range(spec.rows_per_table):
                rows.append(
                    [
                        _render_cell(t, rng, spec.noise, in_h)
                        for t, in_h in zip(order, unit_in_header)
                    ]
                )
            tables.append(Table(name, tuple(headers), tuple(map(tuple, rows))))
            for j, t in enumerate(order):
                column_templates[f"{name}.c{j}"] = t.key
            for r in range(spec.rows_per_table):
                tuple_types[f"{name}.r{r}"] = table_type
    column_truth = {
        cid: {o for o, k in column_templates.items() if k == key and o != cid}
        for cid, key in column_templates.items()
    }
    tuple_truth = {
        rid: {o for o, k in tuple_types.items() if k == typ and o != rid}
        for rid, typ in tuple_types.items()
    }
    return SynthCorpus(
        tuple(tables), column_truth, tuple_truth, column_templates, tuple_types
    )


def gen_corpus(
    spec: SyntheticCorpusSpec, seed: int, out_dir: str | Path
) -> SynthCorpus:
    """Generate and write: tables/*.csv, truth files, and a manifest."""
    corpus = generate(spec, seed)
    out = Path(out_dir)
    tables_dir = out / "tables"
    tables_dir.mkdir(parents=True, exist_ok=True)
    for table in corpus.tables:
        write_table(table, tables_dir / f"{table.name}.csv")
    from conevec.metrics import save_ground_truth

    save_ground_truth(corpus.column_truth, out / "truth_columns.jsonl")
    save_ground_truth(corpus.tuple_truth, out / "truth_tuples.jsonl")
    manifest = {
        "columns": dict(sorted(corpus.column_templates.items())),
        "tuples": dict(sorted(corpus.tuple_types.items())),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    return corpus
