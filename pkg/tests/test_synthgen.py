"""Synthetic corpus generator: determinism, labels, and parseability."""

import json

import pytest

from conevec.parsing import parse_cell
from conevec.pipeline import fill_column_units
from conevec.synthgen import (
    DEFAULT_TEMPLATES,
    AttributeTemplate,
    NoiseSpec,
    SyntheticCorpusSpec,
    gen_corpus,
    generate,
)
from conevec.tables import read_corpus
from conevec.metrics import load_ground_truth
from conevec.units import load_units


@pytest.fixture(scope="module")
def units():
    return load_units()


@pytest.fixture(scope="module")
def small_spec():
    return SyntheticCorpusSpec(tables_per_type=2, rows_per_table=4)


@pytest.fixture(scope="module")
def corpus(small_spec):
    return generate(small_spec, seed=7)


class TestDeterminism:
    def test_same_seed_identical(self, small_spec):
        a = generate(small_spec, seed=7)
        b = generate(small_spec, seed=7)
        assert a.tables == b.tables
        assert a.column_truth == b.column_truth
        assert a.tuple_truth == b.tuple_truth

    def test_different_seed_differs(self, small_spec, corpus):
        other = generate(small_spec, seed=8)
        assert other.tables != corpus.tables


class TestStructure:
    def test_table_count(self, small_spec, corpus):
        assert len(corpus.tables) == 5 * small_spec.tables_per_type

    def test_row_and_column_counts(self, small_spec, corpus):
        for table in corpus.tables:
            assert len(table.headers) == 4
            assert len(table.rows) == small_spec.rows_per_table

    def test_column_truth_sizes(self, small_spec, corpus):
        want = small_spec.tables_per_type - 1
        assert all(len(rel) == want for rel in corpus.column_truth.values())

    def test_tuple_truth_sizes(self, small_spec, corpus):
        want = small_spec.tables_per_type * small_spec.rows_per_table - 1
        assert all(len(rel) == want for rel in corpus.tuple_truth.values())

    def test_truth_excludes_self(self, corpus):
        for qid, rel in corpus.column_truth.items():
            assert qid not in rel
        for qid, rel in corpus.tuple_truth.items():
            assert qid not in rel

    def test_truth_symmetric(self, corpus):
        for qid, rel in corpus.column_truth.items():
            for other in rel:
                assert qid in corpus.column_truth[other]

    def test_label_maps_cover_ids(self, corpus):
        assert set(corpus.column_templates) == set(corpus.column_truth)
        assert set(corpus.tuple_types) == set(corpus.tuple_truth)

    def test_relevant_share_template(self, corpus):
        for qid, rel in corpus.column_truth.items():
            for other in rel:
                assert corpus.column_templates[other] == corpus.column_templates[qid]


class TestCells:
    def test_every_cell_numeric(self, corpus, units):
        for table in corpus.tables:
            for j, header in enumerate(table.headers):
                for raw in table.column(j):
                    cell = parse_cell(raw, header, units)
                    assert cell.kind_name != "text", (table.name, header, raw)

    def test_noiseless_units_all_recovered(self, units):
        spec = SyntheticCorpusSpec(
            tables_per_type=2,
            rows_per_table=4,
            noise=NoiseSpec(header_unit_p=0.0, missing_unit_p=0.0),
        )
        corpus = generate(spec, seed=3)
        by_key = {t.key: t for t in spec.templates}
        for table in corpus.tables:
            for j, header in enumerate(table.headers):
                key = corpus.column_templates[f"{table.name}.c{j}"]
                template = by_key[key]
                for raw in table.column(j):
                    cell = parse_cell(raw, header, units)
                    assert cell.unit == template.unit, (raw, header)

    def test_column_inference_fills_missing_units(self, corpus, units):
        filled = 0
        for table in corpus.tables:
            for j, header in enumerate(table.headers):
                cells = [parse_cell(raw, header, units) for raw in table.column(j)]
                before = sum(c.unit is None for c in cells)
                after = sum(c.unit is None for c in fill_column_units(cells))
                filled += before - after
        assert filled > 0


class TestCollisions:
    """Deliberate near-miss pairs across table types."""

    def _headers(self, key):
        by_key = {t.key: t for t in DEFAULT_TEMPLATES}
        return set(by_key[key].headers)

    def test_dose_headers_shared_across_magnitudes(self):
        assert self._headers("patients/dose") & self._headers("labs/dose")

    def test_yield_headers_shared_across_units(self):
        assert self._headers("labs/yield") & self._headers("materials/yield")


class TestValidation:
    def test_needs_two_tables_per_type(self):
        with pytest.raises(ValueError):
            SyntheticCorpusSpec(tables_per_type=1)

    def test_needs_rows(self):
        with pytest.raises(ValueError):
            SyntheticCorpusSpec(rows_per_table=0)

    def test_template_bounds_ordered(self):
        with pytest.raises(ValueError):
            AttributeTemplate(
                key="x/y", table_type="x", headers=("H",),
                kind="scalar", lo=5.0, hi=1.0,
            )

    def test_template_kind_known(self):
        with pytest.raises(ValueError):
            AttributeTemplate(
                key="x/y", table_type="x", headers=("H",),
                kind="interval", lo=0.0, hi=1.0,
            )


class TestOnDisk:
    def test_gen_corpus_layout(self, small_spec, tmp_path):
        corpus = gen_corpus(small_spec, seed=7, out_dir=tmp_path)
        csvs = sorted(p.name for p in (tmp_path / "tables").glob("*.csv"))
        assert len(csvs) == len(corpus.tables)
        assert (tmp_path / "manifest.json").exists()
        truth = load_ground_truth(tmp_path / "truth_columns.jsonl")
        assert truth == corpus.column_truth
        truth_t = load_ground_truth(tmp_path / "truth_tuples.jsonl")
        assert truth_t == corpus.tuple_truth

    def test_written_tables_round_trip(self, small_spec, tmp_path):
        corpus = gen_corpus(small_spec, seed=7, out_dir=tmp_path)
        loaded = read_corpus(tmp_path / "tables")
        assert [t.name for t in loaded] == sorted(t.name for t in corpus.tables)
        by_name = {t.name: t for t in corpus.tables}
        for table in loaded:
            assert table == by_name[table.name]

    def test_manifest_matches_labels(self, small_spec, tmp_path):
        corpus = gen_corpus(small_spec, seed=7, out_dir=tmp_path)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["columns"] == corpus.column_templates
        assert manifest["tuples"] == corpus.tuple_types
