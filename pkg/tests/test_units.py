"""Unit table behavior: canonicalization, fixed points, majority inference."""

import pytest

from conevec.cells import ParsedCell, Scalar
from conevec.units import DIM_CLASSES, UnitTable, infer_unit, load_units, shipped_units


class TestCanonicalization:
    def test_ml_variants_collapse(self, units):
        assert units.canonicalize("ml") == "mL"
        assert units.canonicalize("mL") == "mL"
        assert units.canonicalize("ML") == "mL"
        assert units.canonicalize(" cc ") == "mL"

    def test_hour_variants(self, units):
        # The shipped table is itself the oracle for this canonical choice.
        assert units.canonicalize("hrs") == "h"
        assert units.canonicalize("HOURS") == "h"

    def test_unknown_surface_is_none(self, units):
        assert units.canonicalize("florins") is None
        assert units.canonicalize("") is None

    def test_every_canonical_is_a_fixed_point(self, units):
        for canonical in units.canonicals():
            assert units.canonicalize(canonical) == canonical

    def test_canonicalize_is_idempotent_on_all_surfaces(self, units):
        for surface in units.surfaces():
            once = units.canonicalize(surface)
            assert once is not None
            assert units.canonicalize(once) == once

    def test_dimension_classes_are_from_the_known_set(self, units):
        for canonical in units.canonicals():
            assert units.dim_class(canonical) in DIM_CLASSES

    def test_percent_is_ratio_class(self, units):
        assert units.canonicalize("percent") == "%"
        assert units.dim_class("%") == "ratio"


class TestTableFormat:
    def test_conflicting_surface_targets_rejected(self):
        text = "#dim: volume\nml\tmL\nml\tL\n"
        with pytest.raises(ValueError):
            UnitTable.from_text(text)

    def test_unknown_dim_class_rejected(self):
        with pytest.raises(ValueError):
            UnitTable.from_text("#dim: sorcery\nml\tmL\n")

    def test_user_table_extends_shipped(self, tmp_path):
        extra = tmp_path / "extra.tsv"
        extra.write_text("#dim: other\nfurlong\tfur\n", encoding="utf-8")
        table = load_units(extra)
        assert table.canonicalize("furlong") == "fur"
        assert table.canonicalize("ml") == "mL"

    def test_shipped_table_has_a_reasonable_roster(self):
        table = shipped_units()
        assert len(table.canonicals()) >= 40


class TestInferUnit:
    @staticmethod
    def _cells(units_seq):
        return [ParsedCell("x", Scalar(1.0), u) for u in units_seq]

    def test_strict_majority(self):
        assert infer_unit(self._cells(["mL", "mL", "L", None])) == "mL"

    def test_no_evidence(self):
        assert infer_unit(self._cells([None, None])) is None
        assert infer_unit([]) is None

    def test_tie_breaks_by_first_occurrence(self):
        assert infer_unit(self._cells(["mL", "L"])) == "mL"
        assert infer_unit(self._cells(["L", "mL"])) == "L"
        assert infer_unit(self._cells([None, "L", "mL", "mL", "L"])) == "L"
