"""Domain-type invariants for cell kinds and the JSON record format."""

import json
import math

import pytest

from conevec.cells import Gaussian, ParsedCell, Range, Scalar, Text
from conevec.errors import NonFiniteInput


class TestKindInvariants:
    def test_range_requires_ordered_bounds(self):
        Range(1.0, 1.0)
        with pytest.raises(ValueError):
            Range(2.0, 1.0)

    def test_gaussian_requires_nonnegative_sd(self):
        Gaussian(0.0, 0.0)
        with pytest.raises(ValueError):
            Gaussian(0.0, -0.1)

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_payloads_must_be_finite(self, bad):
        with pytest.raises(NonFiniteInput):
            Scalar(bad)
        with pytest.raises(NonFiniteInput):
            Range(0.0, bad) if bad > 0 else Range(bad, 0.0)
        with pytest.raises(NonFiniteInput):
            Gaussian(bad, 1.0)

    def test_range_center_and_length(self):
        r = Range(18.0, 24.0)
        assert r.center == 21.0
        assert r.length == 6.0

    def test_attribute_is_trimmed(self):
        cell = ParsedCell("  Age \t", Scalar(28.0))
        assert cell.attribute == "Age"


class TestJsonRecords:
    """The JSON-lines record keeps a stable field order: attr, kind, payload, unit."""

    def test_field_order_is_stable(self):
        cell = ParsedCell("Blood loss", Scalar(3000.0), "mL")
        assert cell.to_json() == (
            '{"attr": "Blood loss", "kind": "scalar", "payload": [3000.0], "unit": "mL"}'
        )

    def test_payload_per_kind(self):
        assert ParsedCell("a", Range(76.0, 118.0)).payload() == [76.0, 118.0]
        assert ParsedCell("a", Gaussian(21.8, 2.9)).payload() == [21.8, 2.9]
        assert ParsedCell("a", Text("S1--3")).payload() == ["S1--3"]

    def test_unit_absent_serializes_as_null(self):
        record = json.loads(ParsedCell("Age", Scalar(28.0)).to_json())
        assert record["unit"] is None

    def test_non_ascii_units_survive_round_trip(self):
        record = json.loads(ParsedCell("BMI", Gaussian(21.8, 2.9), "kg/m²").to_json())
        assert record["unit"] == "kg/m²"
