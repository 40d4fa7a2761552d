"""Shared fixtures: unit table, fixture table, and session-scoped models.

The trained-model fixtures are deliberately session-scoped; training even
a desk-scale model is the expensive part of the suite and every consumer
(module tests and the acceptance gate) shares the same instances.
"""

from __future__ import annotations

from pathlib import Path

import pytest
import torch

from conevec.tables import Table, read_table
from conevec.units import UnitTable, shipped_units

# Thresholds in the acceptance module were frozen from single-threaded
# runs; keeping torch single-threaded makes every trained fixture
# bit-reproducible across runs and machines with different core counts.
torch.set_num_threads(1)

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def units() -> UnitTable:
    return shipped_units()


@pytest.fixture(scope="session")
def fig2() -> Table:
    return read_table(DATA_DIR / "fig2.csv")


FIG2_COLUMN_GOLDEN = (
    "[CLS] Age [SEP] 28 [SEP] 34 [SEP] 36 [SEP] 42 [SEP] 33 [SEP] 31 [SEP]"
)

FIG2_ROW_GOLDEN = (
    "[CLS] Age 28 [SEP] Sex F [SEP] Tumor Stage S1-3 [SEP] "
    "Operating time 7 hrs [SEP] Blood loss 3000 mL [SEP] "
    "Follow-up (month) 30 [SEP] BP (mmHg) 76-118 [SEP] "
    "BMI (kg/m2) 21.8 ± 2.9 [SEP]"
)
