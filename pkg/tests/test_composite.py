import dataclasses

import pytest
import torch

from conevec.cells import Gaussian, ParsedCell, Range, Scalar, Text
from conevec.checkpoint import load_autoencoder, save_autoencoder
from conevec.composite import (
    Autoencoder,
    AETrainConfig,
    SlotBlock,
    assemble,
    attr_embedding,
    ae_loss,
    cell_block,
    component_embeddings,
    project,
    train_autoencoder,
    unit_embedding,
    value_embedding,
    write_ae_trace,
)
from conevec.encoder import EncoderModel, Vocab
from conevec.errors import (
    CorruptFile,
    DuplicateSlot,
    EmptyCorpus,
    ShapeMismatch,
    TextCellUnsupported,
)
from conevec.fusion import NumericModel
from conevec.magnitude import MagnitudeEmbedder
from conevec.parsing import parse_cell

from gradcheck import worst_relative_error


@pytest.fixture(scope="module")
def model():
    vocab = Vocab(("Age", "Blood", "loss", "BMI", "mL", "kg/m²"), n_buckets=8)
    encoder = EncoderModel(vocab, d=8, heads=2, n_layers=1, max_len=32, seed=0)
    embedder = MagnitudeEmbedder.create(8, 0.0, 2000.0, seed=0)
    return NumericModel(encoder, embedder, seed=0)


def vec(*vals):
    return torch.tensor(vals, dtype=torch.float64)


class TestSlotBlock:
    def test_slot_segments_follow_fixed_order(self):
        block = assemble([("attr", vec(1.0, 2.0)), ("value1", vec(3.0, 4.0))])
        assert torch.equal(block.slot("attr"), vec(1.0, 2.0))
        assert torch.equal(block.slot("value1"), vec(3.0, 4.0))
        assert torch.equal(block.slot("unit"), vec(0.0, 0.0))

    def test_mask_vector_broadcasts_bits(self):
        block = assemble([("attr", vec(1.0, 2.0))])
        assert block.mask == (1, 0, 0, 0, 0)
        assert block.mask_vector().tolist() == [1, 1, 0, 0, 0, 0, 0, 0, 0, 0]

    def test_width_must_divide_into_slots(self):
        with pytest.raises(ShapeMismatch):
            SlotBlock(torch.zeros(7, dtype=torch.float64), (0,) * 5, "bare")

    def test_mask_must_be_binary_five(self):
        with pytest.raises(ValueError):
            SlotBlock(torch.zeros(10, dtype=torch.float64), (0, 0, 2, 0, 0), "bare")
        with pytest.raises(ValueError):
            SlotBlock(torch.zeros(10, dtype=torch.float64), (0, 0, 0, 0), "bare")

    def test_layout_restricts_active_slots(self):
        with pytest.raises(ValueError):
            SlotBlock(
                torch.zeros(10, dtype=torch.float64), (1, 1, 1, 0, 0), "scalar"
            )
        with pytest.raises(ValueError):
            SlotBlock(torch.zeros(10, dtype=torch.float64), (1, 0, 0, 0, 0), "nope")


class TestAssemble:
    def test_empty_with_width_gives_all_zero_bare_block(self):
        block = assemble([], d=3)
        assert block.mask == (0, 0, 0, 0, 0)
        assert block.layout == "bare"
        assert torch.all(block.vector == 0)

    def test_empty_without_width_rejected(self):
        with pytest.raises(ValueError):
            assemble([])

    def test_scalar_layout_mask(self):
        block = assemble(
            [("attr", vec(1.0)), ("value1", vec(2.0)), ("unit", vec(3.0))]
        )
        assert block.layout == "scalar"
        assert block.mask == (1, 1, 0, 0, 1)

    def test_range_layout_mask(self):
        block = assemble([("value1", vec(1.0)), ("value2", vec(2.0))])
        assert block.layout == "range"
        assert block.mask == (0, 1, 1, 0, 0)

    def test_gaussian_layout_mask_full_when_all_present(self):
        comps = [(n, vec(1.0)) for n in ("attr", "value1", "value2", "value3", "unit")]
        block = assemble(comps)
        assert block.layout == "gaussian"
        assert block.mask == (1, 1, 1, 1, 1)

    def test_masked_off_slots_are_exactly_zero(self):
        block = assemble([("value1", vec(5.0, 6.0))])
        for name in ("attr", "value2", "value3", "unit"):
            assert torch.all(block.slot(name) == 0)

    def test_duplicate_slot_rejected(self):
        with pytest.raises(DuplicateSlot):
            assemble([("attr", vec(1.0)), ("attr", vec(2.0))])

    def test_unknown_slot_rejected(self):
        with pytest.raises(ValueError):
            assemble([("values", vec(1.0))])

    def test_width_mismatch_rejected(self):
        with pytest.raises(ShapeMismatch):
            assemble([("attr", vec(1.0)), ("value1", vec(1.0, 2.0))])

    def test_gapped_value_slots_rejected(self):
        with pytest.raises(ValueError):
            assemble([("value2", vec(1.0))])


class TestComponentEmbeddings:
    def test_scalar_cell_fills_one_value_slot(self, model, units):
        cell = parse_cell("3,000 mL", "Blood loss", units)
        comps = dict(component_embeddings(cell, model))
        assert set(comps) == {"attr", "value1", "unit"}
        assert torch.equal(comps["value1"], value_embedding(model, 3000.0))

    def test_range_cell_encodes_center_and_length(self, model, units):
        cell = parse_cell("18-24", "BMI (kg/m2)", units)
        assert cell.kind == Range(18.0, 24.0)
        comps = dict(component_embeddings(cell, model))
        assert torch.equal(comps["value1"], value_embedding(model, 21.0))
        assert torch.equal(comps["value2"], value_embedding(model, 6.0))

    def test_gaussian_cell_encodes_sd_band(self, model):
        cell = ParsedCell("PS", Gaussian(1302.0, 0.25), "nm")
        comps = dict(component_embeddings(cell, model))
        assert torch.equal(comps["value1"], value_embedding(model, 1301.75))
        assert torch.equal(comps["value2"], value_embedding(model, 1302.0))
        assert torch.equal(comps["value3"], value_embedding(model, 1302.25))

    def test_text_cell_unsupported(self, model, units):
        cell = parse_cell("S1--3", "Tumor Stage", units)
        with pytest.raises(TextCellUnsupported):
            component_embeddings(cell, model)

    def test_attr_slot_is_mean_of_refined_rows(self, model):
        from conevec.serialize import serialize_text

        emb = attr_embedding(model, "Blood loss")
        states = model.refined_states(serialize_text("Blood loss"))
        assert torch.allclose(emb, states[1:-1].mean(dim=0))

    def test_unit_slot_is_token_embedding(self, model):
        emb = unit_embedding(model, "mL")
        wid = model.encoder.vocab.id_of("mL")
        row = model.encoder.tok_emb(torch.tensor([wid]))[0]
        assert torch.equal(emb, row)

    def test_missing_attribute_and_unit_leave_slots_masked(self, model):
        cell = ParsedCell("", Scalar(5.0), None)
        block = assemble(component_embeddings(cell, model), d=model.d)
        assert block.mask == (0, 1, 0, 0, 0)


class TestCellBlock:
    def test_text_cell_falls_back_to_attr_and_unit(self, model, units):
        cell = parse_cell("S1--3", "Tumor Stage", units)
        block = cell_block(cell, model)
        assert block.layout == "bare"
        assert block.mask == (1, 0, 0, 0, 0)

    def test_numeric_cell_matches_component_path(self, model, units):
        cell = parse_cell("76-118", "BP (mmHg)", units)
        direct = assemble(component_embeddings(cell, model), d=model.d)
        assert torch.equal(cell_block(cell, model).vector, direct.vector)


class TestProjection:
    def test_output_width_is_projection_dim(self):
        ae = Autoencoder(10, d_c=4)
        block = assemble([("attr", vec(1.0, 2.0))])
        assert project(block, ae).shape == (4,)

    def test_identical_blocks_identical_outputs(self):
        ae = Autoencoder(10, d_c=4)
        a = assemble([("attr", vec(1.0, 2.0)), ("value1", vec(0.5, -1.0))])
        b = assemble([("attr", vec(1.0, 2.0)), ("value1", vec(0.5, -1.0))])
        assert torch.equal(project(a, ae), project(b, ae))

    def test_masked_coordinates_cannot_leak(self):
        ae = Autoencoder(10, d_c=4)
        clean = assemble([("attr", vec(1.0, 2.0))])
        dirty_vec = clean.vector.clone()
        dirty_vec[2:] = torch.randn(8, dtype=torch.float64)
        dirty = dataclasses.replace(clean, vector=dirty_vec)
        with torch.no_grad():
            assert torch.equal(project(clean, ae), project(dirty, ae))
            assert float(ae_loss(clean, ae).detach()) == float(ae_loss(dirty, ae).detach())

    def test_width_mismatch_rejected(self):
        ae = Autoencoder(10, d_c=4)
        with pytest.raises(ShapeMismatch):
            project(assemble([("attr", vec(1.0))]), ae)

    def test_input_width_must_be_slot_divisible(self):
        with pytest.raises(ShapeMismatch):
            Autoencoder(12, d_c=4)


class TestAELoss:
    def test_identity_reconstruction_gives_zero(self):
        ae = Autoencoder(10, d_c=10)
        with torch.no_grad():
            ae.W.copy_(torch.eye(10, dtype=torch.float64))
        block = assemble([("attr", vec(1.0, 2.0)), ("value1", vec(3.0, -1.0))])
        assert float(ae_loss(block, ae).detach()) == pytest.approx(0.0, abs=1e-24)

    def test_all_masked_block_gives_zero(self):
        ae = Autoencoder(10, d_c=4)
        assert float(ae_loss(assemble([], d=2), ae).detach()) == 0.0

    def test_loss_is_nonnegative(self):
        ae = Autoencoder(10, d_c=3, seed=5)
        block = assemble([("attr", vec(1.0, -2.0)), ("unit", vec(0.3, 0.7))])
        assert float(ae_loss(block, ae).detach()) >= 0.0


class TestTrainAutoencoder:
    def blocks(self, n=30, d=4, seed=0):
        gen = torch.Generator().manual_seed(seed)
        out = []
        for i in range(n):
            comps = [("attr", torch.randn(d, generator=gen, dtype=torch.float64))]
            if i % 3 == 0:
                comps.append(
                    ("value1", torch.randn(d, generator=gen, dtype=torch.float64))
                )
            if i % 3 == 1:
                comps.append(
                    ("value1", torch.randn(d, generator=gen, dtype=torch.float64))
                )
                comps.append(
                    ("value2", torch.randn(d, generator=gen, dtype=torch.float64))
                )
            out.append(assemble(comps, d=d))
        return out

    def test_loss_decreases(self):
        ae, trace = train_autoencoder(
            self.blocks(), AETrainConfig(steps=150, d_c=8, seed=0)
        )
        assert trace[-1][1] < trace[0][1]

    def test_batch_loss_matches_per_block_sum(self):
        blocks = self.blocks(n=6)
        ae, trace = train_autoencoder(blocks, AETrainConfig(steps=1, d_c=8, seed=3))
        fresh = Autoencoder(20, d_c=8, seed=3)
        total = sum(float(ae_loss(b, fresh).detach()) for b in blocks)
        assert trace[0][1] == pytest.approx(total, rel=1e-12)

    def test_two_seeds_land_within_factor_two(self):
        blocks = self.blocks()
        _, t1 = train_autoencoder(blocks, AETrainConfig(steps=200, d_c=8, seed=0))
        _, t2 = train_autoencoder(blocks, AETrainConfig(steps=200, d_c=8, seed=1))
        a, b = t1[-1][1], t2[-1][1]
        assert max(a, b) <= 2.0 * min(a, b)

    def test_same_seed_identical_trace(self):
        blocks = self.blocks()
        _, t1 = train_autoencoder(blocks, AETrainConfig(steps=40, d_c=8, seed=7))
        _, t2 = train_autoencoder(blocks, AETrainConfig(steps=40, d_c=8, seed=7))
        assert t1 == t2

    def test_empty_corpus_rejected(self):
        with pytest.raises(EmptyCorpus):
            train_autoencoder([])

    def test_mixed_widths_rejected(self):
        with pytest.raises(ShapeMismatch):
            train_autoencoder([assemble([], d=2), assemble([], d=3)])

    def test_gradient_matches_finite_differences(self):
        blocks = self.blocks(n=4)
        ae = Autoencoder(20, d_c=6, seed=2)

        def loss():
            return sum(ae_loss(b, ae) for b in blocks)

        assert worst_relative_error(loss, [ae.W]) < 1e-3

    def test_trace_csv_layout(self, tmp_path):
        _, trace = train_autoencoder(self.blocks(n=5), AETrainConfig(steps=3))
        path = tmp_path / "ae.csv"
        write_ae_trace(trace, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "step,loss"
        assert len(lines) == 4


class TestAECheckpoint:
    def test_round_trip_byte_stable(self, tmp_path):
        ae, _ = train_autoencoder(
            TestTrainAutoencoder().blocks(n=10), AETrainConfig(steps=20, d_c=8)
        )
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        save_autoencoder(ae, p1)
        save_autoencoder(load_autoencoder(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_loaded_projection_is_close(self, tmp_path):
        ae = Autoencoder(10, d_c=4, seed=9)
        path = tmp_path / "ae.bin"
        save_autoencoder(ae, path)
        loaded = load_autoencoder(path)
        block = assemble([("attr", vec(1.0, 2.0)), ("unit", vec(-0.5, 3.0))])
        assert torch.allclose(project(block, ae), project(block, loaded), atol=1e-5)

    def test_corruption_rejected(self, tmp_path):
        path = tmp_path / "ae.bin"
        path.write_bytes(b"WRONGMAG" + b"\0" * 32)
        with pytest.raises(CorruptFile):
            load_autoencoder(path)
        ae = Autoencoder(10, d_c=4)
        good = tmp_path / "good.bin"
        save_autoencoder(ae, good)
        blob = good.read_bytes()
        good.write_bytes(blob[:-8])
        with pytest.raises(CorruptFile):
            load_autoencoder(good)
