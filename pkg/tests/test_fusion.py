import math

import pytest
import torch

from conevec.checkpoint import load_model, save_model
from conevec.encoder import MASK_ID, EncoderModel, Vocab
from conevec.errors import (
    EmptyCorpus,
    IndexOutOfBounds,
    NonPositiveMagnitude,
    ShapeMismatch,
)
from conevec.fusion import (
    MagnitudeEval,
    NumericModel,
    TrainConfig,
    bucket_class,
    evaluate_magnitude,
    fuse,
    gather_numerals,
    numeral_loss,
    refine,
    scatter_refined,
    train,
    write_trace,
)
from conevec.magnitude import MagnitudeEmbedder
from conevec.serialize import serialize_column

from gradcheck import worst_relative_error


def tiny_model(seed=0):
    vocab = Vocab(("Age", "Blood", "loss", "mL", "Dose"), n_buckets=8)
    encoder = EncoderModel(vocab, d=16, heads=2, n_layers=1, max_len=48, seed=seed)
    embedder = MagnitudeEmbedder.create(16, 0.0, 1000.0, seed=seed)
    return NumericModel(encoder, embedder, seed=seed)


class TestBucketClass:
    def test_small_magnitudes_share_bucket_zero(self):
        assert bucket_class(0.0) == 0
        assert bucket_class(5.0) == 0
        assert bucket_class(8.9) == 0

    def test_bucket_boundaries_follow_log10_of_shifted_value(self):
        assert bucket_class(9.0) == 1
        assert bucket_class(99.0) == 2
        assert bucket_class(999.0) == 3

    def test_huge_values_clamp_to_top_bucket(self):
        assert bucket_class(1e12) == 7

    def test_sign_offsets_by_eight(self):
        assert bucket_class(-5.0) == 8
        assert bucket_class(-999.0) == 11
        assert bucket_class(-1e12) == 15


class TestGatherFuseScatter:
    def test_no_numerals_gives_empty_matrix(self):
        states = torch.randn(4, 8, dtype=torch.float64)
        assert gather_numerals(states, []).shape == (0, 8)

    def test_single_position_picks_that_row(self):
        states = torch.randn(4, 8, dtype=torch.float64)
        assert torch.equal(gather_numerals(states, [2])[0], states[2])

    def test_out_of_bounds_rejected(self):
        states = torch.zeros(4, 8, dtype=torch.float64)
        with pytest.raises(IndexOutOfBounds):
            gather_numerals(states, [4])

    def test_gather_then_scatter_is_identity(self):
        states = torch.randn(6, 8, dtype=torch.float64)
        rows = gather_numerals(states, [1, 3, 5])
        assert torch.equal(scatter_refined(states, [1, 3, 5], rows), states)

    def test_fuse_with_zero_is_identity(self):
        m_e = torch.randn(3, 8, dtype=torch.float64)
        assert torch.equal(fuse(m_e, torch.zeros_like(m_e)), m_e)

    def test_fuse_commutes(self):
        a = torch.randn(3, 8, dtype=torch.float64)
        b = torch.randn(3, 8, dtype=torch.float64)
        assert torch.equal(fuse(a, b), fuse(b, a))

    def test_fuse_shape_mismatch_rejected(self):
        with pytest.raises(ShapeMismatch):
            fuse(torch.zeros(3, 8), torch.zeros(2, 8))

    def test_scatter_row_count_mismatch_rejected(self):
        states = torch.zeros(4, 8, dtype=torch.float64)
        with pytest.raises(ShapeMismatch):
            scatter_refined(states, [0, 1], torch.zeros(3, 8, dtype=torch.float64))

    def test_scatter_keeps_untouched_rows_bit_identical(self):
        states = torch.randn(5, 8, dtype=torch.float64)
        new_rows = torch.randn(2, 8, dtype=torch.float64)
        out = scatter_refined(states, [1, 3], new_rows)
        for i in (0, 2, 4):
            assert torch.equal(out[i], states[i])
        assert torch.equal(out[1], new_rows[0])
        assert torch.equal(out[3], new_rows[1])


class TestRefineSequence:
    def test_no_numerals_passes_encoder_states_through(self):
        m = tiny_model()
        seq = serialize_column("Age", ["F"])
        states, m_o = m.refine_sequence(seq)
        assert m_o.shape == (0, 16)
        assert torch.equal(states, m.encoder.encode(seq))

    def test_numeral_rows_are_refined(self):
        m = tiny_model()
        seq = serialize_column("Age", ["28"])
        base = m.encoder.encode(seq)
        states, _ = m.refine_sequence(seq)
        p = seq.numeral_positions[0] if seq.ids else None
        tok = m.encoder.tokenize(seq)
        p = tok.numeral_positions[0]
        assert not torch.allclose(states[p], base[p])

    def test_non_numeral_rows_are_bit_identical(self):
        m = tiny_model()
        seq = m.encoder.tokenize(serialize_column("Blood loss", ["3,000 mL", "250 mL"]))
        base = m.encoder.encode(seq)
        states, _ = m.refine_sequence(seq)
        numeral = set(seq.numeral_positions)
        for i in range(len(seq)):
            if i not in numeral:
                assert torch.equal(states[i], base[i])

    def test_masked_numeral_feeds_zero_magnitude_row(self):
        m = tiny_model()
        rows = m.magnitude_rows([5.0, 7.0], masked=frozenset({1}))
        assert torch.all(rows[1] == 0)
        expected = torch.from_numpy(m.embedder.batch_embed([5.0])) * m.gain
        assert torch.allclose(rows[0], expected[0])

    def test_masked_numeral_token_becomes_mask_id(self):
        m = tiny_model()
        seq = m.encoder.tokenize(serialize_column("Age", ["28", "31"]))
        j = 1
        p = seq.numeral_positions[j]
        ids = torch.tensor(seq.ids, dtype=torch.long)
        ids[p] = MASK_ID
        masked_states = m.encoder.encode_ids(ids)
        states, _ = m.refine_sequence(seq, masked=frozenset({j}))
        other_token_rows = [
            i for i in range(len(seq)) if i not in set(seq.numeral_positions)
        ]
        for i in other_token_rows:
            assert torch.equal(states[i], masked_states[i])

    def test_refine_empty_matrix_is_noop(self):
        m = tiny_model()
        empty = torch.zeros(0, 16, dtype=torch.float64)
        assert refine(empty, m.refiner).shape == (0, 16)

    def test_embedder_dim_must_match(self):
        vocab = Vocab(("Age",), n_buckets=4)
        enc = EncoderModel(vocab, d=16, heads=2, n_layers=1, max_len=16)
        bad = MagnitudeEmbedder.create(8, 0.0, 100.0)
        with pytest.raises(ShapeMismatch):
            NumericModel(enc, bad)


class TestNumeralLoss:
    def test_exact_prediction_gives_near_zero_loss(self):
        y = torch.tensor([2.0, 30.0], dtype=torch.float64)
        c = torch.tensor([0, 1])
        logits = torch.full((2, 16), -50.0, dtype=torch.float64)
        logits[0, 0] = 50.0
        logits[1, 1] = 50.0
        assert float(numeral_loss(y, logits, y, c)) < 1e-6

    def test_one_unit_log_error_costs_one(self):
        y = torch.tensor([1.0], dtype=torch.float64)
        y_hat = torch.tensor([math.e], dtype=torch.float64)
        c = torch.tensor([0])
        logits = torch.full((1, 16), -50.0, dtype=torch.float64)
        logits[0, 0] = 50.0
        assert float(numeral_loss(y_hat, logits, y, c)) == pytest.approx(1.0, abs=1e-9)

    def test_loss_is_non_negative(self):
        gen = torch.Generator().manual_seed(5)
        y = torch.rand(8, generator=gen, dtype=torch.float64) * 100 + 0.1
        y_hat = torch.rand(8, generator=gen, dtype=torch.float64) * 100 + 0.1
        logits = torch.randn(8, 16, generator=gen, dtype=torch.float64)
        c = torch.randint(0, 16, (8,), generator=gen)
        assert float(numeral_loss(y_hat, logits, y, c)) >= 0.0

    def test_non_positive_magnitude_rejected(self):
        logits = torch.zeros(1, 16, dtype=torch.float64)
        c = torch.tensor([0])
        bad = torch.tensor([0.0], dtype=torch.float64)
        good = torch.tensor([1.0], dtype=torch.float64)
        with pytest.raises(NonPositiveMagnitude):
            numeral_loss(bad, logits, good, c)
        with pytest.raises(NonPositiveMagnitude):
            numeral_loss(good, logits, bad, c)

    def test_shape_mismatch_rejected(self):
        logits = torch.zeros(2, 16, dtype=torch.float64)
        with pytest.raises(ShapeMismatch):
            numeral_loss(
                torch.ones(2, dtype=torch.float64),
                logits,
                torch.ones(3, dtype=torch.float64),
                torch.tensor([0, 0, 0]),
            )


class TestTraining:
    def test_corpus_without_numerals_rejected(self):
        m = tiny_model()
        with pytest.raises(EmptyCorpus):
            train(m, [serialize_column("Age", ["F", "M"])])

    def test_loss_decreases_on_single_sequence(self):
        m = tiny_model(seed=1)
        corpus = [serialize_column("Age", ["28"])]
        trace = train(m, corpus, TrainConfig(steps=200, batch_size=4, lr=2e-3, seed=1))
        active = [r.loss for r in trace if r.loss > 0]
        assert len(trace) == 200
        assert active[-1] < active[0]
        tail = sum(active[-10:]) / 10
        head = sum(active[:10]) / 10
        assert tail < head

    def test_identical_seeds_identical_traces(self):
        corpus = [
            serialize_column("Age", ["28", "31"]),
            serialize_column("Dose", ["5 mL", "12 mL"]),
        ]
        t1 = train(tiny_model(seed=2), corpus, TrainConfig(steps=30, seed=9))
        t2 = train(tiny_model(seed=2), corpus, TrainConfig(steps=30, seed=9))
        assert t1 == t2

    def test_different_seeds_differ(self):
        corpus = [serialize_column("Age", ["28", "31"])]
        t1 = train(tiny_model(seed=2), corpus, TrainConfig(steps=30, seed=9))
        t2 = train(tiny_model(seed=2), corpus, TrainConfig(steps=30, seed=10))
        assert t1 != t2

    def test_frozen_encoder_leaves_encoder_parameters_unchanged(self):
        m = tiny_model(seed=3)
        before = [p.detach().clone() for p in m.encoder.parameters()]
        corpus = [serialize_column("Age", ["28", "31"])]
        train(m, corpus, TrainConfig(steps=20, freeze_encoder=True))
        for p, b in zip(m.encoder.parameters(), before):
            assert torch.equal(p, b)

    def test_mask_probability_validated(self):
        with pytest.raises(ValueError):
            TrainConfig(mask_p=0.0)
        with pytest.raises(ValueError):
            TrainConfig(mask_p=1.0)
        with pytest.raises(ValueError):
            TrainConfig(steps=0)

    def test_trace_csv_layout(self, tmp_path):
        m = tiny_model()
        corpus = [serialize_column("Age", ["28"])]
        trace = train(m, corpus, TrainConfig(steps=5))
        path = tmp_path / "trace.csv"
        write_trace(trace, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "step,loss,mag_loss,cls_loss"
        assert len(lines) == 6
        assert lines[1].startswith("0,")


class TestMagnitudeEval:
    def test_counts_every_numeral_once(self):
        m = tiny_model()
        corpus = [
            serialize_column("Age", ["28", "31"]),
            serialize_column("Dose", ["5 mL"]),
        ]
        result = evaluate_magnitude(m, corpus)
        assert isinstance(result, MagnitudeEval)
        assert result.count == 3
        assert math.isfinite(result.model_rmse)
        assert math.isfinite(result.baseline_rmse)

    def test_empty_corpus_rejected(self):
        with pytest.raises(EmptyCorpus):
            evaluate_magnitude(tiny_model(), [])

    def test_baseline_uses_supplied_mean(self):
        m = tiny_model()
        corpus = [serialize_column("Age", ["28"])]
        truth = math.log1p(28.0)
        r = evaluate_magnitude(m, corpus, baseline_mean=truth)
        assert r.baseline_rmse == 0.0


class TestFusionGradients:
    def test_fusion_loss_matches_finite_differences(self):
        m = tiny_model(seed=4)
        gen = torch.Generator().manual_seed(11)
        with torch.no_grad():
            for p in m.parameters():
                p.normal_(0.0, 0.4, generator=gen)
        seq = m.encoder.tokenize(serialize_column("Age", ["28", "31"]))
        masked = frozenset({0, 1})

        def loss():
            from conevec.fusion import _sequence_loss

            mag, ce = _sequence_loss(m, seq, masked)
            return mag + ce

        params = (
            list(m.refiner.parameters())
            + list(m.mag_head.parameters())
            + list(m.cls_head.parameters())
        )
        assert worst_relative_error(loss, params) < 1e-3


class TestCheckpoint:
    def test_round_trip_is_byte_stable(self, tmp_path):
        m = tiny_model(seed=5)
        p1 = tmp_path / "a.bin"
        p2 = tmp_path / "b.bin"
        save_model(m, p1)
        loaded = load_model(p1)
        save_model(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_loaded_model_reproduces_states_closely(self, tmp_path):
        m = tiny_model(seed=5)
        path = tmp_path / "m.bin"
        save_model(m, path)
        loaded = load_model(path)
        seq = serialize_column("Blood loss", ["3,000 mL"])
        a = m.refined_states(seq)
        b = loaded.refined_states(seq)
        assert torch.allclose(a, b, atol=1e-4)

    def test_loaded_model_is_self_consistent(self, tmp_path):
        m = tiny_model(seed=5)
        path = tmp_path / "m.bin"
        save_model(m, path)
        seq = serialize_column("Age", ["28"])
        a = load_model(path).refined_states(seq)
        b = load_model(path).refined_states(seq)
        assert torch.equal(a, b)

    def test_export_strips_heads(self, tmp_path):
        m = tiny_model(seed=6)
        path = tmp_path / "m.bin"
        save_model(m, path, include_heads=False)
        loaded = load_model(path)
        assert loaded.has_heads is False
        assert torch.all(loaded.mag_head.weight == 0)
        full = tmp_path / "full.bin"
        save_model(m, full)
        assert path.stat().st_size < full.stat().st_size

    def test_encoder_only_checkpoint(self, tmp_path):
        enc = EncoderModel(Vocab(("Age",), 4), d=16, heads=2, n_layers=1, max_len=16)
        path = tmp_path / "enc.bin"
        save_model(enc, path)
        loaded = load_model(path)
        assert isinstance(loaded, EncoderModel)
        assert loaded.vocab.words == ("Age",)
        seq = serialize_column("Age", ["28"])
        assert torch.allclose(enc.encode(seq), loaded.encode(seq), atol=1e-4)

    def test_vocab_survives_round_trip(self, tmp_path):
        m = tiny_model()
        path = tmp_path / "m.bin"
        save_model(m, path)
        loaded = load_model(path)
        assert loaded.encoder.vocab.words == m.encoder.vocab.words
        assert loaded.encoder.vocab.n_buckets == m.encoder.vocab.n_buckets

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTAMODL" + b"\0" * 64)
        from conevec.errors import CorruptFile

        with pytest.raises(CorruptFile):
            load_model(path)

    def test_truncation_rejected(self, tmp_path):
        m = tiny_model()
        path = tmp_path / "m.bin"
        save_model(m, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        from conevec.errors import CorruptFile

        with pytest.raises(CorruptFile):
            load_model(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        m = tiny_model()
        path = tmp_path / "m.bin"
        save_model(m, path)
        path.write_bytes(path.read_bytes() + b"\0\0")
        from conevec.errors import CorruptFile

        with pytest.raises(CorruptFile):
            load_model(path)
