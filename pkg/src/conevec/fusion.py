"""Numeral fusion: magnitude-aware refinement of encoder states.

The refinement path gathers the contextual rows at numeral positions,
adds scaled magnitude embeddings, passes the stack through one dedicated
attention block, and scatters the refined rows back. Training masks a
random subset of numerals and asks two small heads to recover each
masked value's log magnitude and magnitude bucket from context alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import torch
from torch import nn

from conevec.encoder import (
    MASK_ID,
    AttentionLayer,
    EncoderModel,
    init_seeded,
)
from conevec.errors import (
    DivergenceDetected,
    EmptyCorpus,
    IndexOutOfBounds,
    NonPositiveMagnitude,
    ShapeMismatch,
)
from conevec.magnitude import MagnitudeEmbedder
from conevec.serialize import TokenSequence

N_CLASSES = 16
_N_BUCKETS = 8


def bucket_class(y: float) -> int:
    """Order-of-magnitude bucket with the sign folded into the high bit."""
    mag = min(_N_BUCKETS - 1, max(0, int(math.floor(math.log10(1.0 + abs(y))))))
    return mag + _N_BUCKETS * (y < 0)


def gather_numerals(states: torch.Tensor, positions: Sequence[int]) -> torch.Tensor:
    """Rows of an l×d state matrix at the numeral positions, in order."""
    l = states.shape[0]
    for p in positions:
        if not 0 <= p < l:
            raise IndexOutOfBounds(f"position {p} outside sequence of length {l}")
    if not positions:
        return states.new_zeros((0, states.shape[1]))
    return states[list(positions)]


def fuse(m_e: torch.Tensor, m_n: torch.Tensor) -> torch.Tensor:
    """Elementwise sum of contextual and magnitude numeral matrices."""
    if m_e.shape != m_n.shape:
        raise ShapeMismatch(f"cannot fuse {tuple(m_e.shape)} with {tuple(m_n.shape)}")
    return m_e + m_n


def refine(m_f: torch.Tensor, block: AttentionLayer) -> torch.Tensor:
    """One attention block over the s×d fused numeral matrix."""
    if m_f.shape[0] == 0:
        return m_f
    return block(m_f)


def scatter_refined(
    states: torch.Tensor, positions: Sequence[int], m_o: torch.Tensor
) -> torch.Tensor:
    """Copy of the state matrix with numeral rows replaced by refined rows.

    Non-numeral rows are carried over untouched, bit for bit.
    """
    if m_o.shape[0] != len(positions):
        raise ShapeMismatch(
            f"{m_o.shape[0]} refined rows for {len(positions)} positions"
        )
    if m_o.shape[0] and m_o.shape[1] != states.shape[1]:
        raise ShapeMismatch(f"row width {m_o.shape[1]} != state width {states.shape[1]}")
    out = states.clone()
    if positions:
        out[list(positions)] = m_o
    return out


def numeral_loss(
    y_hat: torch.Tensor,
    c_logits: torch.Tensor,
    y: torch.Tensor,
    c: torch.Tensor,
) -> torch.Tensor:
    """Summed log-magnitude regression plus bucket cross-entropy.

    Magnitudes arrive already shifted (1 + |value|), so they must be
    strictly positive.
    """
    if y_hat.shape != y.shape:
        raise ShapeMismatch(f"{tuple(y_hat.shape)} predictions for {tuple(y.shape)}")
    if c_logits.shape[0] != c.shape[0]:
        raise ShapeMismatch(
            f"{c_logits.shape[0]} logit rows for {c.shape[0]} class targets"
        )
    if bool((y <= 0).any()) or bool((y_hat <= 0).any()):
        raise NonPositiveMagnitude("shifted magnitudes must be > 0")
    mag = ((torch.log(y) - torch.log(y_hat)) ** 2).sum()
    ce = nn.functional.cross_entropy(c_logits, c, reduction="sum")
    return mag + ce


class NumericModel(nn.Module):
    """Encoder plus the fusion block and its two prediction heads.

    The magnitude embedder is analytic and carries no gradient; its output
    is scaled by sqrt(d) before fusion so magnitude changes register on
    the same footing as token-content changes.
    """

    def __init__(
        self,
        encoder: EncoderModel,
        embedder: MagnitudeEmbedder,
        seed: int = 0,
        n_classes: int = N_CLASSES,
        use_magnitude: bool = True,
    ):
        super().__init__()
        if embedder.dim != encoder.d:
            raise ShapeMismatch(
                f"embedder dim {embedder.dim} != encoder dim {encoder.d}"
            )
        if n_classes < 2:
            raise ValueError("need at least two magnitude classes")
        self.encoder = encoder
        self.embedder = embedder
        self.gain = math.sqrt(encoder.d)
        self.has_heads = True
        # Ablation switch: with magnitude off every numeral fuses a zero
        # row, leaving only token content. Not persisted by checkpoints,
        # so disabled models should stay in memory.
        self.use_magnitude = use_magnitude
        self.refiner = AttentionLayer(encoder.d, encoder.heads)
        self.mag_head = nn.Linear(encoder.d, 1, dtype=torch.float64)
        self.cls_head = nn.Linear(encoder.d, n_classes, dtype=torch.float64)
        init_seeded(self.refiner, seed)
        init_seeded(self.mag_head, seed + 1)
        init_seeded(self.cls_head, seed + 2)

    @property
    def d(self) -> int:
        return self.encoder.d

    @property
    def n_classes(self) -> int:
        return self.cls_head.out_features

    def magnitude_rows(
        self, values: Sequence[float], masked: frozenset[int] = frozenset()
    ) -> torch.Tensor:
        """Scaled magnitude embeddings, with masked rows forced to zero."""
        rows = torch.zeros((len(values), self.d), dtype=torch.float64)
        if not self.use_magnitude:
            return rows
        keep = [v for i, v in enumerate(values) if i not in masked]
        if keep:
            emb = torch.from_numpy(self.embedder.batch_embed(keep))
            rows[[i for i in range(len(values)) if i not in masked]] = emb * self.gain
        return rows

    def refine_sequence(
        self, seq: TokenSequence, masked: frozenset[int] = frozenset()
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Full forward for one sequence: returns (E^O, M^O).

        masked indexes into the sequence's numeral list; masked numerals
        have their token replaced by [MASK] and contribute a zero
        magnitude row, so their value never leaks into the forward pass.
        """
        if seq.ids is None:
            seq = self.encoder.tokenize(seq)
        ids = torch.tensor(seq.ids, dtype=torch.long)
        if masked:
            for j in masked:
                ids[seq.numeral_positions[j]] = MASK_ID
        states = self.encoder.encode_ids(ids)
        positions = list(seq.numeral_positions)
        m_e = gather_numerals(states, positions)
        m_n = self.magnitude_rows(seq.numeral_values, masked)
        m_o = refine(fuse(m_e, m_n), self.refiner)
        return scatter_refined(states, positions, m_o), m_o

    def refined_states(self, seq: TokenSequence) -> torch.Tensor:
        """E^O for inference: no masking, all magnitudes visible."""
        states, _ = self.refine_sequence(seq)
        return states

    def predict_heads(self, m_o: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Log-magnitude scores and class logits for refined numeral rows."""
        return self.mag_head(m_o).squeeze(-1), self.cls_head(m_o)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 500
    batch_size: int = 8
    lr: float = 2e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    mask_p: float = 0.3
    seed: int = 0
    divergence_limit: float = 1e9
    freeze_encoder: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.mask_p < 1.0:
            raise ValueError("mask_p must lie strictly between 0 and 1")
        if self.steps <= 0:
            raise ValueError("steps must be positive")


@dataclass(frozen=True)
class TraceRow:
    step: int
    loss: float
    mag_loss: float
    cls_loss: float


def _sequence_loss(
    model: NumericModel, seq: TokenSequence, masked: frozenset[int]
) -> tuple[torch.Tensor, torch.Tensor]:
    _, m_o = model.refine_sequence(seq, masked)
    rows = sorted(masked)
    s_pred, logits = model.predict_heads(m_o[rows])
    values = [seq.numeral_values[j] for j in rows]
    s_true = torch.tensor(
        [math.log1p(abs(v)) for v in values], dtype=torch.float64
    )
    classes = torch.tensor([bucket_class(v) for v in values], dtype=torch.long)
    mag = ((s_true - s_pred) ** 2).sum()
    ce = nn.functional.cross_entropy(logits, classes, reduction="sum")
    return mag, ce


def train(
    model: NumericModel,
    corpus: Iterable[TokenSequence],
    cfg: TrainConfig = TrainConfig(),
) -> list[TraceRow]:
    """Masked numeral prediction over a corpus of serialized sequences.

    Returns the per-step loss trace; the model is updated in place.
    Identical seeds give identical traces.
    """
    sequences = [
        s if s.ids is not None else model.encoder.tokenize(s) for s in corpus
    ]
    sequences = [s for s in sequences if s.numeral_positions]
    if not sequences:
        raise EmptyCorpus("no sequences with numerals to train on")
    if cfg.freeze_encoder:
        params = (
            list(model.refiner.parameters())
            + list(model.mag_head.parameters())
            + list(model.cls_head.parameters())
        )
    else:
        params = list(model.parameters())
    opt = torch.optim.Adam(params, lr=cfg.lr, betas=cfg.betas, eps=cfg.eps)
    gen = torch.Generator().manual_seed(cfg.seed)
    trace: list[TraceRow] = []
    for step in range(cfg.steps):
        picks = torch.randint(len(sequences), (cfg.batch_size,), generator=gen)
        mag_total = torch.zeros((), dtype=torch.float64)
        cls_total = torch.zeros((), dtype=torch.float64)
        any_masked = False
        for i in picks.tolist():
            seq = sequences[i]
            n = len(seq.numeral_positions)
            draw = torch.rand(n, generator=gen, dtype=torch.float64)
            masked = frozenset((draw < cfg.mask_p).nonzero().flatten().tolist())
            if not masked:
                continue
            any_masked = True
            mag, ce = _sequence_loss(model, seq, masked)
            mag_total = mag_total + mag
            cls_total = cls_total + ce
        if not any_masked:
            trace.append(TraceRow(step, 0.0, 0.0, 0.0))
            continue
        total = mag_total + cls_total
        loss_val = float(total.detach())
        if not math.isfinite(loss_val) or loss_val > cfg.divergence_limit:
            raise DivergenceDetected(f"loss {loss_val} at step {step}")
        opt.zero_grad()
        total.backward()
        opt.step()
        trace.append(
            TraceRow(
                step,
                loss_val,
                float(mag_total.detach()),
                float(cls_total.detach()),
            )
        )
    return trace


def write_trace(trace: Sequence[TraceRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("step,loss,mag_loss,cls_loss\n")
        for row in trace:
            fh.write(
                f"{row.step},{row.loss:.12g},{row.mag_loss:.12g},{row.cls_loss:.12g}\n"
            )


@dataclass(frozen=True)
class MagnitudeEval:
    model_rmse: float
    baseline_rmse: float
    count: int


def evaluate_magnitude(
    model: NumericModel,
    sequences: Iterable[TokenSequence],
    baseline_mean: float | None = None,
) -> MagnitudeEval:
    """Leave-one-out masked magnitude prediction versus a constant guess.

    Each numeral is masked in turn and the magnitude head's log-space
    error is accumulated. The baseline predicts one fixed log magnitude
    for everything (the training-set mean when supplied, else the mean
    over these sequences).
    """
    seqs = [
        s if s.ids is not None else model.encoder.tokenize(s) for s in sequences
    ]
    seqs = [s for s in seqs if s.numeral_positions]
    if not seqs:
        raise EmptyCorpus("nothing to evaluate")
    truths = [
        math.log1p(abs(v)) for s in seqs for v in s.numeral_values
    ]
    if baseline_mean is None:
        baseline_mean = sum(truths) / len(truths)
    model_sq = 0.0
    base_sq = 0.0
    count = 0
    with torch.no_grad():
        for seq in seqs:
            for j, value in enumerate(seq.numeral_values):
                _, m_o = model.refine_sequence(seq, frozenset({j}))
                s_pred = float(model.mag_head(m_o[j]).squeeze())
                s_true = math.log1p(abs(value))
                model_sq += (s_pred - s_true) ** 2
                base_sq += (baseline_mean - s_true) ** 2
                count += 1
    return MagnitudeEval(
        math.sqrt(model_sq / count), math.sqrt(base_sq / count), count
    )


def corpus_log_mean(sequences: Iterable[TokenSequence]) -> float:
    vals = [math.log1p(abs(v)) for s in sequences for v in s.numeral_values]
    if not vals:
        raise EmptyCorpus("no numerals in corpus")
    return sum(vals) / len(vals)
