"""Composite cell embeddings: fixed slots, masks, and linear projection.

A parsed cell turns into up to five d-dimensional components laid out as
[attribute, value1, value2, value3, unit]. Scalars occupy one value
slot; ranges put center and length in the first two; gaussians spread
mean−sd, mean, mean+sd across all three. Absent components stay zero
with their mask bit off. A tied linear autoencoder, trained on masked
reconstruction, projects the 5d block down to the composite vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import torch
from torch import nn

from conevec.cells import Gaussian, Range, Scalar, Text
from conevec.cells import ParsedCell
from conevec.errors import (
    DivergenceDetected,
    DuplicateSlot,
    EmptyCorpus,
    ShapeMismatch,
    TextCellUnsupported,
)
from conevec.fusion import NumericModel
from conevec.serialize import format_number, serialize_text

SLOT_NAMES = ("attr", "value1", "value2", "value3", "unit")
N_SLOTS = len(SLOT_NAMES)

LAYOUTS = {
    "bare": frozenset({"attr", "unit"}),
    "scalar": frozenset({"attr", "value1", "unit"}),
    "range": frozenset({"attr", "value1", "value2", "unit"}),
    "gaussian": frozenset(SLOT_NAMES),
}

_VALUE_LAYOUTS = {
    frozenset(): "bare",
    frozenset({"value1"}): "scalar",
    frozenset({"value1", "value2"}): "range",
    frozenset({"value1", "value2", "value3"}): "gaussian",
}


@dataclass(frozen=True)
class SlotBlock:
    """Concatenated slot vector with its per-slot mask and layout tag.

    The constructor checks shape and layout consistency but not the
    masked-slots-are-zero convention; assemble() guarantees it, and
    keeping the constructor permissive lets tests inject garbage into
    masked regions to prove it cannot matter.
    """

    vector: torch.Tensor
    mask: tuple[int, int, int, int, int]
    layout: str

    def __post_init__(self) -> None:
        if self.vector.dim() != 1 or self.vector.numel() % N_SLOTS:
            raise ShapeMismatch(
                f"slot vector must be flat with width divisible by {N_SLOTS}"
            )
        if len(self.mask) != N_SLOTS or any(b not in (0, 1) for b in self.mask):
            raise ValueError("mask must be 5 binary flags")
        allowed = LAYOUTS.get(self.layout)
        if allowed is None:
            raise ValueError(f"unknown layout {self.layout!r}")
        active = {SLOT_NAMES[i] for i, b in enumerate(self.mask) if b}
        if not active <= allowed:
            raise ValueError(f"slots {sorted(active)} not allowed in {self.layout}")

    @property
    def d(self) -> int:
        return self.vector.numel() // N_SLOTS

    def slot(self, name: str) -> torch.Tensor:
        i = SLOT_NAMES.index(name)
        return self.vector[i * self.d : (i + 1) * self.d]

    def mask_vector(self) -> torch.Tensor:
        """The mask broadcast across slot segments, as a flat 5d vector."""
        bits = torch.tensor(self.mask, dtype=self.vector.dtype)
        return bits.repeat_interleave(self.d)


def attr_embedding(model: NumericModel, text: str) -> torch.Tensor:
    """Mean of the refined hidden rows over the attribute's words."""
    seq = serialize_text(text)
    if len(seq) <= 2:
        raise ValueError(f"attribute {text!r} renders to no words")
    states = model.refined_states(seq)
    return states[1:-1].mean(dim=0)


def value_embedding(model: NumericModel, x: float) -> torch.Tensor:
    """Refined numeral embedding of a bare value in minimal context."""
    seq = serialize_text(format_number(x))
    _, m_o = model.refine_sequence(seq)
    if m_o.shape[0] != 1:
        raise ValueError(f"value {x!r} did not render to one numeral")
    return m_o[0]


def unit_embedding(model: NumericModel, unit: str) -> torch.Tensor:
    """Token-table embedding of a canonical unit (multi-word mean-pooled)."""
    words = unit.split()
    if not words:
        raise ValueError("empty unit")
    ids = torch.tensor(
        [model.encoder.vocab.id_of(w) for w in words], dtype=torch.long
    )
    return model.encoder.tok_emb(ids).mean(dim=0)


def component_embeddings(
    cell: ParsedCell, model: NumericModel
) -> list[tuple[str, torch.Tensor]]:
    """Slot components for one parsed cell, in slot order.

    Text cells have no value decomposition; callers that still want a
    block fall back to cell_block(), which keeps attribute and unit.
    """
    if isinstance(cell.kind, Text):
        raise TextCellUnsupported(f"no numeric payload in {cell.kind.raw!r}")
    comps: list[tuple[str, torch.Tensor]] = []
    with torch.no_grad():
        if cell.attribute:
            comps.append(("attr", attr_embedding(model, cell.attribute)))
        kind = cell.kind
        if isinstance(kind, Scalar):
            comps.append(("value1", value_embedding(model, kind.x)))
        elif isinstance(kind, Range):
            comps.append(("value1", value_embedding(model, kind.center)))
            comps.append(("value2", value_embedding(model, kind.length)))
        elif isinstance(kind, Gaussian):
            comps.append(("value1", value_embedding(model, kind.mean - kind.sd)))
            comps.append(("value2", value_embedding(model, kind.mean)))
            comps.append(("value3", value_embedding(model, kind.mean + kind.sd)))
        if cell.unit:
            comps.append(("unit", unit_embedding(model, cell.unit)))
    return comps


def assemble(
    components: Sequence[tuple[str, torch.Tensor]], d: int | None = None
) -> SlotBlock:
    """Zero-padded slot block from named components; layout is inferred
    from which value slots are present."""
    seen: dict[str, torch.Tensor] = {}
    for name, vec in components:
        if name not in SLOT_NAMES:
            raise ValueError(f"unknown slot {name!r}")
        if name in seen:
            raise DuplicateSlot(f"slot {name!r} supplied twice")
        if vec.dim() != 1:
            raise ShapeMismatch(f"component {name!r} must be a flat vector")
        if d is None:
            d = vec.numel()
        elif vec.numel() != d:
            raise ShapeMismatch(
                f"component {name!r} has width {vec.numel()}, expected {d}"
            )
        seen[name] = vec
    if d is None:
        raise ValueError("cannot infer slot width from zero components")
    values = frozenset(n for n in seen if n.startswith("value"))
    layout = _VALUE_LAYOUTS.get(values)
    if layout is None:
        raise ValueError(f"value slots {sorted(values)} do not form a layout")
    vector = torch.zeros(N_SLOTS * d, dtype=torch.float64)
    mask = [0] * N_SLOTS
    for i, name in enumerate(SLOT_NAMES):
        if name in seen:
            vector[i * d : (i + 1) * d] = seen[name].to(torch.float64)
            mask[i] = 1
    return SlotBlock(vector, tuple(mask), layout)


def cell_block(cell: ParsedCell, model: NumericModel) -> SlotBlock:
    """Block for any cell; Text cells keep only attribute and unit slots."""
    try:
        comps = component_embeddings(cell, model)
    except TextCellUnsupported:
        comps = []
        with torch.no_grad():
            if cell.attribute:
                comps.append(("attr", attr_embedding(model, cell.attribute)))
            if cell.unit:
                comps.append(("unit", unit_embedding(model, cell.unit)))
    return assemble(comps, d=model.d)


class Autoencoder(nn.Module):
    """Tied linear autoencoder: encode z = W(M⊙E), decode Ê = WᵀW(M⊙E).

    The composite output is a layer-normalized z; the normalization gain
    and bias stay fixed at identity unless learnable_norm is set.
    """

    def __init__(
        self,
        in_dim: int,
        d_c: int = 64,
        seed: int = 0,
        learnable_norm: bool = False,
        eps: float = 1e-5,
    ):
        super().__init__()
        if in_dim % N_SLOTS:
            raise ShapeMismatch(f"input width {in_dim} is not {N_SLOTS} slots")
        self.in_dim = in_dim
        self.d_c = d_c
        self.eps = eps
        self.learnable_norm = learnable_norm
        gen = torch.Generator().manual_seed(seed)
        w = torch.empty(d_c, in_dim, dtype=torch.float64)
        w.normal_(0.0, in_dim**-0.5, generator=gen)
        self.W = nn.Parameter(w)
        gain = torch.ones(d_c, dtype=torch.float64)
        bias = torch.zeros(d_c, dtype=torch.float64)
        if learnable_norm:
            self.norm_gain = nn.Parameter(gain)
            self.norm_bias = nn.Parameter(bias)
        else:
            self.register_buffer("norm_gain", gain)
            self.register_buffer("norm_bias", bias)

    def encode(self, masked_vector: torch.Tensor) -> torch.Tensor:
        return self.W @ masked_vector

    def reconstruct(self, masked_vector: torch.Tensor) -> torch.Tensor:
        return self.W.T @ self.encode(masked_vector)


def _masked(block: SlotBlock, ae: Autoencoder) -> torch.Tensor:
    if block.vector.numel() != ae.in_dim:
        raise ShapeMismatch(
            f"block width {block.vector.numel()} != autoencoder input {ae.in_dim}"
        )
    return block.mask_vector() * block.vector


def project(block: SlotBlock, ae: Autoencoder) -> torch.Tensor:
    """Composite embedding: normalized projection of the masked block."""
    z = ae.encode(_masked(block, ae))
    return nn.functional.layer_norm(
        z, (ae.d_c,), ae.norm_gain, ae.norm_bias, ae.eps
    )


def ae_loss(block: SlotBlock, ae: Autoencoder) -> torch.Tensor:
    """Masked reconstruction error of one block."""
    m = block.mask_vector()
    e = block.vector
    e_hat = ae.reconstruct(m * e)
    return ((m * (e_hat - e)) ** 2).sum()


@dataclass(frozen=True)
class AETrainConfig:
    steps: int = 300
    lr: float = 3e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    d_c: int = 64
    learnable_norm: bool = False
    divergence_limit: float = 1e12

    def __post_init__(self) -> None:
        if self.steps <= 0:
            raise ValueError("steps must be positive")


def train_autoencoder(
    blocks: Iterable[SlotBlock], cfg: AETrainConfig = AETrainConfig()
) -> tuple[Autoencoder, list[tuple[int, float]]]:
    """Full-batch gradient descent on the summed masked reconstruction
    loss; returns the trained autoencoder and its per-step loss trace."""
    blocks = list(blocks)
    if not blocks:
        raise EmptyCorpus("no blocks to train on")
    widths = {b.vector.numel() for b in blocks}
    if len(widths) != 1:
        raise ShapeMismatch(f"mixed block widths {sorted(widths)}")
    (in_dim,) = widths
    ae = Autoencoder(
        in_dim, d_c=cfg.d_c, seed=cfg.seed, learnable_norm=cfg.learnable_norm
    )
    e = torch.stack([b.vector for b in blocks])
    m = torch.stack([b.mask_vector() for b in blocks])
    me = m * e
    opt = torch.optim.Adam(ae.parameters(), lr=cfg.lr, betas=cfg.betas, eps=cfg.eps)
    trace: list[tuple[int, float]] = []
    for step in range(cfg.steps):
        e_hat = me @ ae.W.T @ ae.W
        loss = ((m * (e_hat - e)) ** 2).sum()
        val = float(loss.detach())
        if not math.isfinite(val) or val > cfg.divergence_limit:
            raise DivergenceDetected(f"loss {val} at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        trace.append((step, val))
    return ae, trace


def write_ae_trace(trace: Sequence[tuple[int, float]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("step,loss\n")
        for step, loss in trace:
            fh.write(f"{step},{loss:.12g}\n")
