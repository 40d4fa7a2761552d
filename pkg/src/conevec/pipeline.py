"""End-to-end steps behind the command line.

Each function here does one command's worth of work against the library
modules, so tests can drive the exact same paths in process. File layout
conventions (ids, sidecar metadata, report names) live here too.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .audits import (
    GaussianAuditConfig,
    NumberAuditConfig,
    RangeAuditConfig,
    RotationRow,
    correlation_audit,
    random_embedding,
    rotation_ablation,
)
from .cells import ParsedCell, Text
from .checkpoint import (
    load_autoencoder,
    load_model,
    save_autoencoder,
    save_model,
)
from .composite import (
    AETrainConfig,
    Autoencoder,
    SlotBlock,
    assemble,
    attr_embedding,
    cell_block,
    project,
    train_autoencoder,
)
from .config import Config, substream
from .encoder import EncoderModel, Vocab
from .errors import CorruptFile, EmptyCorpus, SequenceTooLong, UnknownQueryId
from .fusion import (
    NumericModel,
    TraceRow,
    TrainConfig,
    train,
    write_trace,
)
from .index import (
    AggregateEmbedding,
    FlatIndex,
    RankedResult,
    column_embedding,
    tuple_embedding,
)
from .magnitude import MagnitudeEmbedder
from .metrics import GroundTruth, RetrievalScores, score_retrieval
from .probes import ProbeResult, ProbeTask, run_probe
from .serialize import TokenSequence, serialize_column_chunked, serialize_row
from .tables import Table, read_corpus
from .units import UnitTable, infer_unit, load_units

__all__ = [
    "ParsedTable",
    "parse_tables",
    "fill_column_units",
    "training_sequences",
    "corpus_vocab",
    "ingest_corpus",
    "build_numeric_model",
    "train_numeric_model",
    "train_projection",
    "corpus_blocks",
    "embed_corpus",
    "save_embeddings",
    "load_numeric_model",
    "query_by_id",
    "retrieval_eval",
    "audit_suite",
    "probe_suite",
    "default_rotation",
]


# --- corpus preparation -----------------------------------------------------

def fill_column_units(cells: Sequence[ParsedCell]) -> list[ParsedCell]:
    """Give unitless numeric cells the unit inferred from their column."""
    inferred = infer_unit(cells)
    if inferred is None:
        return list(cells)
    return [
        dataclasses.replace(c, unit=inferred)
        if c.unit is None and not isinstance(c.kind, Text)
        else c
        for c in cells
    ]


@dataclass(frozen=True)
class ParsedTable:
    """One table with every column parsed and unit-filled."""

    table: Table
    columns: tuple[tuple[ParsedCell, ...], ...]

    @property
    def name(self) -> str:
        return self.table.name

    def column_id(self, j: int) -> str:
        return f"{self.name}.c{j}"

    def row_id(self, i: int) -> str:
        return f"{self.name}.r{i}"

    def row_cells(self, i: int) -> list[ParsedCell]:
        return [col[i] for col in self.columns]


def parse_tables(tables: Sequence[Table], units: UnitTable) -> list[ParsedTable]:
    parsed = []
    for table in tables:
        columns = tuple(
            tuple(fill_column_units(table.parse_column(j, units)))
            for j in range(len(table.headers))
        )
        parsed.append(ParsedTable(table, columns))
    return parsed


def training_sequences(tables: Sequence[Table], max_len: int) -> list[TokenSequence]:
    """Column and row serializations of a corpus, oversized rows skipped.

    Columns are chunked so every cell contributes somewhere; a row layout
    cannot be split without losing its pairing, so rows that overflow the
    budget are dropped.
    """
    seqs: list[TokenSequence] = []
    for table in tables:
        for j, header in enumerate(table.headers):
            seqs.extend(serialize_column_chunked(header, table.column(j), max_len))
        for row in table.rows:
            try:
                seqs.append(serialize_row(list(table.headers), list(row), max_len))
            except SequenceTooLong:
                continue
    return seqs


def corpus_vocab(
    sequences: Sequence[TokenSequence],
    units: UnitTable,
    capacity: int = 1000,
    buckets: int = 64,
) -> Vocab:
    """Corpus vocabulary seeded with every canonical unit word.

    Canonical units are seeded so a unit token always resolves to its own
    row even when the corpus only ever spelled it as a surface form.
    """
    return Vocab.build(
        sequences,
        capacity=capacity,
        n_buckets=buckets,
        seed_words=units.canonicals(),
    )


def ingest_corpus(tables_dir: str | Path, units: UnitTable, out_path: str | Path) -> int:
    """Parse every cell of a table directory into one JSON-lines file."""
    parsed = parse_tables(read_corpus(tables_dir), units)
    lines = []
    for pt in parsed:
        for j, column in enumerate(pt.columns):
            for i, cell in enumerate(column):
                record = {
                    "table": pt.name,
                    "column": j,
                    "row": i,
                    "attr": cell.attribute,
                    "kind": cell.kind_name,
                    "payload": cell.payload(),
                    "unit": cell.unit,
                }
                lines.append(json.dumps(record, ensure_ascii=False))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return len(lines)


# --- model training ---------------------------------------------------------

def build_numeric_model(
    vocab: Vocab, cfg: Config, use_magnitude: bool = True
) -> NumericModel:
    """Fresh untrained model with every seed derived from the root seed."""
    encoder = EncoderModel(
        vocab,
        d=cfg.d,
        heads=cfg.heads,
        n_layers=cfg.layers,
        max_len=cfg.max_len,
        seed=substream(cfg.seed, "encoder"),
    )
    embedder = MagnitudeEmbedder.create(
        cfg.d,
        cfg.mag_lo,
        cfg.mag_hi,
        seed=substream(cfg.seed, "magnitude"),
        log_scale=cfg.log_scale,
    )
    return NumericModel(
        encoder,
        embedder,
        seed=substream(cfg.seed, "fusion"),
        use_magnitude=use_magnitude,
    )


def train_numeric_model(
    tables: Sequence[Table],
    units: UnitTable,
    cfg: Config,
    use_magnitude: bool = True,
) -> tuple[NumericModel, list[TraceRow]]:
    """Build vocabulary, build the model, run masked-numeral training."""
    seqs = training_sequences(tables, cfg.max_len)
    if not seqs:
        raise EmptyCorpus("no sequences in the table corpus")
    vocab = corpus_vocab(seqs, units, cfg.vocab_capacity, cfg.hash_buckets)
    model = build_numeric_model(vocab, cfg, use_magnitude=use_magnitude)
    tcfg = TrainConfig(
        steps=cfg.steps,
        batch_size=cfg.batch_size,
        lr=cfg.lr,
        mask_p=cfg.mask_p,
        seed=substream(cfg.seed, "fusion-train"),
    )
    trace = train(model, seqs, tcfg)
    return model, trace


def corpus_blocks(
    tables: Sequence[Table],
    units: UnitTable,
    model: NumericModel,
    mode: str = "full",
) -> list[SlotBlock]:
    """Composite block for every cell of a corpus, in table order.

    mode "full" keeps every available slot; "attr_only" drops values and
    units so only the attribute text survives.
    """
    blocks: list[SlotBlock] = []
    for pt in parse_tables(tables, units):
        for column in pt.columns:
            for cell in column:
                blocks.append(_block_for(cell, model, mode))
    return blocks


def _block_for(cell: ParsedCell, model: NumericModel, mode: str) -> SlotBlock:
    if mode == "full":
        return cell_block(cell, model)
    if mode == "attr_only":
        with torch.no_grad():
            return assemble(
                [("attr", attr_embedding(model, cell.attribute))], d=model.d
            )
    raise ValueError(f"unknown embedding mode {mode!r}")


def train_projection(
    tables: Sequence[Table],
    units: UnitTable,
    model: NumericModel,
    cfg: Config,
    mode: str = "full",
) -> tuple[Autoencoder, list[tuple[int, float]]]:
    blocks = corpus_blocks(tables, units, model, mode=mode)
    acfg = AETrainConfig(
        steps=cfg.ae_steps,
        lr=cfg.ae_lr,
        seed=substream(cfg.seed, "autoencoder"),
        d_c=cfg.d_c,
    )
    return train_autoencoder(blocks, acfg)


def load_numeric_model(path: str | Path) -> NumericModel:
    model = load_model(path)
    if not isinstance(model, NumericModel):
        raise CorruptFile(
            f"{path}: encoder-only checkpoint, need one with a fusion section"
        )
    return model


# --- embedding and indexing -------------------------------------------------

def embed_corpus(
    tables: Sequence[Table],
    units: UnitTable,
    model: NumericModel,
    ae: Autoencoder,
    target: str = "columns",
    mode: str = "full",
) -> tuple[list[AggregateEmbedding], list[dict]]:
    """Aggregate embeddings for every column or every row of a corpus."""
    if target not in ("columns", "tuples"):
        raise ValueError(f"target must be 'columns' or 'tuples', got {target!r}")
    parsed = parse_tables(tables, units)
    out: list[AggregateEmbedding] = []
    meta: list[dict] = []
    with torch.no_grad():
        for pt in parsed:
            if target == "columns":
                groups = [
                    (pt.column_id(j), pt.table.headers[j], list(col))
                    for j, col in enumerate(pt.columns)
                ]
            else:
                groups = [
                    (pt.row_id(i), None, pt.row_cells(i))
                    for i in range(len(pt.table.rows))
                ]
            for group_id, header, cells in groups:
                blocks = [_block_for(c, model, mode) for c in cells]
                vectors = [project(b, ae).numpy() for b in blocks]
                agg = (
                    column_embedding(vectors, group_id)
                    if target == "columns"
                    else tuple_embedding(vectors, group_id)
                )
                out.append(agg)
                record = {
                    "id": group_id,
                    "kind": agg.kind,
                    "table": pt.name,
                    "cells": agg.cell_count,
                    "layouts": ",".join(sorted({b.layout for b in blocks})),
                }
                if header is not None:
                    record["header"] = header
                meta.append(record)
    return out, meta


def save_embeddings(
    embeddings: Sequence[AggregateEmbedding],
    meta: Sequence[dict],
    vectors_path: str | Path,
    meta_path: str | Path | None = None,
) -> None:
    """Persist aggregates as a flat vector file plus JSON-lines metadata."""
    if not embeddings:
        raise EmptyCorpus("no embeddings to save")
    store = FlatIndex(len(embeddings[0].vector))
    for emb in embeddings:
        store.add(emb.source_id, emb.vector)
    vectors_path = Path(vectors_path)
    vectors_path.parent.mkdir(parents=True, exist_ok=True)
    store.save(vectors_path)
    if meta_path is not None:
        meta_path = Path(meta_path)
        meta_path.parent.mkdir(parents=True, exist_ok=True)
        lines = [json.dumps(m, ensure_ascii=False) for m in meta]
        meta_path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def query_by_id(
    index: FlatIndex, item_id: str, k: int, exclude_self: bool = True
) -> RankedResult:
    """Query the index with one of its own stored vectors.

    The stored vector scores 1.0 against itself, so by default the item is
    dropped from its own result list before truncating to k.
    """
    try:
        position = index.ids.index(item_id)
    except ValueError:
        raise UnknownQueryId(f"id {item_id!r} is not in the index") from None
    vector = index.matrix()[position]
    if not exclude_self:
        return index.query(vector, k, query_id=item_id)
    raw = index.query(vector, k + 1, query_id=item_id)
    items = tuple(pair for pair in raw.items if pair[0] != item_id)[:k]
    return RankedResult(item_id, items)


# --- evaluation -------------------------------------------------------------

def retrieval_eval(
    index: FlatIndex, truth: GroundTruth, k: int = 10
) -> tuple[RetrievalScores, dict[str, RankedResult]]:
    results = {qid: query_by_id(index, qid, k) for qid in sorted(truth)}
    return score_retrieval(results, truth, k), results


def audit_suite(
    kind: str,
    model: NumericModel,
    ae: Autoencoder,
    seed: int,
    scale: float = 1.0,
):
    """All audit rows for one kind: the trained path plus its baselines.

    scale shrinks the sample counts for quick runs; 1.0 is the full audit.
    """
    def sized(n: int) -> int:
        return max(8, int(n * scale))

    rows = []
    if kind == "numbers":
        cfg = NumberAuditConfig(n_pairs=sized(1000), seed=seed)
        for source in ("composite", "magnitude", "random"):
            rows.extend(correlation_audit(kind, cfg, model, ae, source))
    elif kind == "ranges":
        cfg = RangeAuditConfig(n_ranges=sized(1000), n_pairs=sized(1000), seed=seed)
        for source in ("composite", "random"):
            rows.extend(correlation_audit(kind, cfg, model, ae, source))
    elif kind == "gaussians":
        cfg = GaussianAuditConfig(n=sized(500), n_pairs=sized(2000), seed=seed)
        for source in ("composite", "random"):
            rows.extend(correlation_audit(kind, cfg, model, ae, source))
    else:
        raise ValueError(f"unknown audit kind {kind!r}")
    return rows


def probe_suite(
    model: NumericModel,
    tasks: Sequence[str],
    k: int,
    seed: int,
    n_samples: int = 2000,
    steps: int = 2000,
) -> list[tuple[str, ProbeResult]]:
    """Each probe task on the trained value embedding and a random control."""
    results: list[tuple[str, ProbeResult]] = []
    from .audits import _value_vec  # shared embedding cache semantics

    def trained(x: float) -> np.ndarray:
        return _value_vec(model, x)

    def control(x: float) -> np.ndarray:
        return random_embedding(f"probe:{x!r}", model.d, seed)

    for task_name in tasks:
        task = ProbeTask(task_name, k=k, n_samples=n_samples, steps=steps)
        results.append(("composite", run_probe(task, trained)))
        results.append(("random", run_probe(task, control)))
    return results


def default_rotation(
    model: NumericModel, ae: Autoencoder,
    attr: str = "Tumor size", value: float = 20.0, unit: str | None = "cm",
    rot_attr: str = "Sample size", rot_value: float = 200.0, rot_unit: str = "mm",
) -> list[RotationRow]:
    rotations: dict[str, object] = {
        "attr": rot_attr,
        "value": rot_value,
        "unit": rot_unit,
    }
    return rotation_ablation((attr, value, unit), rotations, model, ae)
