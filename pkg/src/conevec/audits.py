"""Distance-correlation audits and the component-rotation study.

Each audit samples numeric objects (plain numbers, ranges, or gaussians),
measures their analytic distances, measures distances between their
embeddings, and reports how well the two agree. Embeddings can come from
the full composite path, from the bare magnitude embedder, or from
value-keyed random vectors that serve as the no-signal baseline.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch

from conevec.cells import Gaussian, ParsedCell, Range, Scalar
from conevec.composite import (
    Autoencoder,
    assemble,
    cell_block,
    project,
    value_embedding,
)
from conevec.distances import d_cl, d_iou, d_num, d_w2
from conevec.fusion import NumericModel
from conevec.metrics import pearson, spearman

SOURCES = ("composite", "magnitude", "random")


@dataclass(frozen=True)
class AuditResult:
    kind: str
    metric: str
    source: str
    pearson_r: float
    spearman_rho: float
    analytic: tuple[float, ...]
    embedding: tuple[float, ...]


@dataclass(frozen=True)
class NumberAuditConfig:
    n_pairs: int = 1000
    lo: float = 0.0
    hi: float = 1000.0
    seed: int = 0


@dataclass(frozen=True)
class RangeAuditConfig:
    n_ranges: int = 1000
    n_pairs: int = 1000
    families: tuple[tuple[float, float], ...] = (
        (0.0, 100.0),
        (1.0, 1000.0),
        (0.0, 10000.0),
    )
    seed: int = 0


@dataclass(frozen=True)
class GaussianAuditConfig:
    n: int = 500
    n_pairs: int = 2000
    mu_lo: float = 0.0
    mu_hi: float = 100.0
    sd_lo: float = 1.0
    sd_hi: float = 10.0
    seed: int = 0


def random_embedding(key: str, d: int, seed: int = 0) -> np.ndarray:
    """Deterministic pseudo-random vector for a value key; the no-signal
    baseline for every audit."""
    digest = hashlib.blake2b(f"{seed}:{key}".encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    return rng.standard_normal(d)


def _cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 1.0
    return 1.0 - float(np.dot(u, v)) / (nu * nv)


def _result(kind, metric, source, analytic, embedding) -> AuditResult:
    return AuditResult(
        kind,
        metric,
        source,
        pearson(analytic, embedding),
        spearman(analytic, embedding),
        tuple(analytic),
        tuple(embedding),
    )


def _value_vec(model: NumericModel, x: float) -> np.ndarray:
    with torch.no_grad():
        return value_embedding(model, x).numpy()


def _pair_indices(n: int, n_pairs: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    pairs = []
    while len(pairs) < n_pairs:
        i, j = rng.integers(0, n, size=2)
        if i != j:
            pairs.append((int(i), int(j)))
    return pairs


def audit_numbers(
    cfg: NumberAuditConfig,
    model: NumericModel | None = None,
    source: str = "composite",
) -> list[AuditResult]:
    """Plain-number audit: |x−y| against value-slot cosine distance."""
    rng = np.random.default_rng(cfg.seed)
    xs = rng.uniform(cfg.lo, cfg.hi, cfg.n_pairs)
    ys = rng.uniform(cfg.lo, cfg.hi, cfg.n_pairs)
    if source == "composite":
        embed: Callable[[float], np.ndarray] = lambda v: _value_vec(model, v)
    elif source == "magnitude":
        embed = lambda v: model.embedder.num_embed(v)
    elif source == "random":
        d = model.d if model is not None else 64
        embed = lambda v: random_embedding(f"num:{v!r}", d, cfg.seed)
    else:
        raise ValueError(f"unknown source {source!r}")
    analytic = [d_num(x, y) for x, y in zip(xs, ys)]
    emb = [_cosine_distance(embed(x), embed(y)) for x, y in zip(xs, ys)]
    return [_result("numbers", "num", source, analytic, emb)]


def _sample_ranges(cfg: RangeAuditConfig, rng: np.random.Generator) -> list[Range]:
    out = []
    for _ in range(cfg.n_ranges):
        lo, hi = cfg.families[rng.integers(0, len(cfg.families))]
        a, b = sorted(rng.uniform(lo, hi, 2))
        out.append(Range(float(a), float(b)))
    return out


def audit_ranges(
    cfg: RangeAuditConfig,
    model: NumericModel | None = None,
    ae: Autoencoder | None = None,
    source: str = "composite",
) -> list[AuditResult]:
    """Range audit: center-length and interval-overlap distances against
    pre-projection slot distance and post-projection cosine distance."""
    rng = np.random.default_rng(cfg.seed)
    ranges = _sample_ranges(cfg, rng)
    pairs = _pair_indices(len(ranges), cfg.n_pairs, rng)
    cl = [d_cl(ranges[i], ranges[j]) for i, j in pairs]
    iou = [d_iou(ranges[i], ranges[j]) for i, j in pairs]
    if source == "random":
        d = model.d if model is not None else 64
        vecs = [
            random_embedding(f"range:{r.lo!r}:{r.hi!r}", d, cfg.seed) for r in ranges
        ]
        dist = [_cosine_distance(vecs[i], vecs[j]) for i, j in pairs]
        return [
            _result("ranges", "center_length", source, cl, dist),
            _result("ranges", "iou", source, iou, dist),
        ]
    slots = [
        np.concatenate([_value_vec(model, r.center), _value_vec(model, r.length)])
        for r in ranges
    ]
    pre = [float(np.linalg.norm(slots[i] - slots[j])) for i, j in pairs]
    results = [_result("ranges", "center_length_pre", source, cl, pre)]
    if ae is not None:
        with torch.no_grad():
            comps = [
                project(
                    assemble(
                        [
                            ("value1", value_embedding(model, r.center)),
                            ("value2", value_embedding(model, r.length)),
                        ]
                    ),
                    ae,
                ).numpy()
                for r in ranges
            ]
        post = [_cosine_distance(comps[i], comps[j]) for i, j in pairs]
        results.append(_result("ranges", "center_length_post", source, cl, post))
        results.append(_result("ranges", "iou", source, iou, post))
    return results


def audit_gaussians(
    cfg: GaussianAuditConfig,
    model: NumericModel | None = None,
    ae: Autoencoder | None = None,
    source: str = "composite",
) -> list[AuditResult]:
    """Gaussian audit: 2-Wasserstein distance against composite cosine
    distance over the mean−sd/mean/mean+sd slot triple."""
    rng = np.random.default_rng(cfg.seed)
    gs = [
        Gaussian(float(m), float(s))
        for m, s in zip(
            rng.uniform(cfg.mu_lo, cfg.mu_hi, cfg.n),
            rng.uniform(cfg.sd_lo, cfg.sd_hi, cfg.n),
        )
    ]
    pairs = _pair_indices(len(gs), cfg.n_pairs, rng)
    w2 = [d_w2(gs[i], gs[j]) for i, j in pairs]
    if source == "random":
        d = model.d if model is not None else 64
        vecs = [
            random_embedding(f"gauss:{g.mean!r}:{g.sd!r}", d, cfg.seed) for g in gs
        ]
        dist = [_cosine_distance(vecs[i], vecs[j]) for i, j in pairs]
        return [_result("gaussians", "w2", source, w2, dist)]
    if ae is None:
        raise ValueError("gaussian audit needs a trained projection")
    with torch.no_grad():
        comps = [
            project(
                assemble(
                    [
                        ("value1", value_embedding(model, g.mean - g.sd)),
                        ("value2", value_embedding(model, g.mean)),
                        ("value3", value_embedding(model, g.mean + g.sd)),
                    ]
                ),
                ae,
            ).numpy()
            for g in gs
        ]
    dist = [_cosine_distance(comps[i], comps[j]) for i, j in pairs]
    return [_result("gaussians", "w2", source, w2, dist)]


def correlation_audit(
    kind: str,
    cfg,
    model: NumericModel | None = None,
    ae: Autoencoder | None = None,
    source: str = "composite",
) -> list[AuditResult]:
    """Dispatch one audit by kind; returns one result per analytic metric."""
    if kind == "numbers":
        return audit_numbers(cfg, model, source)
    if kind == "ranges":
        return audit_ranges(cfg, model, ae, source)
    if kind == "gaussians":
        return audit_gaussians(cfg, model, ae, source)
    raise ValueError(f"unknown audit kind {kind!r}")


@dataclass(frozen=True)
class RotationRow:
    component: str
    rotated: str
    similarity: float


def _composite_for(
    attr: str | None, value: float | None, unit: str | None,
    model: NumericModel, ae: Autoencoder,
) -> np.ndarray:
    kind = Scalar(value) if value is not None else None
    comps = []
    with torch.no_grad():
        if kind is not None:
            cell = ParsedCell(attr or "", kind, unit)
            block = cell_block(cell, model)
        else:
            from conevec.composite import attr_embedding, unit_embedding

            if attr:
                comps.append(("attr", attr_embedding(model, attr)))
            if unit:
                comps.append(("unit", unit_embedding(model, unit)))
            block = assemble(comps, d=model.d)
        return project(block, ae).numpy()


def rotation_ablation(
    reference: tuple[str | None, float | None, str | None],
    rotations: dict[str, object],
    model: NumericModel,
    ae: Autoencoder,
) -> list[RotationRow]:
    """Similarity of single-component rotations against the reference.

    rotations maps a component name (attr, value, unit) to its replacement;
    None removes the component. The identity row comes first.
    """
    attr, value, unit = reference
    ref_vec = _composite_for(attr, value, unit, model, ae)
    rows = [RotationRow("none", "reference", 1.0)]
    for component in ("attr", "value", "unit"):
        if component not in rotations:
            continue
        new = rotations[component]
        fields = {"attr": attr, "value": value, "unit": unit}
        fields[component] = new
        vec = _composite_for(fields["attr"], fields["value"], fields["unit"], model, ae)
        nu = float(np.linalg.norm(ref_vec))
        nv = float(np.linalg.norm(vec))
        sim = float(np.dot(ref_vec, vec)) / (nu * nv) if nu and nv else 0.0
        rows.append(RotationRow(component, str(new), sim))
    return rows
