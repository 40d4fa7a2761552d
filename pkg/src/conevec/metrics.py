"""Correlation coefficients and top-K retrieval metrics.

Correlations delegate to scipy; their independent arithmetic oracles live
in the test suite. Ranking metrics are computed from rank positions of
relevant items within each truncated result list and averaged over
queries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from conevec.errors import ConstantSeries, LengthMismatch, NoQueries, UnknownQueryId


def _check_series(xs, ys) -> tuple[np.ndarray, np.ndarray]:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape:
        raise LengthMismatch(f"series lengths differ: {xs.shape} vs {ys.shape}")
    if xs.size < 3:
        raise ValueError("correlation needs at least 3 points")
    if np.ptp(xs) == 0.0 or np.ptp(ys) == 0.0:
        raise ConstantSeries("correlation undefined for a constant series")
    return xs, ys


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    xs, ys = _check_series(xs, ys)
    return float(stats.pearsonr(xs, ys).statistic)


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    xs, ys = _check_series(xs, ys)
    return float(stats.spearmanr(xs, ys).statistic)


# --- ranking ---------------------------------------------------------------

GroundTruth = Mapping[str, frozenset[str]]


def _relevant_ranks(
    ranked_ids: Sequence[str], relevant: frozenset[str], k: int
) -> list[int]:
    """1-based ranks of relevant items within the top k."""
    return [r for r, item in enumerate(ranked_ids[:k], start=1) if item in relevant]


def _per_query(results, truth, k):
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not results:
        raise NoQueries("no queries to score")
    for qid in sorted(results):
        if qid not in truth:
            raise UnknownQueryId(f"query {qid!r} missing from ground truth")
        relevant = frozenset(truth[qid])
        if not relevant:
            raise ValueError(f"query {qid!r} has an empty relevance set")
        ranked_ids = [item_id for item_id, _ in results[qid].items]
        yield ranked_ids, relevant


def recall_at_k(results, truth: GroundTruth, k: int = 10) -> float:
    """Mean fraction of each query's relevant set found in its top k."""
    scores = [
        len(_relevant_ranks(ids, rel, k)) / len(rel)
        for ids, rel in _per_query(results, truth, k)
    ]
    return float(np.mean(scores))


def map_at_k(results, truth: GroundTruth, k: int = 10) -> float:
    """Mean average precision with the sum normalized by min(|relevant|, k).

    Average precision over integer ranks is a rational number; it is
    carried exactly and rounded once, so hand-derived values like 5/6 come
    out bit-equal.
    """
    scores = []
    for ids, rel in _per_query(results, truth, k):
        ranks = _relevant_ranks(ids, rel, k)
        precision_sum = sum(
            (Fraction(hit, rank) for hit, rank in enumerate(ranks, start=1)),
            start=Fraction(0),
        )
        scores.append(float(precision_sum / min(len(rel), k)))
    return float(np.mean(scores))


def mrr_at_k(results, truth: GroundTruth, k: int = 10) -> float:
    """Mean reciprocal rank of the first relevant item within the top k."""
    scores = []
    for ids, rel in _per_query(results, truth, k):
        ranks = _relevant_ranks(ids, rel, k)
        scores.append(1.0 / ranks[0] if ranks else 0.0)
    return float(np.mean(scores))


@dataclass(frozen=True)
class RetrievalScores:
    """All three ranking metrics for one result set at one cutoff."""

    k: int
    n_queries: int
    recall: float
    mean_ap: float
    mrr: float


def score_retrieval(results, truth: GroundTruth, k: int = 10) -> RetrievalScores:
    return RetrievalScores(
        k=k,
        n_queries=len(results),
        recall=recall_at_k(results, truth, k),
        mean_ap=map_at_k(results, truth, k),
        mrr=mrr_at_k(results, truth, k),
    )


def per_query_scores(
    results, truth: GroundTruth, k: int = 10
) -> list[tuple[str, int, float, float, float]]:
    """Per-query (id, relevant count, recall, ap, rr) rows, sorted by id."""
    rows = []
    for qid, (ids, rel) in zip(sorted(results), _per_query(results, truth, k)):
        ranks = _relevant_ranks(ids, rel, k)
        ap = sum(
            (Fraction(hit, rank) for hit, rank in enumerate(ranks, start=1)),
            start=Fraction(0),
        ) / min(len(rel), k)
        rr = 1.0 / ranks[0] if ranks else 0.0
        rows.append((qid, len(rel), len(ranks) / len(rel), float(ap), rr))
    return rows


# --- ground truth persistence ----------------------------------------------

def load_ground_truth(path: str | Path) -> dict[str, frozenset[str]]:
    """JSON-lines of {"query": id, "relevant": [ids]} records."""
    truth: dict[str, frozenset[str]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        truth[record["query"]] = frozenset(record["relevant"])
    return truth


def save_ground_truth(truth: Mapping[str, Sequence[str]], path: str | Path) -> None:
    lines = [
        json.dumps({"query": qid, "relevant": sorted(truth[qid])}, ensure_ascii=False)
        for qid in sorted(truth)
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
