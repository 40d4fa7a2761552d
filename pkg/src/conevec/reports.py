"""Delimited report files with stable formatting.

Every eval command funnels its numbers through these writers so that a
rerun with the same inputs produces byte-identical CSV output. Floats
are printed with %.12g, rows keep their given order, and files end with
a trailing newline.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

from .audits import AuditResult, RotationRow
from .metrics import RetrievalScores
from .probes import ProbeResult

__all__ = [
    "format_value",
    "write_csv",
    "write_audit_report",
    "write_retrieval_report",
    "write_per_query_report",
    "write_probe_report",
    "write_rotation_report",
    "write_query_result",
]


def format_value(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError("row width does not match header")
        lines.append(",".join(format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_audit_report(path: str | Path, results: Sequence[AuditResult]) -> Path:
    header = ("kind", "metric", "source", "pairs", "pearson_r", "spearman_rho")
    rows = [
        (r.kind, r.metric, r.source, len(r.analytic), r.pearson_r, r.spearman_rho)
        for r in results
    ]
    return write_csv(path, header, rows)


def write_audit_pairs(path: str | Path, result: AuditResult) -> Path:
    """Raw per-pair values behind one audit row, for scatter plots."""
    header = ("analytic", "embedding")
    rows = list(zip(result.analytic, result.embedding))
    return write_csv(path, header, rows)


def write_retrieval_report(path: str | Path, scores: dict[str, RetrievalScores]) -> Path:
    header = ("variant", "k", "queries", "recall", "map", "mrr")
    rows = [
        (name, s.k, s.n_queries, s.recall, s.mean_ap, s.mrr)
        for name, s in scores.items()
    ]
    return write_csv(path, header, rows)


def write_per_query_report(path: str | Path,
                           rows: Sequence[tuple[str, int, float, float, float]]) -> Path:
    """One line per query: id, relevant count, recall, ap, rr."""
    header = ("query", "relevant", "recall", "ap", "rr")
    return write_csv(path, header, rows)


def write_probe_report(path: str | Path, results: Sequence[tuple[str, ProbeResult]]) -> Path:
    header = ("source", "task", "metric", "mean", "per_seed")
    rows = [
        (source, r.task, r.metric, r.mean,
         ";".join(f"{v:.12g}" for v in r.per_seed))
        for source, r in results
    ]
    return write_csv(path, header, rows)


def write_rotation_report(path: str | Path, rows: Sequence[RotationRow]) -> Path:
    header = ("component", "rotated", "similarity")
    return write_csv(path, header, [(r.component, r.rotated, r.similarity) for r in rows])


def write_query_result(path: str | Path, hits: Sequence[tuple[str, float]]) -> Path:
    header = ("rank", "id", "score")
    rows = [(rank, key, score) for rank, (key, score) in enumerate(hits, start=1)]
    return write_csv(path, header, rows)
