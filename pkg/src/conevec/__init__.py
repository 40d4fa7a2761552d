"""Composite, unit- and attribute-aware embeddings for numerical table data.

The package parses table cells into (attribute, value, unit) triplets,
embeds the numeric part with a deterministic magnitude embedder fused into
a small transformer encoder, assembles slot-structured composite vectors,
and evaluates them with distance-correlation audits, exact top-K retrieval,
numeracy probes, and component-rotation ablations.
"""

from conevec.cells import Gaussian, NumericKind, ParsedCell, Range, Scalar, Text

__version__ = "0.1.0"

__all__ = [
    "Gaussian",
    "NumericKind",
    "ParsedCell",
    "Range",
    "Scalar",
    "Text",
    "__version__",
]
