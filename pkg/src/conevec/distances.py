"""Closed-form distances between scalars, intervals, and gaussians.

These are the reference geometries the embedding space is audited
against: absolute difference, center/length Euclidean, interval IoU, and
the 2-Wasserstein distance between univariate gaussians.
"""

from __future__ import annotations

import math

from conevec.cells import Gaussian, Range


def d_num(x: float, y: float) -> float:
    return abs(x - y)


def d_cl(r1: Range, r2: Range) -> float:
    """Euclidean distance in (center, length) coordinates."""
    return math.hypot(r1.center - r2.center, r1.length - r2.length)


def d_iou(r1: Range, r2: Range) -> float:
    """One minus interval intersection-over-union, in [0, 1].

    Two identical point intervals have distance 0; distinct point
    intervals are disjoint in the limit and get distance 1.
    """
    inter = max(0.0, min(r1.hi, r2.hi) - max(r1.lo, r2.lo))
    union = r1.length + r2.length - inter
    if union == 0.0:
        return 0.0 if r1.lo == r2.lo else 1.0
    return 1.0 - inter / union


def d_w2(g1: Gaussian, g2: Gaussian) -> float:
    """2-Wasserstein distance between two univariate gaussians."""
    return math.hypot(g1.mean - g2.mean, g1.sd - g2.sd)
