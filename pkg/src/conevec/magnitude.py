"""Deterministic angular embedding of real numbers.

A value is mapped linearly onto an angle in [0, π] over the embedder's
range and the point (cos θ, sin θ) is rotated into d dimensions by a
seeded orthonormal basis. Pairwise distances then grow monotonically with
numeric distance, which is the only property downstream modules rely on.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from conevec.errors import CorruptFile, NonFiniteInput

MAGIC = b"CONEMAG1"
DEFAULT_RANGE = (-1e6, 1e6)
_HEADER = struct.Struct("<8sIddQB")


def _orthonormal_basis(dim: int, seed: int) -> np.ndarray:
    """Seeded d×2 basis via Gram-Schmidt; plain arithmetic, no LAPACK."""
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((dim, 2))
    q0 = raw[:, 0] / np.linalg.norm(raw[:, 0])
    v1 = raw[:, 1] - (q0 @ raw[:, 1]) * q0
    q1 = v1 / np.linalg.norm(v1)
    return np.stack([q0, q1], axis=1)


@dataclass(frozen=True)
class MagnitudeEmbedder:
    dim: int
    lo: float
    hi: float
    seed: int
    basis: np.ndarray
    log_scale: bool = False

    @classmethod
    def create(
        cls,
        dim: int,
        lo: float = DEFAULT_RANGE[0],
        hi: float = DEFAULT_RANGE[1],
        seed: int = 0,
        log_scale: bool = False,
    ) -> "MagnitudeEmbedder":
        if dim < 2:
            raise ValueError(f"dim must be at least 2, got {dim}")
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
            raise ValueError(f"invalid range [{lo}, {hi}]")
        if not 0 <= seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        return cls(dim, float(lo), float(hi), seed, _orthonormal_basis(dim, seed), log_scale)

    def _warp(self, x: float) -> float:
        if self.log_scale:
            return math.copysign(math.log10(1.0 + abs(x)), x)
        return x

    def _angle(self, x: float) -> float:
        lo, hi = self._warp(self.lo), self._warp(self.hi)
        t = min(max(self._warp(x), lo), hi)
        return math.pi * (t - lo) / (hi - lo)

    def num_embed(self, x: float) -> np.ndarray:
        """Unit-norm d-vector for one value; out-of-range values clamp."""
        if not math.isfinite(x):
            raise NonFiniteInput(f"cannot embed {x!r}")
        theta = self._angle(float(x))
        return self.basis @ np.array([math.cos(theta), math.sin(theta)])

    def batch_embed(self, xs) -> np.ndarray:
        """Rowwise num_embed in input order; |xs| × d."""
        xs = list(xs)
        out = np.zeros((len(xs), self.dim))
        for i, x in enumerate(xs):
            if not math.isfinite(x):
                raise NonFiniteInput(f"row {i}: cannot embed {x!r}")
            out[i] = self.num_embed(x)
        return out

    def save(self, path: str | Path) -> None:
        header = _HEADER.pack(
            MAGIC, self.dim, self.lo, self.hi, self.seed, int(self.log_scale)
        )
        Path(path).write_bytes(header + self.basis.astype("<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "MagnitudeEmbedder":
        blob = Path(path).read_bytes()
        if len(blob) < _HEADER.size:
            raise CorruptFile(f"{path}: truncated header")
        magic, dim, lo, hi, seed, log_flag = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise CorruptFile(f"{path}: bad magic {magic!r}")
        body = blob[_HEADER.size:]
        expected = dim * 2 * 4
        if len(body) != expected:
            raise CorruptFile(f"{path}: basis payload {len(body)} bytes, expected {expected}")
        basis = np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(dim, 2)
        return cls(dim, lo, hi, seed, basis, bool(log_flag))
