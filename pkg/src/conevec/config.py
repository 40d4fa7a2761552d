"""Run configuration: one flat TOML file with CLI-flag overrides.

Every knob a command needs lives in one Config so a run is reproducible
from a single file plus a root seed. Randomness never shares a stream:
each consumer derives its own substream seed by hashing the root seed
with a purpose label.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - Python 3.10 fallback
    import tomli as tomllib


@dataclass(frozen=True)
class Config:
    # model dims
    d: int = 64
    d_c: int = 64
    heads: int = 4
    layers: int = 2
    max_len: int = 128
    # magnitude embedder range
    mag_lo: float = -100.0
    mag_hi: float = 10000.0
    log_scale: bool = False
    # vocabulary
    vocab_capacity: int = 1000
    hash_buckets: int = 64
    # masked numeral training
    steps: int = 500
    batch_size: int = 8
    lr: float = 2e-4
    mask_p: float = 0.3
    # projection training
    ae_steps: int = 300
    ae_lr: float = 3e-3
    # corpus generation
    tables_per_type: int = 4
    rows_per_table: int = 8
    # shared
    seed: int = 0
    units_path: str | None = None

    def __post_init__(self) -> None:
        for name in ("d", "d_c", "heads", "layers", "max_len", "vocab_capacity",
                     "hash_buckets", "steps", "batch_size", "ae_steps",
                     "tables_per_type", "rows_per_table"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.mask_p < 1.0:
            raise ValueError("mask_p must lie strictly between 0 and 1")
        if not self.mag_lo < self.mag_hi:
            raise ValueError("mag_lo must be below mag_hi")


_FIELDS = {f.name: f for f in dataclasses.fields(Config)}


def substream(seed: int, name: str) -> int:
    """Independent 64-bit seed for one named consumer of the root seed."""
    digest = hashlib.blake2b(f"{seed}:{name}".encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


def _coerce(name: str, value):
    field = _FIELDS[name]
    if field.type in ("int", int):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{name} must be a number")
        return int(value)
    if field.type in ("float", float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{name} must be a number")
        return float(value)
    if field.type in ("bool", bool):
        if not isinstance(value, bool):
            raise ValueError(f"{name} must be a boolean")
        return value
    return value


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> Config:
    """Config from optional TOML file plus overrides; overrides win."""
    values: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        for key, value in raw.items():
            if key not in _FIELDS:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = _coerce(key, value)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = _coerce(key, value)
    return Config(**values)


def resolve_path(p: str | Path) -> Path:
    """Resolve a path against the CONEVEC_ROOT environment root if set."""
    path = Path(p)
    root = os.environ.get("CONEVEC_ROOT")
    if root and not path.is_absolute():
        return Path(root) / path
    return path
