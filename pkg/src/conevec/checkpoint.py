"""Binary checkpoints for encoder and fusion models.

One container covers both: a flags byte records whether the file carries
the fusion block and whether the prediction heads survived export.
Layout, all little-endian:

    magic "CONEENC1" | u16 version | u8 flags
    u32 d, heads, layers, max_len, n_words, n_buckets | u64 init seed
    [flags bit0] f64 lo, f64 hi, u64 embed seed, u8 log flag,
                 f64 gain, u32 n_classes
    vocab table: n_words entries of u16 byte length + UTF-8 bytes
    tensors: 32-bit floats in the documented fixed order
      (token embeddings, position embeddings, per-layer attention and
      feed-forward weights, then fusion-block tensors, then head tensors
      when present)

Weights are stored in 32-bit precision; models compute in 64-bit, so a
round trip quantizes once. Embedding from a loaded checkpoint is
therefore the reproducible path.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import torch

from conevec.encoder import EncoderModel, Vocab
from conevec.errors import CorruptFile
from conevec.fusion import NumericModel
from conevec.magnitude import MagnitudeEmbedder

MAGIC = b"CONEENC1"
AE_MAGIC = b"CONEAE01"
_VERSION = 1
_FLAG_FUSION = 1
_FLAG_HEADS = 2
_HEADER = struct.Struct("<8sHBIIIIIIQ")
_FUSION = struct.Struct("<ddQBdI")
_WLEN = struct.Struct("<H")

_LAYER_PARTS = (
    "wq.weight", "wq.bias", "wk.weight", "wk.bias",
    "wv.weight", "wv.bias", "wo.weight", "wo.bias",
    "ln1.weight", "ln1.bias",
    "ff1.weight", "ff1.bias", "ff2.weight", "ff2.bias",
    "ln2.weight", "ln2.bias",
)
_HEAD_KEYS = ("mag_head.weight", "mag_head.bias", "cls_head.weight", "cls_head.bias")


def _encoder_keys(n_layers: int, prefix: str = "") -> list[str]:
    keys = [prefix + "tok_emb.weight", prefix + "pos_emb.weight"]
    for i in range(n_layers):
        keys.extend(f"{prefix}layers.{i}.{part}" for part in _LAYER_PARTS)
    return keys


def _tensor_keys(flags: int, n_layers: int) -> list[str]:
    if not flags & _FLAG_FUSION:
        return _encoder_keys(n_layers)
    keys = _encoder_keys(n_layers, "encoder.")
    keys.extend(f"refiner.{part}" for part in _LAYER_PARTS)
    if flags & _FLAG_HEADS:
        keys.extend(_HEAD_KEYS)
    return keys


def save_model(
    model: EncoderModel | NumericModel, path: str | Path, include_heads: bool = True
) -> None:
    """Serialize a model; heads can be stripped for inference-only export."""
    if isinstance(model, NumericModel):
        flags = _FLAG_FUSION | (_FLAG_HEADS if include_heads else 0)
        encoder = model.encoder
    else:
        flags = 0
        encoder = model
    vocab = encoder.vocab
    chunks = [
        _HEADER.pack(
            MAGIC, _VERSION, flags,
            encoder.d, encoder.heads, encoder.n_layers, encoder.max_len,
            len(vocab.words), vocab.n_buckets, encoder.seed,
        )
    ]
    if flags & _FLAG_FUSION:
        emb = model.embedder
        chunks.append(
            _FUSION.pack(
                emb.lo, emb.hi, emb.seed, int(emb.log_scale),
                model.gain, model.n_classes,
            )
        )
    for word in vocab.words:
        raw = word.encode("utf-8")
        chunks.append(_WLEN.pack(len(raw)))
        chunks.append(raw)
    state = model.state_dict()
    for key in _tensor_keys(flags, encoder.n_layers):
        arr = state[key].detach().cpu().numpy().astype("<f4")
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_model(path: str | Path) -> EncoderModel | NumericModel:
    """Rebuild a model from its checkpoint; shape of return follows flags."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size or blob[:8] != MAGIC:
        raise CorruptFile(f"{path}: not a model checkpoint")
    (_, version, flags, d, heads, layers, max_len,
     n_words, n_buckets, seed) = _HEADER.unpack_from(blob)
    if version != _VERSION:
        raise CorruptFile(f"{path}: unsupported version {version}")
    off = _HEADER.size
    if flags & _FLAG_FUSION:
        if len(blob) < off + _FUSION.size:
            raise CorruptFile(f"{path}: truncated fusion header")
        lo, hi, eseed, log_flag, gain, n_classes = _FUSION.unpack_from(blob, off)
        off += _FUSION.size
    words = []
    for _ in range(n_words):
        if len(blob) < off + _WLEN.size:
            raise CorruptFile(f"{path}: truncated vocab table")
        (wlen,) = _WLEN.unpack_from(blob, off)
        off += _WLEN.size
        if len(blob) < off + wlen:
            raise CorruptFile(f"{path}: truncated vocab entry")
        words.append(blob[off : off + wlen].decode("utf-8"))
        off += wlen
    vocab = Vocab(tuple(words), n_buckets)
    encoder = EncoderModel(vocab, d, heads, layers, max_len, seed)
    if flags & _FLAG_FUSION:
        embedder = MagnitudeEmbedder.create(
            d, lo, hi, seed=eseed, log_scale=bool(log_flag)
        )
        model: EncoderModel | NumericModel = NumericModel(
            encoder, embedder, n_classes=n_classes
        )
        model.gain = gain
    else:
        model = encoder
    state = model.state_dict()
    with torch.no_grad():
        for key in _tensor_keys(flags, layers):
            tensor = state[key]
            nbytes = 4 * tensor.numel()
            if len(blob) < off + nbytes:
                raise CorruptFile(f"{path}: truncated tensor data at {key}")
            arr = np.frombuffer(blob, dtype="<f4", count=tensor.numel(), offset=off)
            tensor.copy_(torch.from_numpy(arr.astype(np.float64)).view(tensor.shape))
            off += nbytes
        if flags & _FLAG_FUSION and not flags & _FLAG_HEADS:
            model.mag_head.weight.zero_()
            model.mag_head.bias.zero_()
            model.cls_head.weight.zero_()
            model.cls_head.bias.zero_()
    if off != len(blob):
        raise CorruptFile(f"{path}: {len(blob) - off} trailing bytes")
    if isinstance(model, NumericModel):
        model.has_heads = bool(flags & _FLAG_HEADS)
    return model


_AE_HEADER = struct.Struct("<8sHBIId")


def save_autoencoder(ae, path: str | Path) -> None:
    """Projection checkpoint: header, W, then normalization gain and bias."""
    chunks = [
        _AE_HEADER.pack(
            AE_MAGIC, _VERSION, int(ae.learnable_norm), ae.d_c, ae.in_dim, ae.eps
        )
    ]
    for tensor in (ae.W, ae.norm_gain, ae.norm_bias):
        chunks.append(tensor.detach().cpu().numpy().astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_autoencoder(path: str | Path):
    from conevec.composite import Autoencoder

    blob = Path(path).read_bytes()
    if len(blob) < _AE_HEADER.size or blob[:8] != AE_MAGIC:
        raise CorruptFile(f"{path}: not a projection checkpoint")
    _, version, learnable, d_c, in_dim, eps = _AE_HEADER.unpack_from(blob)
    if version != _VERSION:
        raise CorruptFile(f"{path}: unsupported version {version}")
    ae = Autoencoder(in_dim, d_c=d_c, learnable_norm=bool(learnable), eps=eps)
    off = _AE_HEADER.size
    with torch.no_grad():
        for tensor in (ae.W, ae.norm_gain, ae.norm_bias):
            nbytes = 4 * tensor.numel()
            if len(blob) < off + nbytes:
                raise CorruptFile(f"{path}: truncated tensor data")
            arr = np.frombuffer(blob, dtype="<f4", count=tensor.numel(), offset=off)
            tensor.copy_(torch.from_numpy(arr.astype(np.float64)).view(tensor.shape))
            off += nbytes
    if off != len(blob):
        raise CorruptFile(f"{path}: {len(blob) - off} trailing bytes")
    return ae
