"""Small transformer encoder over serialized table sequences.

Tokens map to ids through a corpus-built vocabulary with four fixed
specials in ids 0..3 and stable hash buckets for out-of-vocabulary words.
Every numeral shares the single [NUM] id; magnitude information enters
later through the fusion path, never through the token table.
"""

from __future__ import annotations

import hashlib
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

import torch
from torch import nn

from conevec.errors import SequenceTooLong, ShapeMismatch
from conevec.serialize import CLS, MASK, NUM, SEP, TokenSequence, is_numeral_word

CLS_ID, SEP_ID, MASK_ID, NUM_ID = 0, 1, 2, 3
_SPECIAL_IDS = {CLS: CLS_ID, SEP: SEP_ID, MASK: MASK_ID, NUM: NUM_ID}

DTYPE = torch.float64


def stable_bucket(word: str, n_buckets: int) -> int:
    digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % n_buckets


@dataclass(frozen=True)
class Vocab:
    """Known words in id order after the specials, plus hash buckets."""

    words: tuple[str, ...]
    n_buckets: int

    def __post_init__(self) -> None:
        if self.n_buckets < 1:
            raise ValueError("need at least one hash bucket")
        object.__setattr__(
            self, "_index", {w: 4 + i for i, w in enumerate(self.words)}
        )

    @property
    def size(self) -> int:
        return 4 + len(self.words) + self.n_buckets

    def id_of(self, word: str) -> int:
        special = _SPECIAL_IDS.get(word)
        if special is not None:
            return special
        known = self._index.get(word)
        if known is not None:
            return known
        return 4 + len(self.words) + stable_bucket(word, self.n_buckets)

    @classmethod
    def build(
        cls,
        sequences: Iterable[TokenSequence],
        capacity: int = 1000,
        n_buckets: int = 64,
        seed_words: Iterable[str] = (),
    ) -> "Vocab":
        """Frequency-ordered vocabulary with deterministic tie-breaks.

        seed_words (e.g. canonical unit symbols) are always included, ahead
        of corpus words.
        """
        counts: Counter[str] = Counter()
        for seq in sequences:
            numeral = set(seq.numeral_positions)
            for i, w in enumerate(seq.words):
                if w in _SPECIAL_IDS or i in numeral or is_numeral_word(w):
                    continue
                counts[w] += 1
        seeds = list(dict.fromkeys(seed_words))
        for w in seeds:
            counts.pop(w, None)
        ranked = sorted(counts, key=lambda w: (-counts[w], w))
        room = max(0, capacity - len(seeds))
        return cls(tuple(seeds + ranked[:room]), n_buckets)


def tokenize(seq: TokenSequence, vocab: Vocab, max_len: int) -> TokenSequence:
    """Id-mapped copy of a serialized sequence; numerals all become [NUM]."""
    if len(seq) > max_len:
        raise SequenceTooLong(f"{len(seq)} tokens exceed the maximum of {max_len}")
    numeral = set(seq.numeral_positions)
    ids = tuple(
        NUM_ID if i in numeral else vocab.id_of(w) for i, w in enumerate(seq.words)
    )
    return seq.with_ids(ids)


class AttentionLayer(nn.Module):
    """Post-norm block: multi-head self-attention then position-wise FFN."""

    def __init__(self, d: int, heads: int):
        super().__init__()
        if d % heads != 0:
            raise ValueError(f"d={d} not divisible by heads={heads}")
        self.d = d
        self.heads = heads
        self.d_k = d // heads
        self.wq = nn.Linear(d, d, dtype=DTYPE)
        self.wk = nn.Linear(d, d, dtype=DTYPE)
        self.wv = nn.Linear(d, d, dtype=DTYPE)
        self.wo = nn.Linear(d, d, dtype=DTYPE)
        self.ln1 = nn.LayerNorm(d, eps=1e-5, dtype=DTYPE)
        self.ff1 = nn.Linear(d, 4 * d, dtype=DTYPE)
        self.ff2 = nn.Linear(4 * d, d, dtype=DTYPE)
        self.ln2 = nn.LayerNorm(d, eps=1e-5, dtype=DTYPE)

    def _check(self, h: torch.Tensor) -> None:
        if h.dim() != 2 or h.shape[1] != self.d:
            raise ShapeMismatch(f"expected (l, {self.d}), got {tuple(h.shape)}")

    def mix_and_weights(self, h: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Concatenated head mix (pre output-projection) and softmax weights."""
        self._check(h)
        l = h.shape[0]
        q = self.wq(h).view(l, self.heads, self.d_k).transpose(0, 1)
        k = self.wk(h).view(l, self.heads, self.d_k).transpose(0, 1)
        v = self.wv(h).view(l, self.heads, self.d_k).transpose(0, 1)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.d_k)
        weights = torch.softmax(scores, dim=-1)
        mix = (weights @ v).transpose(0, 1).reshape(l, self.d)
        return mix, weights

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        mix, _ = self.mix_and_weights(h)
        h = self.ln1(h + self.wo(mix))
        return self.ln2(h + self.ff2(torch.nn.functional.gelu(self.ff1(h))))


def attention(h: torch.Tensor, layer: AttentionLayer) -> torch.Tensor:
    """One full attention block applied to an l×d hidden-state matrix."""
    return layer(h)


class EncoderModel(nn.Module):
    """Token + position embeddings under a stack of attention layers."""

    def __init__(
        self,
        vocab: Vocab,
        d: int = 64,
        heads: int = 4,
        n_layers: int = 2,
        max_len: int = 128,
        seed: int = 0,
    ):
        super().__init__()
        self.vocab = vocab
        self.d = d
        self.heads = heads
        self.n_layers = n_layers
        self.max_len = max_len
        self.seed = seed
        self.tok_emb = nn.Embedding(vocab.size, d, dtype=DTYPE)
        self.pos_emb = nn.Embedding(max_len, d, dtype=DTYPE)
        self.layers = nn.ModuleList(AttentionLayer(d, heads) for _ in range(n_layers))
        init_seeded(self, seed)

    def tokenize(self, seq: TokenSequence) -> TokenSequence:
        return tokenize(seq, self.vocab, self.max_len)

    def encode_ids(self, ids: torch.Tensor) -> torch.Tensor:
        if ids.dim() != 1:
            raise ShapeMismatch(f"expected 1-d id tensor, got {tuple(ids.shape)}")
        l = ids.shape[0]
        if l > self.max_len:
            raise SequenceTooLong(f"{l} tokens exceed the maximum of {self.max_len}")
        h = self.tok_emb(ids) + self.pos_emb(torch.arange(l))
        for layer in self.layers:
            h = layer(h)
        return h

    def encode(self, seq: TokenSequence) -> torch.Tensor:
        """Contextual l×d hidden states for one sequence."""
        if seq.ids is None:
            seq = self.tokenize(seq)
        return self.encode_ids(torch.tensor(seq.ids, dtype=torch.long))


def init_seeded(model: nn.Module, seed: int, std: float = 0.02) -> None:
    """Gaussian init for linear/embedding weights, identity for layer norms.

    One generator drives everything in module-definition order, so a seed
    pins every parameter bit.
    """
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, (nn.Linear, nn.Embedding)):
                module.weight.normal_(0.0, std, generator=gen)
                if isinstance(module, nn.Linear) and module.bias is not None:
                    module.bias.zero_()
            elif isinstance(module, nn.LayerNorm):
                module.weight.fill_(1.0)
                module.bias.zero_()
