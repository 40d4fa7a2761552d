"""Serialization of columns and rows into bracketed token sequences.

A column becomes ``[CLS] a_j [SEP] v_1 [SEP] ... v_n [SEP]``; a row
interleaves attribute names with cell values, ``[CLS] a_1 v_1 [SEP] ...
a_m v_m [SEP]``. Cell text is lightly normalized on the way in (thousands
commas dropped, dash runs collapsed, ``+-`` spelled ``±``) and every word
that reads as a plain number is tracked as a numeral with its value.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from conevec.errors import EmptyColumn, LengthMismatch, SequenceTooLong
from conevec.parsing import clean_text

CLS, SEP, MASK, NUM = "[CLS]", "[SEP]", "[MASK]", "[NUM]"
SPECIAL_WORDS = (CLS, SEP, MASK, NUM)

DEFAULT_MAX_LEN = 128

_PLAIN_NUM_RX = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)\Z")
_THOUSANDS_RX = re.compile(r"(?<=\d),(?=\d{3}\b)")
_PM_RX = re.compile(r"(?<=[\d.])\s*(?:±|\+/-|\+-)\s*(?=[+\-.\d])|\s*±\s*")
_DASH_RX = re.compile(r"[–—]")
_DASH_RUN_RX = re.compile(r"-{2,}")
_NUM_PREFIX_RX = re.compile(r"([+-]?(?:\d+(?:\.\d*)?|\.\d+))([A-Za-zµ°%$€].*)\Z")


def is_numeral_word(word: str) -> bool:
    return _PLAIN_NUM_RX.fullmatch(word) is not None


def render_words(text: str) -> list[str]:
    """Normalize one header or cell string into its sequence words."""
    s = clean_text(text)
    if not s:
        return []
    s = _PM_RX.sub(" ± ", s)
    s = _THOUSANDS_RX.sub("", s)
    s = _DASH_RUN_RX.sub("-", _DASH_RX.sub("-", s))
    words: list[str] = []
    for w in s.split():
        m = _NUM_PREFIX_RX.fullmatch(w)
        if m is not None:
            words.extend((m.group(1), m.group(2)))
        else:
            words.append(w)
    return words


def format_number(x: float) -> str:
    """Shortest plain rendering of a value, for synthesized sequences."""
    if float(x).is_integer() and abs(x) < 1e16:
        return str(int(x))
    return f"{x:.12g}"


@dataclass(frozen=True)
class TokenSequence:
    """A serialized sequence: words, numeral bookkeeping, optional ids.

    ``ids`` stays None until a vocabulary maps the words; both forms share
    positions, so numeral_positions index words and ids alike.
    """

    words: tuple[str, ...]
    numeral_positions: tuple[int, ...]
    numeral_values: tuple[float, ...]
    ids: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if not self.words or self.words[0] != CLS:
            raise ValueError("sequence must start with [CLS]")
        if len(self.numeral_positions) != len(self.numeral_values):
            raise LengthMismatch(
                f"{len(self.numeral_positions)} numeral positions vs "
                f"{len(self.numeral_values)} values"
            )
        prev = -1
        for p in self.numeral_positions:
            if p <= prev:
                raise ValueError("numeral positions must be strictly increasing")
            if not 0 <= p < len(self.words):
                raise ValueError(f"numeral position {p} out of bounds")
            prev = p
        if self.ids is not None and len(self.ids) != len(self.words):
            raise LengthMismatch(f"{len(self.ids)} ids vs {len(self.words)} words")

    @property
    def text(self) -> str:
        return " ".join(self.words)

    def __len__(self) -> int:
        return len(self.words)

    def with_ids(self, ids: tuple[int, ...]) -> "TokenSequence":
        return TokenSequence(self.words, self.numeral_positions, self.numeral_values, ids)


def _finish(words: list[str], max_len: int) -> TokenSequence:
    if len(words) > max_len:
        raise SequenceTooLong(f"{len(words)} tokens exceed the maximum of {max_len}")
    positions: list[int] = []
    values: list[float] = []
    for i, w in enumerate(words):
        if is_numeral_word(w):
            positions.append(i)
            values.append(float(w))
    return TokenSequence(tuple(words), tuple(positions), tuple(values))


def serialize_text(text: str, max_len: int = DEFAULT_MAX_LEN) -> TokenSequence:
    """Minimal layout for a standalone fragment: [CLS] words [SEP].

    Used for attribute names and single synthesized values when a full
    column context is not wanted.
    """
    return _finish([CLS, *render_words(text), SEP], max_len)


def serialize_column(
    header: str, cells: list[str], max_len: int = DEFAULT_MAX_LEN
) -> TokenSequence:
    """Column layout: [CLS] header [SEP] then each cell closed by [SEP]."""
    if not cells:
        raise EmptyColumn("serialize_column requires at least one cell")
    words = [CLS, *render_words(header), SEP]
    for cell in cells:
        words.extend(render_words(cell))
        words.append(SEP)
    return _finish(words, max_len)


def serialize_row(
    headers: list[str], cells: list[str], max_len: int = DEFAULT_MAX_LEN
) -> TokenSequence:
    """Row layout: [CLS] then attribute/value pairs, each closed by [SEP]."""
    if len(headers) != len(cells):
        raise LengthMismatch(f"{len(headers)} headers vs {len(cells)} cells")
    words = [CLS]
    for header, cell in zip(headers, cells):
        words.extend(render_words(header))
        words.extend(render_words(cell))
        words.append(SEP)
    return _finish(words, max_len)


def serialize_column_chunked(
    header: str, cells: list[str], max_len: int = DEFAULT_MAX_LEN
) -> list[TokenSequence]:
    """Greedy chunking for columns whose full serialization would overflow.

    Each chunk repeats the header so it stands alone as a valid column
    sequence. A single cell too large for one chunk is an error.
    """
    if not cells:
        raise EmptyColumn("serialize_column_chunked requires at least one cell")
    overhead = 2 + len(render_words(header))
    chunks: list[TokenSequence] = []
    batch: list[str] = []
    used = overhead
    for cell in cells:
        cost = len(render_words(cell)) + 1
        if overhead + cost > max_len:
            raise SequenceTooLong(f"cell {cell!r} alone exceeds max length {max_len}")
        if batch and used + cost > max_len:
            chunks.append(serialize_column(header, batch, max_len))
            batch, used = [], overhead
        batch.append(cell)
        used += cost
    chunks.append(serialize_column(header, batch, max_len))
    return chunks


__all__ = [
    "CLS",
    "SEP",
    "MASK",
    "NUM",
    "SPECIAL_WORDS",
    "DEFAULT_MAX_LEN",
    "TokenSequence",
    "format_number",
    "is_numeral_word",
    "render_words",
    "serialize_column",
    "serialize_column_chunked",
    "serialize_row",
    "serialize_text",
]
