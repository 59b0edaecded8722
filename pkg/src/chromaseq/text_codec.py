"""Character-level tokenization with fixed-length right padding."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .color_data import Dataset, normalize_name

PAD = 0
UNK = 1
MAX_LEN_CAP = 40


@dataclass(frozen=True)
class Vocabulary:
    """Characters sorted by code point; ids 0 and 1 are PAD and UNK."""

    chars: tuple[str, ...]
    symbol_to_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        chars = tuple(self.chars)
        if len(set(chars)) != len(chars):
            raise ValueError("vocabulary characters must be unique")
        object.__setattr__(self, "chars", chars)
        object.__setattr__(self, "symbol_to_id", {c: i + 2 for i, c in enumerate(chars)})

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "Vocabulary":
        charset = set()
        for name in names:
            charset.update(normalize_name(name))
        return cls(tuple(sorted(charset)))

    def __len__(self) -> int:
        return len(self.chars) + 2

    @property
    def size(self) -> int:
        return len(self)

    def decode(self, ids: Sequence[int]) -> str:
        out = []
        for i in ids:
            if i == PAD:
                break
            out.append("�" if i == UNK else self.chars[i - 2])
        return "".join(out)


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    true_length: int

    def __post_init__(self):
        if self.true_length < 1:
            raise ValueError("true_length must be >= 1")
        if any(i != PAD for i in self.ids[self.true_length :]):
            raise ValueError("positions past true_length must be PAD")

    @property
    def max_len(self) -> int:
        return len(self.ids)


def build_vocab(dataset: Dataset) -> Vocabulary:
    if len(dataset) == 0:
        raise ValueError("cannot build a vocabulary from an empty dataset")
    return Vocabulary.from_names(dataset.names)


def max_len_for(dataset: Dataset) -> int:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    return min(max(len(n) for n in dataset.names), MAX_LEN_CAP)


def encode(name: str, vocab: Vocabulary, max_len: int) -> TokenSequence:
    """Map characters to ids (UNK if unseen), truncate at ``max_len``, pad with PAD."""
    text = normalize_name(name)
    if not text:
        raise ValueError("cannot encode an empty name")
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    lookup = vocab.symbol_to_id
    ids = [lookup.get(c, UNK) for c in text[:max_len]]
    n = len(ids)
    return TokenSequence(tuple(ids) + (PAD,) * (max_len - n), n)


def encode_batch(names: Sequence[str], vocab: Vocabulary, max_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Encode many names into a (B, max_len) id matrix and a (B,) length vector."""
    ids = np.zeros((len(names), max_len), dtype=np.int64)
    lengths = np.zeros(len(names), dtype=np.int64)
    for row, name in enumerate(names):
        seq = encode(name, vocab, max_len)
        ids[row] = seq.ids
        lengths[row] = seq.true_length
    return ids, lengths
