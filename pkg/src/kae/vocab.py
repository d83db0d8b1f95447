"""Character-level SMILES vocabulary, tokenization and padding."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SOS = "<SOS>"
EOS = "<EOS>"
PAD = "<PAD>"


class TokenizationError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    """Immutable char <-> id tables. Characters come first in sorted order,
    followed by SOS, EOS and finally PAD (always the last id)."""

    chars: tuple[str, ...]
    char_to_id: dict[str, int] = field(init=False, repr=False, compare=False)
    id_to_char: dict[int, str] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.chars)) != len(self.chars):
            raise ValueError("duplicate characters in vocabulary")
        for c in self.chars:
            if len(c) != 1:
                raise ValueError(f"vocabulary entries must be single characters, got {c!r}")
        c2i = {c: i for i, c in enumerate(self.chars)}
        object.__setattr__(self, "char_to_id", c2i)
        object.__setattr__(self, "id_to_char", {i: c for c, i in c2i.items()})

    @property
    def sos_id(self) -> int:
        return len(self.chars)

    @property
    def eos_id(self) -> int:
        return len(self.chars) + 1

    @property
    def pad_id(self) -> int:
        return len(self.chars) + 2

    @property
    def size(self) -> int:
        return len(self.chars) + 3

    def token_name(self, i: int) -> str:
        if i == self.sos_id:
            return SOS
        if i == self.eos_id:
            return EOS
        if i == self.pad_id:
            return PAD
        return self.id_to_char[i]

    def to_list(self) -> list[str]:
        return list(self.chars)

    @classmethod
    def from_list(cls, chars: Sequence[str]) -> "Vocabulary":
        return cls(tuple(chars))


def build_vocabulary(corpus: Iterable[str]) -> Vocabulary:
    chars: set[str] = set()
    n = 0
    for s in corpus:
        chars.update(s)
        n += 1
    if n == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    return Vocabulary(tuple(sorted(chars)))


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]

    # never holds pads; padding only exists in pad_batch matrices

    @property
    def length(self) -> int:
        return len(self.ids)


def tokenize(s: str, v: Vocabulary) -> TokenSequence:
    ids = [v.sos_id]
    for pos, ch in enumerate(s):
        try:
            ids.append(v.char_to_id[ch])
        except KeyError:
            raise TokenizationError(f"unknown character {ch!r} at position {pos}") from None
    ids.append(v.eos_id)
    return TokenSequence(tuple(ids))


def detokenize(t: TokenSequence | Sequence[int], v: Vocabulary) -> str:
    ids = t.ids if isinstance(t, TokenSequence) else t
    out = []
    for i in ids:
        i = int(i)
        if i < 0 or i >= v.size:
            raise TokenizationError(f"token id {i} out of range for vocabulary of size {v.size}")
        if i == v.eos_id:
            break
        if i == v.sos_id or i == v.pad_id:
            continue
        out.append(v.id_to_char[i])
    return "".join(out)


def pad_batch(seqs: Sequence[TokenSequence], max_len: int, pad_id: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack sequences into a (batch, max_len) id matrix plus a boolean mask that
    is True exactly at pad positions."""
    ids = np.full((len(seqs), max_len), pad_id, dtype=np.int64)
    for row, seq in enumerate(seqs):
        if len(seq.ids) > max_len:
            raise TokenizationError(
                f"sequence {row} has length {len(seq.ids)} > max_len {max_len}"
            )
        ids[row, : len(seq.ids)] = seq.ids
    return ids, ids == pad_id


def max_len_for(corpus: Iterable[str]) -> int:
    """Maximum token length (with SOS/EOS) over a corpus."""
    return max(len(s) for s in corpus) + 2
