from __future__ import annotations

import itertools
import string
from dataclasses import dataclass
from typing import Iterable, Iterator


@dataclass(frozen=True, order=True)
class ModalitySet:
    """Subset of the ``n`` modality slots, stored as a bitmask.

    Used for the observed set; ``missing`` is the complement.
    """

    mask: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one modality slot")
        if not 0 <= self.mask < (1 << self.n):
            raise ValueError(f"mask {self.mask} out of range for {self.n} slots")

    @classmethod
    def of(cls, indices: Iterable[int], n: int) -> "ModalitySet":
        mask = 0
        for i in indices:
            if not 0 <= i < n:
                raise ValueError(f"modality index {i} out of range for {n} slots")
            mask |= 1 << i
        return cls(mask, n)

    @classmethod
    def full(cls, n: int) -> "ModalitySet":
        return cls((1 << n) - 1, n)

    @classmethod
    def from_letters(cls, letters: str, n: int) -> "ModalitySet":
        return cls.of((string.ascii_uppercase.index(c) for c in letters.upper()), n)

    def __contains__(self, m: int) -> bool:
        return bool(self.mask >> m & 1)

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices)

    def __len__(self) -> int:
        return bin(self.mask).count("1")

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(m for m in range(self.n) if self.mask >> m & 1)

    @property
    def missing(self) -> tuple[int, ...]:
        return tuple(m for m in range(self.n) if not self.mask >> m & 1)

    @property
    def is_full(self) -> bool:
        return self.mask == (1 << self.n) - 1

    @property
    def letters(self) -> str:
        return "".join(string.ascii_uppercase[m] for m in self.indices)

    def __str__(self) -> str:
        return self.letters or "-"


def all_subsets(n: int) -> list[ModalitySet]:
    """Every non-empty subset, ordered by size then lexicographically."""
    out = []
    for k in range(1, n + 1):
        for combo in itertools.combinations(range(n), k):
            out.append(ModalitySet.of(combo, n))
    return out
