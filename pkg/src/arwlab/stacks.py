"""Instruction stacks of the site-wise representation.

Stacks are never stored. ``instruction(x, k)`` is computed from
(seed, x, k) alone, so every toppling order reads the same stack.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from arwlab import _hashing
from arwlab.lattice import Box, direction_to, neighbors


@dataclass(frozen=True)
class Params:
    d: int
    lam: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension d must be a positive integer, got {self.d}")
        if not (self.lam > 0 and np.isfinite(self.lam)):
            raise ValueError(f"sleep rate lambda must satisfy lambda > 0 (finite), got {self.lam}")

    @property
    def p_s(self) -> float:
        return self.lam / (1.0 + self.lam)

    @property
    def p_j(self) -> float:
        return 1.0 / (1.0 + self.lam)

    @property
    def two_d(self) -> int:
        return 2 * self.d


@dataclass(frozen=True)
class Instruction:
    """Sleep (direction -1) or a jump along ``lattice.neighbors`` index ``direction``."""

    direction: int = -1

    @property
    def is_sleep(self) -> bool:
        return self.direction < 0

    def __repr__(self):
        return "Sleep" if self.is_sleep else f"Jump({self.direction})"


SLEEP = Instruction()


def decode(u: np.ndarray, p_s: float, two_d: int) -> np.ndarray:
    """Partition [0, 1) as [0, p_s) -> sleep, then 2d equal slices -> jumps."""
    u = np.asarray(u, dtype=np.float64)
    j = np.minimum(((u - p_s) / (1.0 - p_s) * two_d).astype(np.int64), two_d - 1)
    return np.where(u < p_s, -1, j)


@dataclass(frozen=True)
class StackSource:
    seed: int
    params: Params

    def __post_init__(self):
        object.__setattr__(self, "seed", _hashing.parse_seed(self.seed))

    def codes(self, x: Sequence[int], ks) -> np.ndarray:
        """Instruction codes (-1 sleep, else jump direction) at positions ``ks`` of stack x."""
        key = _hashing.site_key(x)
        h = _hashing.stream_values(self.seed, key, np.atleast_1d(ks))
        return decode(_hashing.to_unit(h), self.params.p_s, self.params.two_d)

    def instruction(self, x: Sequence[int], k: int) -> Instruction:
        if len(x) != self.params.d:
            raise ValueError(f"site {tuple(x)} does not have {self.params.d} coordinates")
        return Instruction(int(self.codes(x, [k])[0]))


def instruction(src: StackSource, x: Sequence[int], k: int) -> Instruction:
    return src.instruction(x, k)


def jump_count_into(src: StackSource, box: Box, target: Sequence[int], odometer: np.ndarray) -> int:
    """J_target(m): jump instructions toward ``target`` among the first m(x) of each neighbor x.

    Neighbors of ``target`` outside ``box`` are not counted; the odometer is
    indexed by ``box``'s dense order.
    """
    total = 0
    for x in neighbors(target):
        if x not in box:
            continue
        m = int(odometer[box.index(x)])
        if m == 0:
            continue
        total += int(np.count_nonzero(src.codes(x, np.arange(m)) == direction_to(x, target)))
    return total
