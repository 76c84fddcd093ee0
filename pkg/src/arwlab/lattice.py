"""Finite boxes V_n = {-n, ..., n}^d of the integer lattice.

Sites are plain tuples of ints. Inside a box every site also has a dense
index (mixed-radix / C-order over the shifted coordinates), which is what
the toppling kernels work with.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from arwlab import _hashing

Site = tuple[int, ...]

# Hard cap on the number of sites; well inside the int64 index range and
# far beyond anything that fits in memory with per-site arrays.
MAX_SITES = 2**40


def neighbors(x: Sequence[int], d: int | None = None) -> list[Site]:
    """The 2d nearest neighbors of ``x``.

    Order is fixed: axis 0 minus, axis 0 plus, axis 1 minus, ... Jump
    instruction ``j`` always moves a particle to ``neighbors(x)[j]``.
    """
    x = tuple(int(c) for c in x)
    if d is not None and len(x) != d:
        raise ValueError(f"site {x} does not have {d} coordinates")
    out = []
    for axis in range(len(x)):
        for step in (-1, 1):
            y = list(x)
            y[axis] += step
            out.append(tuple(y))
    return out


def direction_to(x: Sequence[int], y: Sequence[int]) -> int:
    """Jump direction index that moves a particle from x to the neighbor y."""
    diff = [b - a for a, b in zip(x, y)]
    nonzero = [(axis, v) for axis, v in enumerate(diff) if v != 0]
    if len(nonzero) != 1 or abs(nonzero[0][1]) != 1:
        raise ValueError(f"{tuple(y)} is not a neighbor of {tuple(x)}")
    axis, v = nonzero[0]
    return 2 * axis + (1 if v > 0 else 0)


@dataclass(frozen=True)
class Box:
    """The box V_n in dimension d, with precomputed index tables.

    Use :func:`make_box` rather than constructing directly.
    """

    d: int
    n: int
    coords: np.ndarray = field(init=False, repr=False, compare=False)
    neighbor_table: np.ndarray = field(init=False, repr=False, compare=False)
    site_keys: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        side = 2 * self.n + 1
        grids = np.indices((side,) * self.d, dtype=np.int64).reshape(self.d, -1).T
        coords = grids - self.n
        coords.setflags(write=False)

        nbr = np.full((coords.shape[0], 2 * self.d), -1, dtype=np.int64)
        for axis in range(self.d):
            for s, step in enumerate((-1, 1)):
                shifted = coords.copy()
                shifted[:, axis] += step
                inside = np.all(np.abs(shifted) <= self.n, axis=1)
                idx = np.ravel_multi_index(tuple((shifted[inside] + self.n).T), (side,) * self.d)
                nbr[inside, 2 * axis + s] = idx
        nbr.setflags(write=False)

        keys = _hashing.site_keys(coords)
        keys.setflags(write=False)

        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "neighbor_table", nbr)
        object.__setattr__(self, "site_keys", keys)

    @property
    def side(self) -> int:
        return 2 * self.n + 1

    @property
    def size(self) -> int:
        return self.side**self.d

    @property
    def origin(self) -> Site:
        return (0,) * self.d

    @property
    def origin_index(self) -> int:
        return (self.size - 1) // 2

    def __len__(self) -> int:
        return self.size

    def __contains__(self, x) -> bool:
        x = tuple(x)
        return len(x) == self.d and all(abs(c) <= self.n for c in x)

    def index(self, x: Sequence[int]) -> int:
        if tuple(x) not in self:
            raise KeyError(f"site {tuple(x)} is outside V_{self.n} in d={self.d}")
        idx = 0
        for c in x:
            idx = idx * self.side + (int(c) + self.n)
        return idx

    def site(self, index: int) -> Site:
        if not 0 <= index < self.size:
            raise IndexError(index)
        return tuple(int(c) for c in self.coords[index])

    def sites(self) -> Iterator[Site]:
        for i in range(self.size):
            yield self.site(i)

    def mask(self, sites) -> np.ndarray:
        """Boolean array over dense indices marking ``sites``."""
        m = np.zeros(self.size, dtype=bool)
        for x in sites:
            m[self.index(x)] = True
        return m

    def inner_mask(self, margin: int) -> np.ndarray:
        if margin < 0 or margin > self.n:
            raise ValueError(f"margin must lie in [0, {self.n}], got {margin}")
        return np.all(np.abs(self.coords) <= self.n - margin, axis=1)

    def ball(self) -> list[Site]:
        """The origin together with its 2d neighbors (B_1)."""
        return [self.origin] + neighbors(self.origin)


def make_box(d: int, n: int) -> Box:
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d}")
    if int(n) != n or n < 0:
        raise ValueError(f"radius must be a nonnegative integer, got {n}")
    d, n = int(d), int(n)
    if (2 * n + 1) ** d > MAX_SITES:
        raise OverflowError(f"V_{n} in d={d} has {(2 * n + 1) ** d} sites, above the limit {MAX_SITES}")
    return Box(d, n)


def inner_box_sites(box: Box, margin: int) -> list[Site]:
    """Sites of V_{n - margin}, in dense-index order."""
    inner = box.inner_mask(margin)
    return [box.site(i) for i in np.flatnonzero(inner)]
