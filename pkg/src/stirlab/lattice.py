"""Lattice geometry and the sparse occupancy set.

Sites of Z^d are packed into one non-negative int64 key: each coordinate is
offset-binary encoded in ``bits = 63 // d`` bits.  The key is hashed into an
open-addressing table (linear probing, backward-shift deletion) through the
SplitMix64 finalizer, which mixes every coordinate field into every slot bit
and keeps straight lines of occupied sites from clustering in the table.

Occupied sites also live in a dense particle array, so a uniform particle can
be picked in O(1) and removed by swap-with-last.  The numba functions below
operate on a bundle of plain arrays:

    tkeys, tvals : hash table (key or EMPTY, particle index)
    pos          : int64[cap, d] coordinates of particle i
    pkeys        : int64[cap] key of particle i
    meta         : int64[2] = (count, ordered neighbour pair count)

The simulator drives these kernels directly; :class:`Configuration` wraps the
same kernels for use from Python.
"""
from __future__ import annotations

from collections.abc import Iterable, Sequence
from typing import Literal

import numpy as np
from numba import njit

from .rng import mix64_u

LatticePoint = tuple[int, ...]

EMPTY = -1
COUNT = 0
PAIRS = 1


class InvalidDimensionError(ValueError):
    pass


class PreconditionError(ValueError):
    pass


class GeometryError(ValueError):
    pass


class LatticeOverflowError(OverflowError):
    """A coordinate left the range representable by the packed key."""


def field_bits(d: int) -> int:
    return 63 // d


def coord_limit(d: int) -> int:
    """Largest |coordinate| a site may have (neighbour keys stay in range)."""
    return (1 << (field_bits(d) - 1)) - 2


def neighbors(x: Sequence[int], d: int) -> list[LatticePoint]:
    """The 2d sites at L1 distance one from ``x``."""
    if d < 1:
        raise InvalidDimensionError(f"dimension must be >= 1, got {d}")
    if len(x) != d:
        raise InvalidDimensionError(f"point {tuple(x)} does not have dimension {d}")
    out = []
    for j in range(d):
        for step in (1, -1):
            y = list(x)
            y[j] += step
            out.append(tuple(y))
    return out


def is_neighbor(x: Sequence[int], y: Sequence[int]) -> bool:
    return sum(abs(a - b) for a, b in zip(x, y)) == 1


@njit(cache=True, inline="always")
def pack_key(coords, d):
    bits = 63 // d
    off = 1 << (bits - 1)
    key = 0
    for j in range(d):
        key = (key << bits) | (coords[j] + off)
    return key


@njit(cache=True, inline="always")
def unit_shift(j, d):
    """Key increment for +e_j."""
    return 1 << ((63 // d) * (d - 1 - j))


@njit(cache=True, inline="always")
def in_range(coords, d):
    lim = (1 << (63 // d - 1)) - 2
    for j in range(d):
        if coords[j] > lim or coords[j] < -lim:
            return False
    return True


@njit(cache=True, inline="always")
def _home(key, mask):
    return np.int64(mix64_u(np.uint64(key)) & np.uint64(mask))


@njit(cache=True, inline="always")
def find_slot(tkeys, key):
    mask = tkeys.shape[0] - 1
    i = _home(key, mask)
    while True:
        k = tkeys[i]
        if k == key:
            return i
        if k == EMPTY:
            return -1
        i = (i + 1) & mask


@njit(cache=True, inline="always")
def table_insert(tkeys, tvals, key, value):
    mask = tkeys.shape[0] - 1
    i = _home(key, mask)
    while tkeys[i] != EMPTY:
        i = (i + 1) & mask
    tkeys[i] = key
    tvals[i] = value


@njit(cache=True, inline="always")
def table_delete(tkeys, tvals, slot):
    mask = tkeys.shape[0] - 1
    hole = slot
    j = slot
    while True:
        j = (j + 1) & mask
        k = tkeys[j]
        if k == EMPTY:
            break
        h = _home(k, mask)
        # entry at j may fill the hole iff its home is not cyclically in (hole, j]
        if hole <= j:
            stays = hole < h <= j
        else:
            stays = h > hole or h <= j
        if not stays:
            tkeys[hole] = k
            tvals[hole] = tvals[j]
            hole = j
    tkeys[hole] = EMPTY


@njit(cache=True, inline="always")
def occupied_neighbors(tkeys, key, d):
    n = 0
    for j in range(d):
        s = unit_shift(j, d)
        if find_slot(tkeys, key + s) >= 0:
            n += 1
        if find_slot(tkeys, key - s) >= 0:
            n += 1
    return n


@njit(cache=True, inline="always")
def add_site(tkeys, tvals, pos, pkeys, meta, coords, key, d, track=True):
    """Occupy an empty site; updates count and (if ``track``) the ordered pair count."""
    i = meta[COUNT]
    if track:
        meta[PAIRS] += 2 * occupied_neighbors(tkeys, key, d)
    table_insert(tkeys, tvals, key, i)
    for j in range(d):
        pos[i, j] = coords[j]
    pkeys[i] = key
    meta[COUNT] = i + 1


@njit(cache=True, inline="always")
def remove_particle(tkeys, tvals, pos, pkeys, meta, i, d, track=True):
    key = pkeys[i]
    table_delete(tkeys, tvals, find_slot(tkeys, key))
    if track:
        meta[PAIRS] -= 2 * occupied_neighbors(tkeys, key, d)
    last = meta[COUNT] - 1
    if i != last:
        for j in range(d):
            pos[i, j] = pos[last, j]
        pkeys[i] = pkeys[last]
        tvals[find_slot(tkeys, pkeys[i])] = i
    meta[COUNT] = last


@njit(cache=True, inline="always")
def move_particle(tkeys, tvals, pos, pkeys, meta, i, coords, key, d, track=True):
    """Move particle ``i`` to an empty site, keeping its index."""
    old = pkeys[i]
    table_delete(tkeys, tvals, find_slot(tkeys, old))
    if track:
        meta[PAIRS] -= 2 * occupied_neighbors(tkeys, old, d)
        meta[PAIRS] += 2 * occupied_neighbors(tkeys, key, d)
    table_insert(tkeys, tvals, key, i)
    for j in range(d):
        pos[i, j] = coords[j]
    pkeys[i] = key


@njit(cache=True)
def recount_pairs(tkeys, pkeys, count, d):
    total = 0
    for i in range(count):
        total += occupied_neighbors(tkeys, pkeys[i], d)
    return total


@njit(cache=True)
def clear_sites(tkeys, pkeys, meta):
    # collect slots first: emptying slots one by one would break probe chains
    count = meta[COUNT]
    slots = np.empty(count, dtype=np.int64)
    for i in range(count):
        slots[i] = find_slot(tkeys, pkeys[i])
    for i in range(count):
        tkeys[slots[i]] = EMPTY
    meta[COUNT] = 0
    meta[PAIRS] = 0


def table_size_for(capacity: int) -> int:
    size = 8
    while size < 2 * (capacity + 1):
        size *= 2
    return size


MoveKind = Literal["death", "birth", "jump"]


class Configuration:
    """Finite set of occupied sites of Z^d with incremental pair accounting.

    ``pair_count_ordered`` is the number of ordered pairs (x, y) of occupied
    sites with x - y a unit vector, i.e. twice the number of neighbouring pairs.
    """

    def __init__(self, d: int, sites: Iterable[Sequence[int]] = (), capacity: int = 16):
        if d < 1:
            raise InvalidDimensionError(f"dimension must be >= 1, got {d}")
        self.d = d
        self._alloc(max(capacity, 1))
        for x in sites:
            self.add(x)

    def _alloc(self, capacity: int) -> None:
        size = table_size_for(capacity)
        self._cap = capacity
        self._tkeys = np.full(size, EMPTY, dtype=np.int64)
        self._tvals = np.zeros(size, dtype=np.int64)
        self._pos = np.zeros((capacity, self.d), dtype=np.int64)
        self._pkeys = np.zeros(capacity, dtype=np.int64)
        self._meta = np.zeros(2, dtype=np.int64)

    def _grow(self) -> None:
        sites = self.occupied()
        self._alloc(2 * self._cap)
        for x in sites:
            self._insert(np.asarray(x, dtype=np.int64))

    def _coords(self, x: Sequence[int]) -> np.ndarray:
        if len(x) != self.d:
            raise InvalidDimensionError(f"point {tuple(x)} does not have dimension {self.d}")
        c = np.asarray(x, dtype=np.int64)
        if not in_range(c, self.d):
            raise LatticeOverflowError(f"site {tuple(x)} exceeds |coord| <= {coord_limit(self.d)}")
        return c

    def _insert(self, c: np.ndarray) -> None:
        add_site(self._tkeys, self._tvals, self._pos, self._pkeys, self._meta,
                 c, pack_key(c, self.d), self.d)

    @property
    def count(self) -> int:
        return int(self._meta[COUNT])

    @property
    def pair_count_ordered(self) -> int:
        return int(self._meta[PAIRS])

    def __len__(self) -> int:
        return self.count

    def __contains__(self, x: Sequence[int]) -> bool:
        return self._index(self._coords(x)) >= 0

    def _index(self, c: np.ndarray) -> int:
        slot = find_slot(self._tkeys, pack_key(c, self.d))
        return -1 if slot < 0 else int(self._tvals[slot])

    def occupied(self) -> list[LatticePoint]:
        return [tuple(int(v) for v in row) for row in self._pos[: self.count]]

    def add(self, x: Sequence[int]) -> bool:
        """Occupy ``x``; returns False if it was already occupied."""
        c = self._coords(x)
        if self._index(c) >= 0:
            return False
        if self.count == self._cap:
            self._grow()
        self._insert(c)
        return True

    def recount_pairs(self) -> int:
        return int(recount_pairs(self._tkeys, self._pkeys, self.count, self.d))

    def apply_move(self, kind: MoveKind, x: Sequence[int], y: Sequence[int] | None = None) -> bool:
        """Apply a death at ``x``, a birth ``x -> y`` or a stirring jump ``x -> y``.

        Returns True if the configuration changed.  A birth onto an occupied
        site is suppressed and a jump onto an occupied site swaps two equal
        values, so both leave the configuration untouched.
        """
        cx = self._coords(x)
        i = self._index(cx)
        if i < 0:
            raise PreconditionError(f"site {tuple(x)} is not occupied")
        if kind == "death":
            remove_particle(self._tkeys, self._tvals, self._pos, self._pkeys, self._meta, i, self.d)
            return True
        if kind not in ("birth", "jump"):
            raise ValueError(f"unknown move kind {kind!r}")
        if y is None or len(y) != self.d or not is_neighbor(x, y):
            raise GeometryError(f"{y} is not a lattice neighbour of {tuple(x)}")
        cy = self._coords(y)
        if self._index(cy) >= 0:
            return False
        if kind == "birth":
            if self.count == self._cap:
                self._grow()
            self._insert(cy)
        else:
            move_particle(self._tkeys, self._tvals, self._pos, self._pkeys, self._meta,
                          i, cy, pack_key(cy, self.d), self.d)
        return True

    def __repr__(self) -> str:
        return f"Configuration(d={self.d}, count={self.count}, pairs={self.pair_count_ordered})"
