"""Share tables: constant-size bins with pseudo-random survivor selection.

Every sub-table has ``B = M * t`` bins of size one.  When several elements
hash into one bin, the element with the best ordering value wins; the
ordering function is shared by consecutive sub-table pairs with the
comparison flipped on the even member.  A second insertion with a fresh
mapping and the flipped comparator fills bins left empty by the first.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Iterator, Protocol, Sequence

import numpy as np

from .errors import NonCanonical, SetTooLarge
from .field import Q, random_fe_array
from .keyed_hash import FIRST, SECOND, KeyedHasher, ParticipantKey, first_pass_ascending, pair_index
from .shares import SessionParams

_UMAX = np.uint64(np.iinfo(np.uint64).max)


def place(
    bin1: np.ndarray,
    bin2: np.ndarray | None,
    prio: np.ndarray,
    n_bins: int,
    group: np.ndarray | None = None,
    n_groups: int = 1,
) -> np.ndarray:
    """Run first and (optionally) second insertion over one or more tables.

    ``prio`` is the first-pass priority (smaller wins); the second pass uses
    its bitwise complement, i.e. the reversed order.  Every element takes
    part in the second pass, but only bins the first pass left empty are
    available to it, so an element may end up in two cells.  ``group`` lets
    many independent tables share one call (used by the Monte-Carlo
    harness).  Returns an int8 bitmask per element: FIRST | SECOND.
    """
    prio = np.asarray(prio, dtype=np.uint64)
    n = prio.shape[0]
    offset = 0 if group is None else np.asarray(group, dtype=np.int64) * n_bins
    size = n_bins * n_groups
    key1 = np.asarray(bin1, dtype=np.int64) + offset

    result = np.zeros(n, dtype=np.int8)
    winners1 = _bin_winners(key1, prio, size)
    result[winners1] = FIRST
    if bin2 is None:
        return result

    occupied = np.zeros(size, dtype=bool)
    occupied[key1[winners1]] = True
    key2 = np.asarray(bin2, dtype=np.int64) + offset
    cand = np.flatnonzero(~occupied[key2])
    if cand.size:
        winners2 = cand[_bin_winners(key2[cand], ~prio[cand], size)]
        result[winners2] |= SECOND
    return result


def _bin_winners(keys: np.ndarray, prio: np.ndarray, size: int) -> np.ndarray:
    best = np.full(size, _UMAX, dtype=np.uint64)
    np.minimum.at(best, keys, prio)
    idx = np.flatnonzero(best[keys] == prio)
    # equal priorities inside one bin keep only the first element
    _, first = np.unique(keys[idx], return_index=True)
    return idx[first] if first.size != idx.size else idx


class PlacementHashes(Protocol):
    """Per-element placement inputs for a fixed element list."""

    def bins(self, alpha: int, pass_: int) -> np.ndarray: ...

    def orders(self, alpha: int) -> np.ndarray: ...


class KeyedPlacement:
    """Placement hashes from the participants' shared HMAC key."""

    def __init__(
        self,
        key: ParticipantKey,
        r: int,
        elements: Sequence[bytes],
        n_bins: int,
        pair_reversal: bool = True,
    ):
        self.hasher = KeyedHasher(key, r)
        self.elements = elements
        self.n_bins = n_bins
        self.pair_reversal = pair_reversal
        self._orders: dict[int, np.ndarray] = {}

    def bins(self, alpha: int, pass_: int) -> np.ndarray:
        return self.hasher.bins(alpha, self.elements, pass_, self.n_bins)

    def orders(self, alpha: int) -> np.ndarray:
        index = pair_index(alpha) if self.pair_reversal else alpha
        if index not in self._orders:
            self._orders = {index: self.hasher.orders(alpha, self.elements, self.pair_reversal)}
        return self._orders[index]


def priority_ranks(orders: np.ndarray, elements: Sequence[bytes]) -> np.ndarray:
    """Rank of each element under (ordering value, element bytes) ascending."""
    vals = [int(v) for v in orders]
    ranked = sorted(range(len(vals)), key=lambda i: (vals[i], elements[i]))
    ranks = np.empty(len(vals), dtype=np.uint64)
    ranks[ranked] = np.arange(len(vals), dtype=np.uint64)
    return ranks


def first_pass_priority(ranks: np.ndarray, alpha: int, pair_reversal: bool = True) -> np.ndarray:
    if first_pass_ascending(alpha, pair_reversal):
        return ranks
    return np.uint64(max(len(ranks) - 1, 0)) - ranks


@dataclass
class SlotIndexMap:
    """Private map from a participant's elements to the cells they occupy."""

    entries: dict[bytes, list[tuple[int, int]]] = field(default_factory=dict)

    def add(self, element: bytes, alpha: int, bin_: int) -> None:
        self.entries.setdefault(element, []).append((alpha, bin_))

    def cells(self) -> Iterator[tuple[bytes, int, int]]:
        for element, slots in self.entries.items():
            for alpha, bin_ in slots:
                yield element, alpha, bin_

    def by_cell(self) -> dict[tuple[int, int], bytes]:
        return {(alpha, bin_): element for element, alpha, bin_ in self.cells()}

    def __len__(self) -> int:
        return sum(len(v) for v in self.entries.values())


@dataclass
class ShareTable:
    """A participant's T x B grid of field elements.

    Sub-tables are numbered from 1 in every public interface; ``cells`` is
    indexed from 0.  ``occupancy`` only exists while the table is built and
    is never serialized.
    """

    T: int
    B: int
    cells: np.ndarray
    occupancy: np.ndarray | None = None

    HEADER = struct.Struct("<HI")

    @classmethod
    def empty(cls, T: int, B: int) -> "ShareTable":
        return cls(T, B, np.zeros((T, B), dtype=np.uint64), np.zeros((T, B), dtype=bool))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.T, self.B)

    def cell(self, alpha: int, bin_: int) -> int:
        return int(self.cells[alpha - 1, bin_])

    def to_bytes(self) -> bytes:
        return self.HEADER.pack(self.T, self.B) + self.cells.astype("<u8", copy=False).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes | memoryview) -> "ShareTable":
        T, B = cls.HEADER.unpack_from(data)
        body = memoryview(data)[cls.HEADER.size :]
        if len(body) != 8 * T * B:
            raise ValueError(f"share table body has {len(body)} bytes, expected {8 * T * B}")
        cells = np.frombuffer(body, dtype="<u8").astype(np.uint64).reshape(T, B)
        if cells.size and int(cells.max()) >= Q:
            raise NonCanonical("share table contains a non-canonical cell")
        return cls(T, B, cells)

    @property
    def nbytes(self) -> int:
        return self.HEADER.size + 8 * self.T * self.B


def select_survivors(
    elements: Sequence[bytes],
    alpha: int,
    pass_: int,
    key: ParticipantKey,
    r: int,
    n_bins: int,
    pair_reversal: bool = True,
) -> dict[int, bytes]:
    """Winning element per bin for one sub-table and insertion pass.

    The second pass sees the whole set but only bins the first pass left
    empty.
    """
    hashes = KeyedPlacement(key, r, elements, n_bins, pair_reversal)
    passes, bins1, bins2 = _place_subtable(hashes, elements, alpha, n_bins, True, pair_reversal)
    chosen = bins1 if pass_ == FIRST else bins2
    return {int(chosen[i]): elements[i] for i in np.flatnonzero(passes & pass_)}


def _place_subtable(
    hashes: PlacementHashes,
    elements: Sequence[bytes],
    alpha: int,
    n_bins: int,
    second_insertion: bool,
    pair_reversal: bool,
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    bins1 = hashes.bins(alpha, FIRST)
    bins2 = hashes.bins(alpha, SECOND) if second_insertion else None
    ranks = priority_ranks(hashes.orders(alpha), elements)
    prio = first_pass_priority(ranks, alpha, pair_reversal)
    return place(bins1, bins2, prio, n_bins), bins1, bins2


def build_share_table(
    elements: Sequence[bytes],
    params: SessionParams,
    share_fn: Callable[[int, bytes], int],
    hashes: PlacementHashes | None = None,
    key: ParticipantKey | None = None,
    rng: np.random.Generator | None = None,
    second_insertion: bool = True,
    pair_reversal: bool = True,
    fill: bool = True,
) -> tuple[ShareTable, SlotIndexMap]:
    """Place every element in each sub-table and write its share.

    Placement hashes come either from ``hashes`` (collusion-safe path) or
    from ``key`` (non-interactive path).  Unless ``fill`` is false, empty
    cells are then overwritten with uniform dummies.
    """
    elements = list(elements)
    if len(elements) > params.M:
        raise SetTooLarge(f"set has {len(elements)} elements, session maximum is {params.M}")
    if len(set(elements)) != len(elements):
        raise ValueError("element list contains duplicates")
    if hashes is None:
        if key is None:
            raise ValueError("either placement hashes or a participant key is required")
        hashes = KeyedPlacement(key, params.r, elements, params.B, pair_reversal)

    table = ShareTable.empty(params.T, params.B)
    slots = SlotIndexMap()
    if elements:
        for alpha in range(1, params.T + 1):
            passes, bins1, bins2 = _place_subtable(
                hashes, elements, alpha, params.B, second_insertion, pair_reversal
            )
            row, occ = table.cells[alpha - 1], table.occupancy[alpha - 1]
            for i in np.flatnonzero(passes):
                share = share_fn(alpha, elements[i])
                for pass_, bins in ((FIRST, bins1), (SECOND, bins2)):
                    if passes[i] & pass_:
                        b = int(bins[i])
                        row[b] = share
                        occ[b] = True
                        slots.add(elements[i], alpha, b)
    if fill:
        table = fill_dummies(table, rng)
    return table, slots


def fill_dummies(table: ShareTable, rng: np.random.Generator | None = None) -> ShareTable:
    """Overwrite unoccupied cells with uniform field elements."""
    cells = table.cells.copy()
    occ = table.occupancy if table.occupancy is not None else np.ones(cells.shape, dtype=bool)
    empty = ~occ
    cells[empty] = random_fe_array(int(empty.sum()), rng)
    return ShareTable(table.T, table.B, cells, np.ones(cells.shape, dtype=bool))
