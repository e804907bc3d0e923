"""Aggregator: combinatorial Lagrange reconstruction over aligned cells.

For every t-subset of participants the Lagrange basis at zero is computed
once; each of the T*B aligned cells then costs t multiplications.  A cell
whose interpolation is exactly zero is a hit.
"""

from __future__ import annotations

import itertools
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb
from typing import Iterable, Mapping, Sequence

import numba
import numpy as np

from .errors import GeometryMismatch, ParameterError
from .field import Q, lagrange_basis_at_zero
from .tables import ShareTable, SlotIndexMap


@numba.njit(cache=True, nogil=True)
def _mulmod(a, b):
    m32 = np.uint64(0xFFFFFFFF)
    q = np.uint64(Q)
    a_lo = a & m32
    a_hi = a >> np.uint64(32)
    b_lo = b & m32
    b_hi = b >> np.uint64(32)
    lo = a_lo * b_lo
    mid = a_lo * b_hi + a_hi * b_lo
    s = ((a_hi * b_hi) << np.uint64(3)) + (mid >> np.uint64(29))
    s += (mid & np.uint64(0x1FFFFFFF)) << np.uint64(32)
    s += (lo & q) + (lo >> np.uint64(61))
    s = (s & q) + (s >> np.uint64(61))
    if s >= q:
        s -= q
    return s


@numba.njit(cache=True, nogil=True)
def _zero_cells(stack, rows, lam, out):
    """Write indices of cells where sum_i lam[i] * stack[rows[i], c] == 0."""
    q = np.uint64(Q)
    n = stack.shape[1]
    found = 0
    for c in range(n):
        acc = np.uint64(0)
        for i in range(rows.shape[0]):
            acc += _mulmod(lam[i], stack[rows[i], c])
            if acc >= q:
                acc -= q
        if acc == 0:
            out[found] = c
            found += 1
    return found


@dataclass(frozen=True)
class HitRecord:
    alpha: int
    bin: int
    participants: frozenset[int]


@dataclass
class HitReport:
    """Merged hits plus the per-participant view of them."""

    records: list[HitRecord]
    N: int
    per_participant: dict[int, list[tuple[int, int]]] = field(default_factory=dict)
    interpolations: int = 0

    def __post_init__(self) -> None:
        if not self.per_participant:
            view: dict[int, list[tuple[int, int]]] = {i: [] for i in range(1, self.N + 1)}
            for rec in self.records:
                for i in sorted(rec.participants):
                    view[i].append((rec.alpha, rec.bin))
            self.per_participant = view

    def to_bytes(self) -> bytes:
        return encode_hits(self.records, self.N)


def _check_geometry(tables: Mapping[int, ShareTable]) -> tuple[int, int]:
    shapes = {tab.shape for tab in tables.values()}
    if len(shapes) != 1:
        raise GeometryMismatch(f"share tables disagree on (T, B): {sorted(shapes)}")
    return shapes.pop()


def reconstruct_hits(
    tables: Mapping[int, ShareTable] | Sequence[ShareTable],
    t: int,
    workers: int = 1,
) -> HitReport:
    """Evaluate every t-combination of participants on every aligned cell.

    ``tables`` maps participant id to table; a plain sequence is taken as
    ids 1..N.  All C(N, t) combinations are evaluated even after hits so
    the running time does not depend on the data.
    """
    if not isinstance(tables, Mapping):
        tables = {i + 1: tab for i, tab in enumerate(tables)}
    ids = sorted(tables)
    if t < 1 or t > len(ids):
        raise ParameterError(f"threshold {t} impossible with {len(ids)} tables")
    T, B = _check_geometry(tables)
    stack = np.stack([tables[i].cells.reshape(-1) for i in ids]).astype(np.uint64, copy=False)
    return reconstruct_stacked(stack, ids, t, T, B, workers)


def reconstruct_stacked(
    stack: np.ndarray,
    ids: Sequence[int],
    t: int,
    T: int,
    B: int,
    workers: int = 1,
) -> HitReport:
    """Same as :func:`reconstruct_hits` on an (N, T*B) uint64 array.

    Row j of ``stack`` belongs to participant ``ids[j]``.  Useful when the
    caller already holds the cells contiguously and cannot afford a copy.
    """
    stack = np.ascontiguousarray(stack, dtype=np.uint64)
    if stack.shape != (len(ids), T * B):
        raise GeometryMismatch(f"stack shape {stack.shape} is not ({len(ids)}, {T * B})")
    if t < 1 or t > len(ids):
        raise ParameterError(f"threshold {t} impossible with {len(ids)} tables")
    combos = list(itertools.combinations(range(len(ids)), t))

    def run(combo: tuple[int, ...]) -> np.ndarray:
        basis = lagrange_basis_at_zero([ids[j] for j in combo])
        lam = np.array(basis.coefficients, dtype=np.uint64)
        out = np.empty(stack.shape[1], dtype=np.int64)
        found = _zero_cells(stack, np.array(combo, dtype=np.int64), lam, out)
        return out[:found].copy()

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            found_cells = list(pool.map(run, combos))
    else:
        found_cells = [run(c) for c in combos]

    merged: dict[int, set[int]] = {}
    for combo, cells in zip(combos, found_cells):
        members = {ids[j] for j in combo}
        for c in cells.tolist():
            merged.setdefault(c, set()).update(members)
    records = [
        HitRecord(c // B + 1, c % B, frozenset(merged[c])) for c in sorted(merged)
    ]
    return HitReport(records, N=max(ids), interpolations=len(combos) * T * B)


def expected_interpolations(N: int, t: int, T: int, B: int) -> int:
    return comb(N, t) * T * B


def notify_participants(report: HitReport) -> dict[int, list[HitRecord]]:
    """Per participant, the records it belongs to, stripped to its own bit.

    Other participants' membership is aggregator output only; a participant
    learns nothing beyond which of its own cells were hits.
    """
    out: dict[int, list[HitRecord]] = {i: [] for i in range(1, report.N + 1)}
    for rec in report.records:
        for i in rec.participants:
            out[i].append(HitRecord(rec.alpha, rec.bin, frozenset({i})))
    return out


def map_indexes_to_elements(
    indexes: Iterable[tuple[int, int]], slot_map: SlotIndexMap
) -> set[bytes]:
    """Elements owning any reported cell; reported dummy cells are dropped."""
    by_cell = slot_map.by_cell()
    return {by_cell[cell] for cell in indexes if cell in by_cell}


# -- wire format -------------------------------------------------------------

_HITS_HEAD = struct.Struct("<HI")
_REC_HEAD = struct.Struct("<HI")


def _bitset(members: Iterable[int], N: int) -> bytes:
    buf = bytearray((N + 7) // 8)
    for i in members:
        buf[(i - 1) // 8] |= 1 << ((i - 1) % 8)
    return bytes(buf)


def _members(bits: bytes) -> frozenset[int]:
    return frozenset(
        8 * byte_i + bit + 1 for byte_i, b in enumerate(bits) for bit in range(8) if b >> bit & 1
    )


def encode_hits(records: Sequence[HitRecord], N: int) -> bytes:
    """N (u16) || count (u32) || count * (alpha u16, bin u32, bitset)."""
    parts = [_HITS_HEAD.pack(N, len(records))]
    for rec in records:
        parts.append(_REC_HEAD.pack(rec.alpha, rec.bin))
        parts.append(_bitset(rec.participants, N))
    return b"".join(parts)


def decode_hits(data: bytes) -> tuple[list[HitRecord], int]:
    N, count = _HITS_HEAD.unpack_from(data)
    width = (N + 7) // 8
    pos = _HITS_HEAD.size
    if len(data) != pos + count * (_REC_HEAD.size + width):
        raise ValueError("HITS payload length does not match its record count")
    records = []
    for _ in range(count):
        alpha, bin_ = _REC_HEAD.unpack_from(data, pos)
        pos += _REC_HEAD.size
        records.append(HitRecord(alpha, bin_, _members(data[pos : pos + width])))
        pos += width
    return records, N
