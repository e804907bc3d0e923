import itertools
import random
from math import comb

import numpy as np
import pytest

from otmpsi.aggregator import (
    HitRecord,
    HitReport,
    decode_hits,
    encode_hits,
    expected_interpolations,
    map_indexes_to_elements,
    notify_participants,
    reconstruct_hits,
    reconstruct_stacked,
)
from otmpsi.errors import GeometryMismatch, ParameterError
from otmpsi.field import Q, lagrange_basis_at_zero, poly_eval_no_constant
from otmpsi.tables import ShareTable, SlotIndexMap


def _random_tables(N, T, B, seed):
    rng = np.random.default_rng(seed)
    return {i: ShareTable(T, B, rng.integers(0, Q, (T, B), dtype=np.uint64)) for i in range(1, N + 1)}


def _plant(tables, ids, alpha, b, t, rnd):
    coeffs = [rnd.randrange(Q) for _ in range(t - 1)]
    for i in ids:
        tables[i].cells[alpha - 1, b] = poly_eval_no_constant(coeffs, i)


def _brute_force(tables, t):
    """Direct Lagrange evaluation per (combination, cell) with Python ints."""
    hits = {}
    ids = sorted(tables)
    T, B = tables[ids[0]].shape
    for combo in itertools.combinations(ids, t):
        lam = lagrange_basis_at_zero(list(combo)).coefficients
        for a in range(T):
            for b in range(B):
                if sum(l * int(tables[i].cells[a, b]) for l, i in zip(lam, combo)) % Q == 0:
                    hits.setdefault((a + 1, b), set()).update(combo)
    return hits


def test_reconstruction_matches_brute_force():
    rnd = random.Random(1)
    tables = _random_tables(6, 3, 7, 1)
    _plant(tables, [1, 2, 4], 1, 3, 3, rnd)
    _plant(tables, [2, 3, 5, 6], 3, 0, 3, rnd)
    _plant(tables, [1, 6], 2, 6, 3, rnd)  # under threshold
    report = reconstruct_hits(tables, 3)
    got = {(r.alpha, r.bin): set(r.participants) for r in report.records}
    assert got == _brute_force(tables, 3)
    assert got == {(1, 3): {1, 2, 4}, (3, 0): {2, 3, 5, 6}}
    assert report.interpolations == comb(6, 3) * 3 * 7


def test_sequence_input_and_workers():
    rnd = random.Random(2)
    tables = _random_tables(5, 2, 50, 2)
    _plant(tables, [1, 3], 2, 10, 2, rnd)
    seq = [tables[i] for i in range(1, 6)]
    a = reconstruct_hits(seq, 2)
    b = reconstruct_hits(tables, 2, workers=3)
    assert a.records == b.records == [HitRecord(2, 10, frozenset({1, 3}))]


def test_t_equals_n_is_one_combination():
    tables = _random_tables(4, 2, 5, 3)
    report = reconstruct_hits(tables, 4)
    assert report.interpolations == 2 * 5 == expected_interpolations(4, 4, 2, 5)


def test_geometry_and_threshold_errors():
    tables = _random_tables(3, 2, 5, 4)
    tables[3] = ShareTable(2, 6, np.zeros((2, 6), dtype=np.uint64))
    with pytest.raises(GeometryMismatch):
        reconstruct_hits(tables, 2)
    with pytest.raises(ParameterError):
        reconstruct_hits(_random_tables(2, 1, 1, 5), 3)
    with pytest.raises(GeometryMismatch):
        reconstruct_stacked(np.zeros((2, 9), dtype=np.uint64), [1, 2], 2, 2, 5)


def test_notification_masks_other_participants():
    records = [HitRecord(1, 4, frozenset({1, 2, 5})), HitRecord(2, 0, frozenset({2, 3}))]
    notes = notify_participants(HitReport(records, N=5))
    assert notes[2] == [HitRecord(1, 4, frozenset({2})), HitRecord(2, 0, frozenset({2}))]
    assert notes[4] == []
    assert all(rec.participants == {i} for i, recs in notes.items() for rec in recs)


def test_hits_encoding():
    records = [HitRecord(1, 4, frozenset({1, 9, 10})), HitRecord(20, 2**31, frozenset({16}))]
    data = encode_hits(records, 16)
    assert len(data) == 6 + 2 * (6 + 2)
    assert data[6 + 6 : 6 + 8] == bytes([0b00000001, 0b00000011])
    assert decode_hits(data) == (records, 16)
    with pytest.raises(ValueError):
        decode_hits(data[:-1])


def test_index_mapping_drops_dummies():
    slots = SlotIndexMap()
    slots.add(b"e1", 1, 5)
    slots.add(b"e1", 2, 7)
    slots.add(b"e2", 1, 6)
    assert map_indexes_to_elements([(1, 5), (2, 7), (3, 3)], slots) == {b"e1"}
