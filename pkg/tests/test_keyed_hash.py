import hashlib
import hmac
import os

import numpy as np
import pytest
from scipy.stats import chisquare

from otmpsi.field import Q
from otmpsi.keyed_hash import (
    FIRST,
    SECOND,
    Hmac,
    KeyedHasher,
    ParticipantKey,
    ascending,
    derivation_message,
    derive_bin,
    derive_coeffs,
    derive_order,
    digest_to_field,
    first_pass_ascending,
    pair_index,
    tagged_messages,
)

ZERO_KEY = ParticipantKey(bytes(32))
IP = bytes([10, 0, 0, 1])

# computed with hmac.digest(bytes(32), tag || alpha u16 BE || r u64 BE || ip, sha256)
FROZEN_BINS = {1: (515, 253), 2: (418, 137), 3: (68, 596)}  # B = 600, r = 1
FROZEN_ORDERS = {1: 6131644029396800804, 2: 6131644029396800804, 3: 3922716350142949328}
FROZEN_COEFFS = [1944495072218704378, 2202038955872973288]  # alpha = 1, r = 1, t = 3


def test_frozen_vectors():
    for alpha, (b1, b2) in FROZEN_BINS.items():
        assert derive_bin(ZERO_KEY, alpha, IP, 1, FIRST, 600) == b1
        assert derive_bin(ZERO_KEY, alpha, IP, 1, SECOND, 600) == b2
        assert derive_order(ZERO_KEY, alpha, IP, 1) == FROZEN_ORDERS[alpha]
    assert derive_coeffs(ZERO_KEY, 1, IP, 1, 3) == FROZEN_COEFFS


def test_message_layout():
    assert derivation_message(b"bin1", 3, 0x0102, b"xy") == b"bin1\x00\x03" + bytes(6) + b"\x01\x02xy"
    msgs = list(tagged_messages(4, b"s", 9))
    assert [m[:4] for m in msgs] == [b"bin1", b"bin2", b"ord\x00", b"coef"]
    assert msgs[2] == b"ord" + (2).to_bytes(2, "big") + (9).to_bytes(8, "big") + b"s"


def test_precomputed_hmac_equals_stdlib():
    for _ in range(200):
        key, msg = os.urandom(32), os.urandom(int.from_bytes(os.urandom(1), "big"))
        assert Hmac(key)(msg) == hmac.digest(key, msg, hashlib.sha256)


def test_digest_to_field_is_canonical():
    assert digest_to_field(b"\xff" * 32) == 0  # 2^61 - 1 reduces to 0
    assert digest_to_field(b"\x00" * 7 + b"\x05" + b"\xff" * 24) == 5
    for _ in range(1000):
        assert 0 <= digest_to_field(os.urandom(32)) < Q


def test_determinism_and_round_separation():
    key = ParticipantKey.generate()
    assert derive_bin(key, 1, IP, 5, FIRST, 1000) == derive_bin(key, 1, IP, 5, FIRST, 1000)
    rounds = {derive_order(key, 1, IP, r) for r in range(20)}
    assert len(rounds) == 20


def test_pair_shares_ordering_value():
    h = KeyedHasher(ZERO_KEY, 7)
    for alpha in (1, 3, 19):
        assert h.derive_order(alpha, IP) == h.derive_order(alpha + 1, IP)
        assert h.derive_order(alpha, IP, pair_reversal=False) != h.derive_order(alpha + 1, IP, pair_reversal=False)
    assert [pair_index(a) for a in range(1, 7)] == [1, 1, 2, 2, 3, 3]


def test_comparator_directions():
    assert first_pass_ascending(1) and not first_pass_ascending(2)
    assert ascending(1, FIRST) and not ascending(1, SECOND)
    assert not ascending(2, FIRST) and ascending(2, SECOND)
    assert first_pass_ascending(2, pair_reversal=False)


def test_coefficients_are_t_minus_one_long():
    h = KeyedHasher(ZERO_KEY, 0)
    assert h.derive_coeffs(1, IP, 1) == []
    for t in range(2, 9):
        c = h.derive_coeffs(1, IP, t)
        assert len(c) == t - 1 and all(0 <= x < Q for x in c)
    # the chain is a prefix chain: a larger t extends a smaller one
    assert h.derive_coeffs(1, IP, 8)[:3] == h.derive_coeffs(1, IP, 4)


def test_batched_equals_scalar():
    h = KeyedHasher(ParticipantKey.generate(), 11)
    els = [os.urandom(4) for _ in range(50)]
    for alpha in (1, 2):
        assert h.bins(alpha, els, SECOND, 97).tolist() == [h.derive_bin(alpha, e, SECOND, 97) for e in els]
        assert h.orders(alpha, els).tolist() == [h.derive_order(alpha, e) for e in els]


def test_key_validation_and_repr():
    with pytest.raises(ValueError):
        ParticipantKey(b"short")
    key = ParticipantKey.generate()
    assert key.key.hex() not in repr(key)


def test_bin_uniformity_chi_square():
    h = KeyedHasher(ParticipantKey(b"\x42" * 32), 3)
    els = [i.to_bytes(4, "big") for i in range(100_000)]
    counts = np.bincount(h.bins(1, els, FIRST, 600), minlength=600)
    assert chisquare(counts).pvalue > 0.001
