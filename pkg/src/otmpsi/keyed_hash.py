"""Keyed pseudo-random derivations for the non-interactive deployment.

All values are HMAC-SHA256 outputs over a tagged message::

    tag (ASCII) || index (u16, big-endian) || round id (u64, big-endian) || element

``index`` is the sub-table number for ``bin1``/``bin2``/``coef`` and the
pair number ``ceil(alpha / 2)`` for ``ord``.  Iterated coefficients are
``c_{j+1} = HMAC(key, "coef" || c_j)`` on the raw 32-byte digests.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .field import Q

TAG_BIN1 = b"bin1"
TAG_BIN2 = b"bin2"
TAG_ORD = b"ord"
TAG_COEF = b"coef"
TAG_HASH = b"hash"

FIRST, SECOND = 1, 2

_MASK61 = (1 << 61) - 1


def derivation_message(tag: bytes, index: int, r: int, element: bytes) -> bytes:
    return tag + struct.pack(">HQ", index, r) + element


def pair_index(alpha: int) -> int:
    return (alpha + 1) // 2


def first_pass_ascending(alpha: int, pair_reversal: bool = True) -> bool:
    """Odd sub-tables keep the smallest ordering value, even ones the largest."""
    return alpha % 2 == 1 or not pair_reversal


def ascending(alpha: int, pass_: int, pair_reversal: bool = True) -> bool:
    """Comparator direction for a (sub-table, pass); the second pass flips it."""
    asc = first_pass_ascending(alpha, pair_reversal)
    return asc if pass_ == FIRST else not asc


def digest_to_field(digest: bytes) -> int:
    """First 8 bytes big-endian, masked to 61 bits, reduced mod q."""
    v = int.from_bytes(digest[:8], "big") & _MASK61
    return v - Q if v >= Q else v


@dataclass(frozen=True)
class ParticipantKey:
    """Symmetric 32-byte key shared by the participants only."""

    key: bytes

    def __post_init__(self) -> None:
        if len(self.key) != 32:
            raise ValueError("participant key must be 32 bytes")

    @classmethod
    def generate(cls) -> "ParticipantKey":
        return cls(os.urandom(32))

    def __repr__(self) -> str:
        return "ParticipantKey(<redacted>)"


class Hmac:
    """HMAC-SHA256 with the inner and outer pad states computed once.

    Bit-identical to ``hmac.digest(key, msg, "sha256")``; reusing the
    padded states halves the per-call cost, which dominates table building.
    """

    __slots__ = ("_inner", "_outer")

    def __init__(self, key: bytes):
        if len(key) > 64:
            key = hashlib.sha256(key).digest()
        key = key.ljust(64, b"\0")
        self._inner = hashlib.sha256(bytes(b ^ 0x36 for b in key))
        self._outer = hashlib.sha256(bytes(b ^ 0x5C for b in key))

    def __call__(self, msg: bytes) -> bytes:
        inner = self._inner.copy()
        inner.update(msg)
        outer = self._outer.copy()
        outer.update(inner.digest())
        return outer.digest()


class KeyedHasher:
    """All keyed derivations for one (key, round) pair."""

    def __init__(self, key: ParticipantKey | bytes, r: int):
        raw = key.key if isinstance(key, ParticipantKey) else key
        self.r = r
        self._mac = Hmac(raw)

    def prf(self, tag: bytes, index: int, element: bytes) -> bytes:
        return self._mac(derivation_message(tag, index, self.r, element))

    def derive_bin(self, alpha: int, element: bytes, pass_: int, n_bins: int) -> int:
        tag = TAG_BIN1 if pass_ == FIRST else TAG_BIN2
        return int.from_bytes(self.prf(tag, alpha, element)[:8], "big") % n_bins

    def derive_order(self, alpha: int, element: bytes, pair_reversal: bool = True) -> int:
        # the pass only affects comparison direction, never the raw value
        index = pair_index(alpha) if pair_reversal else alpha
        return int.from_bytes(self.prf(TAG_ORD, index, element)[:8], "big")

    def derive_coeffs(self, alpha: int, element: bytes, t: int) -> list[int]:
        if t <= 1:
            return []
        digest = self.prf(TAG_COEF, alpha, element)
        coeffs = [digest_to_field(digest)]
        for _ in range(t - 2):
            digest = self._mac(TAG_COEF + digest)
            coeffs.append(digest_to_field(digest))
        return coeffs

    # batched forms used by the table builder

    def bins(self, alpha: int, elements: Sequence[bytes], pass_: int, n_bins: int) -> np.ndarray:
        tag = TAG_BIN1 if pass_ == FIRST else TAG_BIN2
        prefix = tag + struct.pack(">HQ", alpha, self.r)
        mac = self._mac
        return np.fromiter(
            (int.from_bytes(mac(prefix + s)[:8], "big") % n_bins for s in elements),
            dtype=np.int64,
            count=len(elements),
        )

    def orders(self, alpha: int, elements: Sequence[bytes], pair_reversal: bool = True) -> np.ndarray:
        index = pair_index(alpha) if pair_reversal else alpha
        prefix = TAG_ORD + struct.pack(">HQ", index, self.r)
        mac = self._mac
        return np.fromiter(
            (int.from_bytes(mac(prefix + s)[:8], "big") for s in elements),
            dtype=np.uint64,
            count=len(elements),
        )


def derive_bin(key: ParticipantKey, alpha: int, element: bytes, r: int, pass_: int, n_bins: int) -> int:
    return KeyedHasher(key, r).derive_bin(alpha, element, pass_, n_bins)


def derive_order(key: ParticipantKey, alpha: int, element: bytes, r: int) -> int:
    return KeyedHasher(key, r).derive_order(alpha, element)


def derive_coeffs(key: ParticipantKey, alpha: int, element: bytes, r: int, t: int) -> list[int]:
    return KeyedHasher(key, r).derive_coeffs(alpha, element, t)


def tagged_messages(alpha: int, element: bytes, r: int) -> Iterable[bytes]:
    """The four derivation messages for one (sub-table, element)."""
    for tag, index in ((TAG_BIN1, alpha), (TAG_BIN2, alpha), (TAG_ORD, pair_index(alpha)), (TAG_COEF, alpha)):
        yield derivation_message(tag, index, r, element)
