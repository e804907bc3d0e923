"""2HashDH oblivious PRF with additive multi-key evaluation, and OPR-SS.

The group is the prime-order subgroup of edwards25519 (order ``ORDER``)
with libsodium's canonical 32-byte encodings.  Hash-to-group adds two
Elligator 2 images of a SHA-512 digest, so outputs are close to uniform.

Per participant the collusion-safe deployment needs, for every element:

* one hashing slot per sub-table pair, whose PRF output yields the pair's
  ordering value and, by keyed expansion, the four bin indices;
* one coefficient slot per sub-table, evaluated under each of the ``t - 1``
  coefficient keys.

All slots of a participant travel in a single request per key holder.
"""

from __future__ import annotations

import hashlib
import hmac
import os
import struct
from dataclasses import dataclass
from typing import Sequence

import nacl.bindings as sodium
import numpy as np

from .errors import InvalidEncoding, ProtocolError
from .field import poly_eval_no_constant
from .keyed_hash import (
    FIRST,
    TAG_BIN1,
    TAG_BIN2,
    TAG_COEF,
    TAG_HASH,
    derivation_message,
    digest_to_field,
    pair_index,
)

GROUP_ID = 1  # edwards25519 prime-order subgroup, libsodium encodings
ELEMENT_BYTES = 32
ORDER = 2**252 + 27742317777372353535851937790883648493
IDENTITY = b"\x01" + bytes(31)

_H2G_DST = b"otmpsi/h2g/v1"
_HPRIME_DST = b"otmpsi/h-prime/v1"


def hash_to_group(data: bytes) -> bytes:
    digest = hashlib.sha512(_H2G_DST + data).digest()
    return sodium.crypto_core_ed25519_add(
        sodium.crypto_core_ed25519_from_uniform(digest[:32]),
        sodium.crypto_core_ed25519_from_uniform(digest[32:]),
    )


def is_valid_element(point: bytes) -> bool:
    return len(point) == ELEMENT_BYTES and bool(sodium.crypto_core_ed25519_is_valid_point(point))


def _scalar_bytes(k: int) -> bytes:
    return (k % ORDER).to_bytes(32, "little")


def scalar_mult(point: bytes, k: int) -> bytes:
    if len(point) != ELEMENT_BYTES:
        raise InvalidEncoding(f"group elements are {ELEMENT_BYTES} bytes, got {len(point)}")
    try:
        return sodium.crypto_scalarmult_ed25519_noclamp(_scalar_bytes(k), point)
    except Exception as exc:  # libsodium rejects non-canonical and small-order points
        raise InvalidEncoding("not a valid prime-order group element") from exc


def random_scalar(rng=None) -> int:
    """Uniform scalar in [1, ORDER); a zero draw is discarded and redrawn.

    ``rng`` may be a ``numpy.random.Generator`` or ``random.Random`` for
    reproducible transcripts; by default the OS CSPRNG is used.
    """
    while True:
        if rng is None:
            raw = os.urandom(64)
        elif hasattr(rng, "bytes"):
            raw = rng.bytes(64)
        else:
            raw = rng.getrandbits(512).to_bytes(64, "little")
        k = int.from_bytes(raw, "little") % ORDER
        if k:
            return k


def h_prime(x: bytes, point: bytes) -> bytes:
    return hashlib.sha256(_HPRIME_DST + struct.pack(">I", len(x)) + x + point).digest()


def blind(x: bytes, rng=None) -> tuple[int, bytes]:
    """Return (r, H(x)^r)."""
    r = random_scalar(rng)
    return r, scalar_mult(hash_to_group(x), r)


def evaluate(a: bytes, key: int) -> bytes:
    """Key-holder side: a^K.  Only group operations touch the request."""
    if not is_valid_element(a):
        raise InvalidEncoding("blinded request is not a valid group element")
    return scalar_mult(a, key)


def combine(points: Sequence[bytes]) -> bytes:
    if not points:
        raise ValueError("need at least one key-holder response")
    acc = points[0]
    for p in points[1:]:
        acc = sodium.crypto_core_ed25519_add(acc, p)
    return acc


def unblind_combine(bs: Sequence[bytes], r: int, x: bytes) -> bytes:
    """H'(x, (prod b_j)^(1/r)) = H'(x, H(x)^(sum K_j))."""
    for b in bs:
        if not is_valid_element(b):
            raise InvalidEncoding("key-holder response is not a valid group element")
    product = combine(bs)
    if product == IDENTITY:
        # keys summing to 0 mod ORDER; the identity is fixed by every exponent
        return h_prime(x, IDENTITY)
    return h_prime(x, scalar_mult(product, pow(r, -1, ORDER)))


def evaluate_direct(x: bytes, key: int) -> bytes:
    """Unblinded reference evaluation H'(x, H(x)^K)."""
    key %= ORDER
    if key == 0:
        return h_prime(x, IDENTITY)
    return h_prime(x, scalar_mult(hash_to_group(x), key))


@dataclass(frozen=True)
class OprfKeyShare:
    """One key holder's additive share of every derivation key.

    ``hash_key`` drives the bin/ordering slots; ``coef_keys[m - 1]`` drives
    polynomial coefficient m, for m = 1..t-1.
    """

    holder_id: int
    hash_key: int
    coef_keys: tuple[int, ...]

    @classmethod
    def generate(cls, holder_id: int, t: int, rng=None) -> "OprfKeyShare":
        return cls(holder_id, random_scalar(rng), tuple(random_scalar(rng) for _ in range(t - 1)))

    @property
    def t(self) -> int:
        return len(self.coef_keys) + 1

    def to_bytes(self) -> bytes:
        head = struct.pack("<HH", self.holder_id, len(self.coef_keys))
        return head + b"".join(_scalar_bytes(k) for k in (self.hash_key, *self.coef_keys))

    @classmethod
    def from_bytes(cls, data: bytes) -> "OprfKeyShare":
        holder_id, n = struct.unpack_from("<HH", data)
        if len(data) != 4 + 32 * (n + 1):
            raise ValueError("malformed key share")
        ks = [int.from_bytes(data[4 + 32 * i : 36 + 32 * i], "little") for i in range(n + 1)]
        return cls(holder_id, ks[0], tuple(ks[1:]))

    def __repr__(self) -> str:
        return f"OprfKeyShare(holder_id={self.holder_id}, t={self.t}, <redacted>)"


def summed_key(shares: Sequence[OprfKeyShare]) -> OprfKeyShare:
    """The single key equivalent to a set of additive shares (tests only)."""
    n = len(shares[0].coef_keys)
    return OprfKeyShare(
        0,
        sum(s.hash_key for s in shares) % ORDER,
        tuple(sum(s.coef_keys[m] for s in shares) % ORDER for m in range(n)),
    )


# -- slot layout -------------------------------------------------------------


def n_pairs(T: int) -> int:
    return pair_index(T)


def slot_layout(T: int) -> tuple[int, int]:
    """(hashing slots, coefficient slots) per element."""
    return n_pairs(T), T


def slot_preimages(element: bytes, T: int, r: int) -> list[bytes]:
    pairs, _ = slot_layout(T)
    return [derivation_message(TAG_HASH, pi, r, element) for pi in range(1, pairs + 1)] + [
        derivation_message(TAG_COEF, alpha, r, element) for alpha in range(1, T + 1)
    ]


def evaluate_batch(key: OprfKeyShare, points: Sequence[bytes], T: int) -> list[bytes]:
    """Answer a whole participant request.

    Request slots per element: hashing slots for pairs 1..ceil(T/2), then
    one coefficient slot per sub-table.  The response carries one point per
    hashing slot and ``t - 1`` points per coefficient slot, in
    (element, alpha, m) order.
    """
    pairs, coefs = slot_layout(T)
    block = pairs + coefs
    if len(points) % block:
        raise ProtocolError(f"request of {len(points)} slots is not a multiple of {block}")
    out: list[bytes] = []
    for start in range(0, len(points), block):
        for a in points[start : start + pairs]:
            out.append(evaluate(a, key.hash_key))
        for a in points[start + pairs : start + block]:
            if not is_valid_element(a):
                raise InvalidEncoding("blinded request is not a valid group element")
            out.extend(scalar_mult(a, k) for k in key.coef_keys)
    return out


def response_length(n_elements: int, T: int, t: int) -> int:
    pairs, coefs = slot_layout(T)
    return n_elements * (pairs + coefs * (t - 1))


@dataclass
class OprfOutputs:
    """Unblinded per-element material for the collusion-safe deployment."""

    hash_outputs: list[list[bytes]]  # [element][pair - 1] -> 32-byte PRF output
    coefficients: list[list[list[int]]]  # [element][alpha - 1] -> t - 1 coefficients


class OprfClient:
    """Participant side of the batched OPRF / OPR-SS exchange."""

    def __init__(self, elements: Sequence[bytes], T: int, t: int, r: int, rng=None):
        self.elements = list(elements)
        self.T, self.t, self.r = T, t, r
        self._preimages = [slot_preimages(s, T, r) for s in self.elements]
        self._blinds: list[int] = []
        self._request: list[bytes] = []
        for pre in self._preimages:
            for x in pre:
                rho, a = blind(x, rng)
                self._blinds.append(rho)
                self._request.append(a)

    def request(self) -> list[bytes]:
        return list(self._request)

    def finish(self, responses: Sequence[Sequence[bytes]]) -> OprfOutputs:
        """Combine one response list per key holder."""
        expected = response_length(len(self.elements), self.T, self.t)
        for resp in responses:
            if len(resp) != expected:
                raise ProtocolError(f"key-holder response has {len(resp)} points, expected {expected}")
        pairs, coefs = slot_layout(self.T)
        width = self.t - 1
        hash_out, coef_out = [], []
        req_i = resp_i = 0
        for pre in self._preimages:
            ys = []
            for pi in range(pairs):
                ys.append(unblind_combine([r[resp_i] for r in responses], self._blinds[req_i], pre[pi]))
                req_i += 1
                resp_i += 1
            cs = []
            for alpha in range(coefs):
                x = pre[pairs + alpha]
                row = []
                for m in range(width):
                    y = unblind_combine([r[resp_i + m] for r in responses], self._blinds[req_i], x)
                    row.append(digest_to_field(y))
                cs.append(row)
                req_i += 1
                resp_i += width
            hash_out.append(ys)
            coef_out.append(cs)
        return OprfOutputs(hash_out, coef_out)


def expand_bin(y: bytes, alpha: int, pass_: int, r: int, element: bytes, n_bins: int) -> int:
    tag = TAG_BIN1 if pass_ == FIRST else TAG_BIN2
    digest = hmac.digest(y, derivation_message(tag, alpha, r, element), "sha256")
    return int.from_bytes(digest[:8], "big") % n_bins


def expand_order(y: bytes) -> int:
    return int.from_bytes(y[8:16], "big")


class OprfPlacement:
    """Placement hashes derived from per-(element, pair) OPRF outputs."""

    def __init__(self, outputs: OprfOutputs, elements: Sequence[bytes], r: int, n_bins: int):
        self.outputs = outputs
        self.elements = list(elements)
        self.r = r
        self.n_bins = n_bins

    def bins(self, alpha: int, pass_: int) -> np.ndarray:
        pi = pair_index(alpha) - 1
        return np.array(
            [
                expand_bin(ys[pi], alpha, pass_, self.r, s, self.n_bins)
                for ys, s in zip(self.outputs.hash_outputs, self.elements)
            ],
            dtype=np.int64,
        )

    def orders(self, alpha: int) -> np.ndarray:
        pi = pair_index(alpha) - 1
        return np.array([expand_order(ys[pi]) for ys in self.outputs.hash_outputs], dtype=np.uint64)


class OprssShares:
    """Share function over OPR-SS coefficients for one participant."""

    def __init__(self, outputs: OprfOutputs, elements: Sequence[bytes], participant_id: int):
        self._coefs = {s: c for s, c in zip(elements, outputs.coefficients)}
        self.participant_id = participant_id

    def __call__(self, alpha: int, element: bytes) -> int:
        return poly_eval_no_constant(self._coefs[element][alpha - 1], self.participant_id)


def _run_local(elements: Sequence[bytes], T: int, t: int, r: int, holders: Sequence[OprfKeyShare], rng=None) -> OprfOutputs:
    client = OprfClient(elements, T, t, r, rng)
    req = client.request()
    return client.finish([evaluate_batch(h, req, T) for h in holders])


def oprss_share(
    element: bytes, i: int, alpha: int, r: int, holders: Sequence[OprfKeyShare], T: int | None = None, rng=None
) -> int:
    """Share of participant ``i`` for (element, alpha, r), run against in-process holders."""
    t = holders[0].t
    T = T or alpha
    out = _run_local([element], T, t, r, holders, rng)
    return poly_eval_no_constant(out.coefficients[0][alpha - 1], i)


def oprf_derived_hashes(
    element: bytes,
    alpha: int,
    r: int,
    holders: Sequence[OprfKeyShare],
    n_bins: int,
    pass_: int = FIRST,
    rng=None,
) -> tuple[int, int]:
    """(bin index, ordering value) for one element and sub-table."""
    x = derivation_message(TAG_HASH, pair_index(alpha), r, element)
    rho, a = blind(x, rng)
    y = unblind_combine([evaluate(a, h.hash_key) for h in holders], rho, x)
    return expand_bin(y, alpha, pass_, r, element, n_bins), expand_order(y)
