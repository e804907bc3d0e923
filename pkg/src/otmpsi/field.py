"""Arithmetic in GF(q) for the Mersenne prime q = 2^61 - 1.

Scalar helpers work on Python ints; the ``*_vec`` helpers work on
``numpy.uint64`` arrays and are what the aggregator uses for bulk
interpolation.  Every function returns canonical residues in ``[0, q)``.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DuplicatePoint, LengthMismatch, NonCanonical, ZeroInverse

Q = (1 << 61) - 1

_MASK32 = np.uint64(0xFFFFFFFF)
_MASK29 = np.uint64((1 << 29) - 1)
_QU = np.uint64(Q)
_S61 = np.uint64(61)
_S32 = np.uint64(32)
_S29 = np.uint64(29)
_S3 = np.uint64(3)


def _fold(x: int) -> int:
    # valid for x < 2^122
    x = (x & Q) + (x >> 61)
    return x - Q if x >= Q else x


def fe(value: int) -> int:
    """Reduce an arbitrary integer into canonical form."""
    return value % Q


def fe_add(a: int, b: int) -> int:
    s = a + b
    return s - Q if s >= Q else s


def fe_sub(a: int, b: int) -> int:
    s = a - b
    return s + Q if s < 0 else s


def fe_neg(a: int) -> int:
    return Q - a if a else 0


def fe_mul(a: int, b: int) -> int:
    """Multiply two canonical residues using Mersenne folding."""
    return _fold(a * b)


def fe_inv(a: int) -> int:
    """Inverse by Fermat's little theorem; raises ZeroInverse for 0."""
    if a % Q == 0:
        raise ZeroInverse("0 has no inverse in GF(2^61 - 1)")
    return pow(a, Q - 2, Q)


def encode_fe(a: int) -> bytes:
    return struct.pack("<Q", a)


def decode_fe(data: bytes) -> int:
    (value,) = struct.unpack("<Q", data)
    if value >= Q:
        raise NonCanonical(f"field element {value} is not below q")
    return value


@dataclass(frozen=True)
class LagrangeBasis:
    """Lagrange coefficients evaluated at x = 0 for a fixed point set."""

    points: tuple[int, ...]
    coefficients: tuple[int, ...]


def lagrange_basis_at_zero(points: Sequence[int]) -> LagrangeBasis:
    """Coefficients lambda_i = prod_{j != i} (-x_j) / (x_i - x_j).

    Computed once per participant combination so that each subsequent
    reconstruction costs only len(points) multiplications.
    """
    pts = tuple(int(p) for p in points)
    if not pts:
        raise DuplicatePoint("at least one point is required")
    if len(set(p % Q for p in pts)) != len(pts) or any(p % Q == 0 for p in pts):
        raise DuplicatePoint(f"points must be distinct and nonzero: {pts}")
    coeffs = []
    for i, xi in enumerate(pts):
        num, den = 1, 1
        for j, xj in enumerate(pts):
            if i != j:
                num = fe_mul(num, fe_neg(xj % Q))
                den = fe_mul(den, fe_sub(xi % Q, xj % Q))
        coeffs.append(fe_mul(num, fe_inv(den)))
    return LagrangeBasis(pts, tuple(coeffs))


def reconstruct_at_zero(basis: LagrangeBasis, shares: Sequence[int]) -> int:
    """Constant term of the interpolating polynomial through the shares."""
    if len(shares) != len(basis.coefficients):
        raise LengthMismatch(
            f"{len(shares)} shares for {len(basis.coefficients)} points"
        )
    acc = 0
    for lam, y in zip(basis.coefficients, shares):
        acc += lam * y
    return acc % Q


def poly_eval_no_constant(coeffs: Sequence[int], x: int) -> int:
    """Horner evaluation of sum_{j>=1} coeffs[j-1] * x^j."""
    acc = 0
    for c in reversed(coeffs):
        acc = fe_mul(fe_add(acc, c), x)
    return acc


def random_fe_array(n: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """``n`` uniform field elements.

    Without ``rng`` the values come from the OS CSPRNG; a numpy Generator
    is accepted so tests can pin the output.
    """
    if rng is not None:
        return rng.integers(0, Q, size=n, dtype=np.uint64)
    out = np.empty(n, dtype=np.uint64)
    filled = 0
    while filled < n:
        need = n - filled
        raw = np.frombuffer(os.urandom(8 * need), dtype="<u8") & _QU
        raw = raw[raw != _QU]  # rejection keeps the draw exactly uniform
        out[filled : filled + raw.size] = raw
        filled += raw.size
    return out


# -- vectorised helpers ----------------------------------------------------


def mul_vec(a: np.ndarray, b: np.ndarray | int) -> np.ndarray:
    """Element-wise product mod q for uint64 arrays of canonical residues.

    Operands are split into 32-bit limbs so no partial product overflows
    64 bits; ``2^64 = 8`` and ``2^61 = 1`` (mod q) fold the high parts.
    """
    a = np.asarray(a, dtype=np.uint64)
    if isinstance(b, (int, np.integer)):
        b_lo = np.uint64(int(b) & 0xFFFFFFFF)
        b_hi = np.uint64(int(b) >> 32)
    else:
        b = np.asarray(b, dtype=np.uint64)
        b_lo = b & _MASK32
        b_hi = b >> _S32
    a_lo = a & _MASK32
    a_hi = a >> _S32
    lo = a_lo * b_lo
    mid = a_lo * b_hi + a_hi * b_lo
    hi = a_hi * b_hi
    s = (hi << _S3) + (mid >> _S29) + ((mid & _MASK29) << _S32)
    s += (lo & _QU) + (lo >> _S61)
    s = (s & _QU) + (s >> _S61)
    s -= _QU * (s >= _QU)
    return s


def add_vec(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    s = np.asarray(a, dtype=np.uint64) + np.asarray(b, dtype=np.uint64)
    s -= _QU * (s >= _QU)
    return s


def lincomb_vec(coefficients: Sequence[int], rows: Sequence[np.ndarray]) -> np.ndarray:
    """sum_i coefficients[i] * rows[i] (mod q), element-wise."""
    if len(coefficients) != len(rows):
        raise LengthMismatch(f"{len(rows)} rows for {len(coefficients)} coefficients")
    acc = mul_vec(rows[0], coefficients[0])
    for lam, row in zip(coefficients[1:], rows[1:]):
        acc = add_vec(acc, mul_vec(row, lam))
    return acc
