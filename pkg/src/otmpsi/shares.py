"""Session parameters and non-interactive share derivation."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import ParameterError
from .field import poly_eval_no_constant
from .keyed_hash import KeyedHasher, ParticipantKey

NON_INTERACTIVE = "non_interactive"
COLLUSION_SAFE = "collusion_safe"
DEPLOYMENTS = (NON_INTERACTIVE, COLLUSION_SAFE)

DEFAULT_TABLES = 20


@dataclass(frozen=True)
class SessionParams:
    """Parameters every party of one protocol round agrees on.

    ``B`` is derived, never stored: all participants must use the same
    table geometry for bins to line up at the aggregator.
    """

    N: int
    t: int
    M: int
    r: int = 0
    T: int = DEFAULT_TABLES
    k: int = 0
    deployment: str = NON_INTERACTIVE

    def __post_init__(self) -> None:
        if not 2 <= self.t <= self.N:
            raise ParameterError(f"need 2 <= t <= N, got t={self.t}, N={self.N}")
        if self.M < 1:
            raise ParameterError(f"M must be positive, got {self.M}")
        if not 1 <= self.T <= 0xFFFF:
            raise ParameterError(f"T must be in [1, 65535], got {self.T}")
        if self.N > 0xFFFF:
            raise ParameterError("at most 65535 participants are supported")
        if self.B >= 1 << 32:
            raise ParameterError(f"bin count {self.B} does not fit in 32 bits")
        if not 0 <= self.r < 1 << 64:
            raise ParameterError("round id must be an unsigned 64-bit integer")
        if self.deployment not in DEPLOYMENTS:
            raise ParameterError(f"unknown deployment {self.deployment!r}")
        if self.deployment == COLLUSION_SAFE and self.k < 1:
            raise ParameterError("collusion-safe deployment needs k >= 1 key holders")

    @property
    def B(self) -> int:
        return self.M * self.t

    def with_(self, **changes) -> "SessionParams":
        return replace(self, **changes)


def share_noninteractive(
    key: ParticipantKey, alpha: int, element: bytes, r: int, i: int, t: int
) -> int:
    """Share of participant ``i`` on the zero-constant polynomial of ``element``."""
    return poly_eval_no_constant(KeyedHasher(key, r).derive_coeffs(alpha, element, t), i)


class NonInteractiveShares:
    """Share function bound to one participant, for ``build_share_table``."""

    def __init__(self, key: ParticipantKey, params: SessionParams, participant_id: int):
        self.hasher = KeyedHasher(key, params.r)
        self.t = params.t
        self.participant_id = participant_id

    def __call__(self, alpha: int, element: bytes) -> int:
        return poly_eval_no_constant(
            self.hasher.derive_coeffs(alpha, element, self.t), self.participant_id
        )
