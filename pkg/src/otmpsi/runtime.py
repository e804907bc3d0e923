"""Protocol roles and the in-process session simulator.

Roles never touch sockets: ``start()`` and ``handle(src, frame)`` return
lists of ``(destination, frame)`` pairs.  The simulator moves frames
through in-memory queues and the TCP transport in :mod:`otmpsi.net` moves
the very same frames over the network.

Parties are named ``A`` (aggregator), ``P<i>`` (participants, 1-based)
and ``KH<j>`` (key holders, 1-based; ``KH1`` also combines the other
holders' evaluations before returning them to the participant).
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .aggregator import HitReport, decode_hits, encode_hits, map_indexes_to_elements, notify_participants, reconstruct_hits
from .errors import GeometryMismatch, ParameterError, ProtocolError, SetTooLarge
from .keyed_hash import ParticipantKey
from .oprf import OprfClient, OprfKeyShare, OprfPlacement, OprssShares, evaluate_batch
from .shares import COLLUSION_SAFE, DEFAULT_TABLES, NON_INTERACTIVE, NonInteractiveShares, SessionParams
from .tables import ShareTable, SlotIndexMap, build_share_table
from .wire import (
    MsgType,
    SizeReport,
    decode_bye,
    decode_frame,
    decode_oprf_request,
    decode_oprf_response,
    decode_params,
    decode_shares,
    encode_frame,
    encode_oprf_request,
    encode_oprf_response,
    encode_session_params,
    encode_shares,
    encode_size_report,
)

log = logging.getLogger(__name__)

AGGREGATOR = "A"

Outgoing = list[tuple[str, bytes]]


def participant_name(i: int) -> str:
    return f"P{i}"


def keyholder_name(j: int) -> str:
    return f"KH{j}"


def _peer_id(name: str, prefix: str) -> int:
    if not name.startswith(prefix) or not name[len(prefix) :].isdigit():
        raise ProtocolError(f"unexpected peer {name!r}")
    return int(name[len(prefix) :])


class ParticipantRole:
    """One institution: reports its set size, uploads shares, maps hits."""

    def __init__(
        self,
        participant_id: int,
        elements: Sequence[bytes],
        key: ParticipantKey | None = None,
        rng: np.random.Generator | None = None,
    ):
        self.id = participant_id
        self.name = participant_name(participant_id)
        self.elements = list(dict.fromkeys(elements))
        self.key = key
        self.rng = rng
        self.params: SessionParams | None = None
        self.table: ShareTable | None = None
        self.slots: SlotIndexMap | None = None
        self.output: set[bytes] | None = None
        self._client: OprfClient | None = None

    @property
    def done(self) -> bool:
        return self.output is not None

    def start(self) -> Outgoing:
        return [(AGGREGATOR, encode_size_report(SizeReport(self.id, len(self.elements))))]

    def handle(self, src: str, frame: bytes) -> Outgoing:
        kind, payload = decode_frame(frame)
        if kind is MsgType.PARAMS and src == AGGREGATOR:
            params = decode_params(payload)
            if not isinstance(params, SessionParams):
                raise ProtocolError("participant expected session parameters")
            return self._on_params(params)
        if kind is MsgType.OPRF_RESP and src == keyholder_name(1):
            return self._on_oprf(payload)
        if kind is MsgType.HITS and src == AGGREGATOR:
            records, _ = decode_hits(payload)
            self.output = map_indexes_to_elements([(r.alpha, r.bin) for r in records], self.slots)
            return []
        if kind is MsgType.BYE:
            _, reason = decode_bye(payload)
            raise ProtocolError(f"{src} aborted the session: {reason}")
        raise ProtocolError(f"{self.name} got unexpected {kind.name} from {src}")

    def _on_params(self, params: SessionParams) -> Outgoing:
        if len(self.elements) > params.M:
            raise SetTooLarge(f"{self.name} holds {len(self.elements)} > M = {params.M} elements")
        self.params = params
        if params.deployment == NON_INTERACTIVE:
            if self.key is None:
                raise ParameterError("non-interactive deployment needs the participant key")
            shares = NonInteractiveShares(self.key, params, self.id)
            self.table, self.slots = build_share_table(
                self.elements, params, shares, key=self.key, rng=self.rng
            )
            return [(AGGREGATOR, encode_shares(self.id, self.table))]
        self._client = OprfClient(self.elements, params.T, params.t, params.r, self.rng)
        req = encode_oprf_request(self.id, params.T, self._client.request())
        return [(keyholder_name(j), req) for j in range(1, params.k + 1)]

    def _on_oprf(self, payload: bytes) -> Outgoing:
        if self._client is None or self.params is None:
            raise ProtocolError("OPRF response before request")
        requester, parts = decode_oprf_response(payload)
        holders = sorted(h for h, _ in parts)
        if requester != self.id or holders != list(range(1, self.params.k + 1)):
            raise ProtocolError(f"OPRF response for {requester} from holders {holders}")
        outputs = self._client.finish([pts for _, pts in sorted(parts)])
        params = self.params
        placement = OprfPlacement(outputs, self.elements, params.r, params.B)
        shares = OprssShares(outputs, self.elements, self.id)
        self.table, self.slots = build_share_table(
            self.elements, params, shares, hashes=placement, rng=self.rng
        )
        self._client = None
        return [(AGGREGATOR, encode_shares(self.id, self.table))]


class AggregatorRole:
    """Fixes M from the size reports, reconstructs, and returns hit indexes.

    Share tables live only in memory and are dropped as soon as the
    reconstruction finishes.
    """

    name = AGGREGATOR

    def __init__(
        self,
        N: int,
        t: int,
        r: int = 0,
        T: int = DEFAULT_TABLES,
        deployment: str = NON_INTERACTIVE,
        k: int = 0,
        workers: int = 1,
    ):
        if not 2 <= t <= N:
            raise ParameterError(f"need 2 <= t <= N, got t={t}, N={N}")
        self.N, self.t, self.r, self.T = N, t, r, T
        self.deployment, self.k, self.workers = deployment, k, workers
        self.params: SessionParams | None = None
        self.report: HitReport | None = None
        self._sizes: dict[int, int] = {}
        self._tables: dict[int, ShareTable] = {}

    @property
    def done(self) -> bool:
        return self.report is not None

    def start(self) -> Outgoing:
        return []

    def handle(self, src: str, frame: bytes) -> Outgoing:
        kind, payload = decode_frame(frame)
        pid = _peer_id(src, "P")
        if not 1 <= pid <= self.N:
            raise ProtocolError(f"participant id {pid} outside 1..{self.N}")
        if kind is MsgType.PARAMS:
            report = decode_params(payload)
            if not isinstance(report, SizeReport) or report.participant_id != pid:
                raise ProtocolError(f"bad size report from {src}")
            if pid in self._sizes:
                raise ProtocolError(f"duplicate size report from {src}")
            self._sizes[pid] = report.set_size
            if len(self._sizes) < self.N:
                return []
            self.params = SessionParams(
                N=self.N,
                t=self.t,
                M=max(self._sizes.values()),
                r=self.r,
                T=self.T,
                k=self.k,
                deployment=self.deployment,
            )
            frame_out = encode_session_params(self.params)
            return [(participant_name(i), frame_out) for i in range(1, self.N + 1)]
        if kind is MsgType.SHARES:
            if self.params is None:
                raise ProtocolError("SHARES before session parameters were fixed")
            sender, table = decode_shares(payload)
            if sender != pid or pid in self._tables:
                raise ProtocolError(f"unexpected SHARES from {src}")
            if table.shape != (self.params.T, self.params.B):
                raise GeometryMismatch(f"{src} sent a {table.shape} table, expected {(self.params.T, self.params.B)}")
            self._tables[pid] = table
            if len(self._tables) < self.N:
                return []
            self.report = reconstruct_hits(self._tables, self.t, workers=self.workers)
            self._tables.clear()
            notes = notify_participants(self.report)
            return [
                (participant_name(i), _hits_frame(notes[i], self.N)) for i in range(1, self.N + 1)
            ]
        if kind is MsgType.BYE:
            _, reason = decode_bye(payload)
            raise ProtocolError(f"{src} aborted the session: {reason}")
        raise ProtocolError(f"aggregator got unexpected {kind.name} from {src}")

    @property
    def holds_tables(self) -> bool:
        return bool(self._tables)


def _hits_frame(records, N: int) -> bytes:
    return encode_frame(MsgType.HITS, encode_hits(records, N))


class KeyHolderRole:
    """Evaluates blinded batches; ``KH1`` bundles all holders' answers."""

    def __init__(self, key: OprfKeyShare, k: int, N: int | None = None):
        self.key = key
        self.k = k
        self.N = N
        self.name = keyholder_name(key.holder_id)
        self.is_combiner = key.holder_id == 1
        self._pending: dict[int, dict[int, list[bytes]]] = {}
        self.served: set[int] = set()

    @property
    def done(self) -> bool:
        return self.N is not None and len(self.served) >= self.N

    def start(self) -> Outgoing:
        return []

    def handle(self, src: str, frame: bytes) -> Outgoing:
        kind, payload = decode_frame(frame)
        if kind is MsgType.OPRF_REQ:
            pid = _peer_id(src, "P")
            requester, T, points = decode_oprf_request(payload)
            if requester != pid:
                raise ProtocolError(f"{src} sent a request labelled {requester}")
            evaluated = evaluate_batch(self.key, points, T)
            if not self.is_combiner:
                self.served.add(pid)
                return [(keyholder_name(1), encode_oprf_response(pid, [(self.key.holder_id, evaluated)]))]
            return self._collect(pid, self.key.holder_id, evaluated)
        if kind is MsgType.OPRF_RESP and self.is_combiner:
            holder = _peer_id(src, "KH")
            requester, parts = decode_oprf_response(payload)
            if len(parts) != 1 or parts[0][0] != holder:
                raise ProtocolError(f"malformed partial evaluation from {src}")
            return self._collect(requester, holder, parts[0][1])
        if kind is MsgType.BYE:
            _, reason = decode_bye(payload)
            raise ProtocolError(f"{src} aborted the session: {reason}")
        raise ProtocolError(f"{self.name} got unexpected {kind.name} from {src}")

    def _collect(self, pid: int, holder: int, points: list[bytes]) -> Outgoing:
        got = self._pending.setdefault(pid, {})
        if holder in got:
            raise ProtocolError(f"duplicate evaluation from KH{holder} for P{pid}")
        got[holder] = points
        if len(got) < self.k:
            return []
        del self._pending[pid]
        self.served.add(pid)
        return [(participant_name(pid), encode_oprf_response(pid, sorted(got.items())))]


# -- simulator ----------------------------------------------------------------


@dataclass(frozen=True)
class TranscriptEntry:
    depth: int
    src: str
    dst: str
    msg_type: MsgType
    frame: bytes


@dataclass
class Transcript:
    """Every frame of a session with its causal depth.

    Setup (PARAMS) frames have depth 0.  Any other frame has depth one more
    than the deepest frame its sender had processed, so the number of
    distinct positive depths is the number of communication rounds.
    """

    entries: list[TranscriptEntry] = field(default_factory=list)

    def rounds(self) -> int:
        return len({e.depth for e in self.entries if e.depth > 0})

    def bytes_sent(self, src: str, msg_type: MsgType | None = None) -> int:
        return sum(
            len(e.frame) for e in self.entries if e.src == src and (msg_type is None or e.msg_type == msg_type)
        )

    def messages(self, src: str | None = None, msg_type: MsgType | None = None) -> list[TranscriptEntry]:
        return [
            e
            for e in self.entries
            if (src is None or e.src == src) and (msg_type is None or e.msg_type == msg_type)
        ]


def run_roles(roles: Mapping[str, object]) -> Transcript:
    """Deliver frames between in-process roles until no frame is in flight."""
    transcript = Transcript()
    seen = {name: 0 for name in roles}
    queue: deque[TranscriptEntry] = deque()

    def emit(src: str, outgoing: Outgoing) -> None:
        for dst, frame in outgoing:
            if dst not in roles:
                raise ProtocolError(f"{src} addressed unknown party {dst}")
            kind, _ = decode_frame(frame)
            depth = 0 if kind is MsgType.PARAMS else seen[src] + 1
            entry = TranscriptEntry(depth, src, dst, kind, frame)
            transcript.entries.append(entry)
            queue.append(entry)

    for name, role in roles.items():
        emit(name, role.start())
    while queue:
        entry = queue.popleft()
        seen[entry.dst] = max(seen[entry.dst], entry.depth)
        emit(entry.dst, roles[entry.dst].handle(entry.src, entry.frame))
    return transcript


@dataclass
class SessionResult:
    params: SessionParams
    outputs: dict[int, set[bytes]]
    report: HitReport
    transcript: Transcript
    participants: dict[int, ParticipantRole]


def build_roles(
    sets: Sequence[Sequence[bytes]],
    t: int,
    r: int = 0,
    T: int = DEFAULT_TABLES,
    deployment: str = NON_INTERACTIVE,
    key: ParticipantKey | None = None,
    key_shares: Sequence[OprfKeyShare] | None = None,
    seed: int | None = None,
    workers: int = 1,
) -> dict[str, object]:
    N = len(sets)
    if not 2 <= t <= N:
        raise ParameterError(f"need 2 <= t <= N, got t={t}, N={N}")
    if not any(sets):
        raise ParameterError("every set is empty; nothing to intersect")
    k = 0
    if deployment == COLLUSION_SAFE:
        if not key_shares:
            raise ParameterError("collusion-safe deployment needs key-holder shares")
        k = len(key_shares)
        if sorted(s.holder_id for s in key_shares) != list(range(1, k + 1)):
            raise ParameterError("key-holder ids must be 1..k")
        if any(s.t != t for s in key_shares):
            raise ParameterError("key shares were generated for a different threshold")
    elif key is None:
        key = ParticipantKey.generate()
    seeds = np.random.SeedSequence(seed).spawn(N) if seed is not None else [None] * N
    roles: dict[str, object] = {AGGREGATOR: AggregatorRole(N, t, r, T, deployment, k, workers)}
    for i, (elements, ss) in enumerate(zip(sets, seeds), start=1):
        rng = np.random.default_rng(ss) if ss is not None else None
        roles[participant_name(i)] = ParticipantRole(
            i, elements, key if deployment == NON_INTERACTIVE else None, rng
        )
    for share in key_shares or ():
        if deployment == COLLUSION_SAFE:
            roles[keyholder_name(share.holder_id)] = KeyHolderRole(share, k, N)
    return roles


def simulate_local(
    sets: Sequence[Sequence[bytes]],
    t: int,
    r: int = 0,
    T: int = DEFAULT_TABLES,
    deployment: str = NON_INTERACTIVE,
    key: ParticipantKey | None = None,
    key_shares: Sequence[OprfKeyShare] | None = None,
    seed: int | None = None,
    workers: int = 1,
) -> SessionResult:
    """Run every role of one session in this process.

    ``seed`` pins dummy cells and OPRF blinding so transcripts are
    reproducible; leave it ``None`` for real use.
    """
    roles = build_roles(sets, t, r, T, deployment, key, key_shares, seed, workers)
    transcript = run_roles(roles)
    agg: AggregatorRole = roles[AGGREGATOR]
    parts = {i: roles[participant_name(i)] for i in range(1, len(sets) + 1)}
    if agg.report is None or not all(p.done for p in parts.values()):
        raise ProtocolError("session ended before every party finished")
    return SessionResult(agg.params, {i: p.output for i, p in parts.items()}, agg.report, transcript, parts)


def run_session_noninteractive(sets, t, **kwargs) -> SessionResult:
    return simulate_local(sets, t, deployment=NON_INTERACTIVE, **kwargs)


def run_session_collusion_safe(sets, t, key_shares, **kwargs) -> SessionResult:
    return simulate_local(sets, t, deployment=COLLUSION_SAFE, key_shares=key_shares, **kwargs)


__all__ = [
    "AGGREGATOR",
    "AggregatorRole",
    "KeyHolderRole",
    "ParticipantRole",
    "SessionResult",
    "Transcript",
    "TranscriptEntry",
    "build_roles",
    "keyholder_name",
    "participant_name",
    "run_roles",
    "run_session_collusion_safe",
    "run_session_noninteractive",
    "simulate_local",
]
