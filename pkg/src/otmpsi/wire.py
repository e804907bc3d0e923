"""Binary framing and message payloads.

Frame::

    magic "OTMP" | version u16 | msg-type u8 | length u32 | payload

All integers on the wire are little-endian.  See ``docs/wire.md``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

from .errors import ProtocolError
from .oprf import ELEMENT_BYTES, GROUP_ID
from .shares import COLLUSION_SAFE, NON_INTERACTIVE, SessionParams
from .tables import ShareTable

MAGIC = b"OTMP"
VERSION = 1
FRAME_HEADER = struct.Struct("<4sHBI")
MAX_PAYLOAD = (1 << 32) - 1


class MsgType(IntEnum):
    PARAMS = 1
    SHARES = 2
    OPRF_REQ = 3
    OPRF_RESP = 4
    HITS = 5
    BYE = 6


def encode_frame(msg_type: MsgType, payload: bytes) -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise ProtocolError("payload too large for one frame")
    return FRAME_HEADER.pack(MAGIC, VERSION, int(msg_type), len(payload)) + payload


def decode_header(header: bytes) -> tuple[MsgType, int]:
    magic, version, kind, length = FRAME_HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    try:
        return MsgType(kind), length
    except ValueError:
        raise ProtocolError(f"unknown message type {kind}") from None


def decode_frame(frame: bytes) -> tuple[MsgType, bytes]:
    if len(frame) < FRAME_HEADER.size:
        raise ProtocolError("truncated frame header")
    kind, length = decode_header(frame[: FRAME_HEADER.size])
    payload = frame[FRAME_HEADER.size :]
    if len(payload) != length:
        raise ProtocolError(f"frame announces {length} payload bytes, carries {len(payload)}")
    return kind, payload


# -- PARAMS -----------------------------------------------------------------

_SIZE_REPORT = struct.Struct("<BHI")
_SESSION = struct.Struct("<BHHIHHQBB")
_DEPLOY_CODE = {NON_INTERACTIVE: 0, COLLUSION_SAFE: 1}
_DEPLOY_NAME = {v: k for k, v in _DEPLOY_CODE.items()}


@dataclass(frozen=True)
class SizeReport:
    participant_id: int
    set_size: int


def encode_size_report(report: SizeReport) -> bytes:
    return encode_frame(MsgType.PARAMS, _SIZE_REPORT.pack(0, report.participant_id, report.set_size))


def encode_session_params(p: SessionParams) -> bytes:
    group = GROUP_ID if p.deployment == COLLUSION_SAFE else 0
    body = _SESSION.pack(1, p.N, p.t, p.M, p.T, p.k, p.r, _DEPLOY_CODE[p.deployment], group)
    return encode_frame(MsgType.PARAMS, body)


def decode_params(payload: bytes) -> SizeReport | SessionParams:
    if not payload:
        raise ProtocolError("empty PARAMS payload")
    if payload[0] == 0 and len(payload) == _SIZE_REPORT.size:
        _, pid, size = _SIZE_REPORT.unpack(payload)
        return SizeReport(pid, size)
    if payload[0] == 1 and len(payload) == _SESSION.size:
        _, N, t, M, T, k, r, dep, group = _SESSION.unpack(payload)
        if dep not in _DEPLOY_NAME:
            raise ProtocolError(f"unknown deployment code {dep}")
        if dep == 1 and group != GROUP_ID:
            raise ProtocolError(f"unsupported OPRF group {group}")
        return SessionParams(N=N, t=t, M=M, r=r, T=T, k=k, deployment=_DEPLOY_NAME[dep])
    raise ProtocolError("malformed PARAMS payload")


# -- SHARES -----------------------------------------------------------------

_SHARES_HEAD = struct.Struct("<H")


def encode_shares(participant_id: int, table: ShareTable) -> bytes:
    return encode_frame(MsgType.SHARES, _SHARES_HEAD.pack(participant_id) + table.to_bytes())


def decode_shares(payload: bytes) -> tuple[int, ShareTable]:
    (pid,) = _SHARES_HEAD.unpack_from(payload)
    return pid, ShareTable.from_bytes(memoryview(payload)[_SHARES_HEAD.size :])


SHARES_OVERHEAD = FRAME_HEADER.size + _SHARES_HEAD.size + ShareTable.HEADER.size


# -- OPRF -------------------------------------------------------------------

_REQ_HEAD = struct.Struct("<HHI")
_RESP_HEAD = struct.Struct("<HH")
_RESP_PART = struct.Struct("<HI")


def _points(data: memoryview, count: int) -> list[bytes]:
    if len(data) != count * ELEMENT_BYTES:
        raise ProtocolError("point batch length does not match its count prefix")
    return [bytes(data[i * ELEMENT_BYTES : (i + 1) * ELEMENT_BYTES]) for i in range(count)]


def encode_oprf_request(requester: int, T: int, points: Sequence[bytes]) -> bytes:
    return encode_frame(MsgType.OPRF_REQ, _REQ_HEAD.pack(requester, T, len(points)) + b"".join(points))


def decode_oprf_request(payload: bytes) -> tuple[int, int, list[bytes]]:
    requester, T, count = _REQ_HEAD.unpack_from(payload)
    return requester, T, _points(memoryview(payload)[_REQ_HEAD.size :], count)


def encode_oprf_response(requester: int, parts: Sequence[tuple[int, Sequence[bytes]]]) -> bytes:
    """``parts`` is a list of (holder id, points) evaluated for ``requester``."""
    body = [_RESP_HEAD.pack(requester, len(parts))]
    for holder, points in parts:
        body.append(_RESP_PART.pack(holder, len(points)))
        body.extend(points)
    return encode_frame(MsgType.OPRF_RESP, b"".join(body))


def decode_oprf_response(payload: bytes) -> tuple[int, list[tuple[int, list[bytes]]]]:
    view = memoryview(payload)
    requester, n_parts = _RESP_HEAD.unpack_from(view)
    pos = _RESP_HEAD.size
    parts = []
    for _ in range(n_parts):
        holder, count = _RESP_PART.unpack_from(view, pos)
        pos += _RESP_PART.size
        end = pos + count * ELEMENT_BYTES
        if end > len(view):
            raise ProtocolError("truncated OPRF response")
        parts.append((holder, _points(view[pos:end], count)))
        pos = end
    if pos != len(view):
        raise ProtocolError("trailing bytes in OPRF response")
    return requester, parts


# -- BYE --------------------------------------------------------------------

BYE_OK = 0
BYE_ABORT = 1


def encode_bye(status: int = BYE_OK, reason: str = "") -> bytes:
    return encode_frame(MsgType.BYE, bytes([status]) + reason.encode())


def decode_bye(payload: bytes) -> tuple[int, str]:
    if not payload:
        raise ProtocolError("empty BYE payload")
    return payload[0], payload[1:].decode(errors="replace")
