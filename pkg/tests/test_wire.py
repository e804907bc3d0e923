import numpy as np
import pytest

from otmpsi.errors import ProtocolError
from otmpsi.oprf import hash_to_group
from otmpsi.shares import COLLUSION_SAFE, SessionParams
from otmpsi.tables import ShareTable, fill_dummies
from otmpsi.wire import (
    FRAME_HEADER,
    SHARES_OVERHEAD,
    MsgType,
    SizeReport,
    decode_bye,
    decode_frame,
    decode_oprf_request,
    decode_oprf_response,
    decode_params,
    decode_shares,
    encode_bye,
    encode_frame,
    encode_oprf_request,
    encode_oprf_response,
    encode_session_params,
    encode_shares,
    encode_size_report,
)


def test_frame_header_bytes():
    frame = encode_frame(MsgType.HITS, b"abc")
    assert frame == b"OTMP" + b"\x01\x00" + b"\x05" + b"\x03\x00\x00\x00" + b"abc"
    assert FRAME_HEADER.size == 11
    assert decode_frame(frame) == (MsgType.HITS, b"abc")


@pytest.mark.parametrize(
    "frame",
    [
        b"XTMP\x01\x00\x01\x00\x00\x00\x00",  # magic
        b"OTMP\x02\x00\x01\x00\x00\x00\x00",  # version
        b"OTMP\x01\x00\x09\x00\x00\x00\x00",  # message type
        b"OTMP\x01\x00\x01\x05\x00\x00\x00ab",  # length
        b"OTMP\x01\x00",  # truncated header
    ],
)
def test_bad_frames_rejected(frame):
    with pytest.raises(ProtocolError):
        decode_frame(frame)


def test_params_roundtrip():
    kind, payload = decode_frame(encode_size_report(SizeReport(7, 1234)))
    assert kind is MsgType.PARAMS and decode_params(payload) == SizeReport(7, 1234)
    p = SessionParams(N=9, t=4, M=321, r=2**63 + 5, T=18, k=3, deployment=COLLUSION_SAFE)
    assert decode_params(decode_frame(encode_session_params(p))[1]) == p
    with pytest.raises(ProtocolError):
        decode_params(b"\x07")


def test_shares_payload_is_exact():
    t = fill_dummies(ShareTable.empty(3, 5), np.random.default_rng(0))
    frame = encode_shares(4, t)
    assert len(frame) == SHARES_OVERHEAD + 3 * 5 * 8
    pid, back = decode_shares(decode_frame(frame)[1])
    assert pid == 4 and (back.cells == t.cells).all()


def test_oprf_messages_roundtrip():
    pts = [hash_to_group(bytes([i])) for i in range(3)]
    rid, T, got = decode_oprf_request(decode_frame(encode_oprf_request(5, 20, pts))[1])
    assert (rid, T, got) == (5, 20, pts)
    parts = [(1, pts), (2, pts[:1])]
    assert decode_oprf_response(decode_frame(encode_oprf_response(5, parts))[1]) == (5, parts)
    payload = decode_frame(encode_oprf_response(5, parts))[1]
    with pytest.raises(ProtocolError):
        decode_oprf_response(payload + b"x")
    with pytest.raises(ProtocolError):
        decode_oprf_response(payload[:-1])


def test_bye():
    assert decode_bye(decode_frame(encode_bye(1, "timeout"))[1]) == (1, "timeout")
