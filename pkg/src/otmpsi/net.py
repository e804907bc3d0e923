"""Run a protocol role over TCP.

Each connection carries the same frames the simulator passes around.  An
accepting node learns who is on the other end from the first frame:
size reports and OPRF requests name the participant, a forwarded partial
evaluation names its key holder.  Outgoing connections are opened on first
use and retried until the session deadline.
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass, field
from typing import Mapping

from .errors import OtmpsiError, ProtocolError, SessionTimeout
from .runtime import keyholder_name, participant_name
from .wire import (
    BYE_ABORT,
    FRAME_HEADER,
    MsgType,
    SizeReport,
    decode_header,
    decode_oprf_request,
    decode_oprf_response,
    decode_params,
    encode_bye,
)

log = logging.getLogger(__name__)

Address = tuple[str, int]


async def read_frame(reader: asyncio.StreamReader) -> bytes | None:
    """One whole frame, or None on a clean end of stream."""
    try:
        header = await reader.readexactly(FRAME_HEADER.size)
    except asyncio.IncompleteReadError as exc:
        if exc.partial:
            raise ProtocolError("connection closed inside a frame header") from None
        return None
    _, length = decode_header(header)
    try:
        return header + await reader.readexactly(length)
    except asyncio.IncompleteReadError:
        raise ProtocolError("connection closed inside a frame") from None


def identify(frame: bytes) -> str:
    """Name of the party that opened a connection, from its first frame."""
    kind, _ = decode_header(frame[: FRAME_HEADER.size])
    payload = frame[FRAME_HEADER.size :]
    if kind is MsgType.PARAMS:
        report = decode_params(payload)
        if isinstance(report, SizeReport):
            return participant_name(report.participant_id)
    elif kind is MsgType.OPRF_REQ:
        return participant_name(decode_oprf_request(payload)[0])
    elif kind is MsgType.OPRF_RESP:
        _, parts = decode_oprf_response(payload)
        if len(parts) == 1:
            return keyholder_name(parts[0][0])
    raise ProtocolError(f"cannot identify peer from a leading {kind.name} frame")


@dataclass
class Node:
    """Drives one role: accepts peers, dials peers, feeds frames to the role."""

    role: object
    connect: Mapping[str, Address] = field(default_factory=dict)
    timeout: float = 60.0
    sent: list[tuple[str, str, bytes]] | None = None

    def __post_init__(self) -> None:
        self._writers: dict[str, asyncio.StreamWriter] = {}
        self._inbox: asyncio.Queue = asyncio.Queue()
        self._tasks: list[asyncio.Task] = []
        self._server: asyncio.AbstractServer | None = None

    async def listen(self, host: str, port: int) -> int:
        self._server = await asyncio.start_server(self._accept, host, port)
        return self._server.sockets[0].getsockname()[1]

    async def _accept(self, reader, writer) -> None:
        try:
            first = await asyncio.wait_for(read_frame(reader), self.timeout)
            if first is None:
                writer.close()
                return
            peer = identify(first)
        except Exception as exc:
            await self._inbox.put(("?", exc))
            writer.close()
            return
        self._writers[peer] = writer
        await self._inbox.put((peer, first))
        await self._pump(peer, reader)

    async def _pump(self, peer: str, reader) -> None:
        try:
            while (frame := await read_frame(reader)) is not None:
                await self._inbox.put((peer, frame))
        except (OtmpsiError, ConnectionError) as exc:
            await self._inbox.put((peer, exc))

    async def _dial(self, name: str) -> asyncio.StreamWriter:
        if name not in self.connect:
            raise ProtocolError(f"{self.role.name} has no route to {name}")
        host, port = self.connect[name]
        loop = asyncio.get_running_loop()
        deadline = loop.time() + self.timeout
        while True:
            try:
                reader, writer = await asyncio.open_connection(host, port)
                break
            except OSError:
                if loop.time() > deadline:
                    raise SessionTimeout(f"could not reach {name} at {host}:{port}") from None
                await asyncio.sleep(0.05)
        self._writers[name] = writer
        self._tasks.append(asyncio.create_task(self._pump(name, reader)))
        return writer

    async def _send(self, outgoing) -> None:
        for dst, frame in outgoing:
            writer = self._writers.get(dst) or await self._dial(dst)
            if self.sent is not None:
                self.sent.append((self.role.name, dst, frame))
            writer.write(frame)
            await writer.drain()

    async def run(self) -> None:
        try:
            await self._send(self.role.start())
            while not self.role.done:
                try:
                    src, item = await asyncio.wait_for(self._inbox.get(), self.timeout)
                except asyncio.TimeoutError:
                    raise SessionTimeout(f"{self.role.name} heard nothing for {self.timeout:g} s") from None
                if isinstance(item, Exception):
                    raise item
                await self._send(self.role.handle(src, item))
        except Exception as exc:
            await self._abort(str(exc) or type(exc).__name__)
            raise
        finally:
            await self.close()

    async def _abort(self, reason: str) -> None:
        frame = encode_bye(BYE_ABORT, reason[:200])
        for writer in list(self._writers.values()):
            try:
                writer.write(frame)
                await asyncio.wait_for(writer.drain(), 1.0)
            except (OSError, asyncio.TimeoutError):
                pass

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
        for writer in self._writers.values():
            writer.close()
        for task in self._tasks:
            task.cancel()
        for writer in self._writers.values():
            try:
                await writer.wait_closed()
            except (OSError, ConnectionError):
                pass


async def run_local_network(
    roles: Mapping[str, object], host: str = "127.0.0.1", timeout: float = 30.0
) -> list[tuple[str, str, bytes]]:
    """Run every role as its own TCP node on localhost; return the sent frames.

    Aggregator and key holders listen on ephemeral ports; participants and
    non-combining key holders dial them.
    """
    sent: list[tuple[str, str, bytes]] = []
    listeners = [n for n in roles if n == "A" or n.startswith("KH")]
    nodes = {name: Node(role, timeout=timeout, sent=sent) for name, role in roles.items()}
    routes = {name: (host, await nodes[name].listen(host, 0)) for name in listeners}
    for name, node in nodes.items():
        node.connect = {k: v for k, v in routes.items() if k != name}
    await asyncio.gather(*(node.run() for node in nodes.values()))
    return sent
