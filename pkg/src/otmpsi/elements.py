"""Element encodings and element-list files.

Elements are opaque byte strings.  For the intrusion-detection use case an
element is a packed IPv4 (4 bytes) or IPv6 (16 bytes) address.

Two file formats are accepted:

* text: one IP address per line, ``#`` comments and blank lines ignored;
* binary: ``b"OTEL"`` | count u32 | count * (length u8 | bytes).
"""

from __future__ import annotations

import ipaddress
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable

BINARY_MAGIC = b"OTEL"


def encode_ip(text: str) -> bytes:
    return ipaddress.ip_address(text.strip()).packed


def decode_element(element: bytes) -> str:
    if len(element) in (4, 16):
        return str(ipaddress.ip_address(element))
    return element.hex()


def dumps_binary(elements: Iterable[bytes]) -> bytes:
    elements = list(elements)
    parts = [BINARY_MAGIC, struct.pack("<I", len(elements))]
    for e in elements:
        if len(e) > 255:
            raise ValueError("binary element lists hold elements of at most 255 bytes")
        parts.append(bytes([len(e)]) + e)
    return b"".join(parts)


def loads_binary(data: bytes) -> list[bytes]:
    if data[:4] != BINARY_MAGIC:
        raise ValueError("not a binary element list")
    (count,) = struct.unpack_from("<I", data, 4)
    pos, out = 8, []
    for _ in range(count):
        n = data[pos]
        out.append(bytes(data[pos + 1 : pos + 1 + n]))
        pos += 1 + n
    if pos != len(data):
        raise ValueError("trailing bytes in binary element list")
    return out


def read_elements(path: str | os.PathLike) -> list[bytes]:
    """Load a deduplicated element list, preserving first-seen order."""
    data = Path(path).read_bytes()
    if data.startswith(BINARY_MAGIC):
        items = loads_binary(data)
    else:
        items = [
            encode_ip(line.split("#", 1)[0])
            for line in data.decode().splitlines()
            if line.split("#", 1)[0].strip()
        ]
    return list(dict.fromkeys(items))


def write_atomic(path: str | os.PathLike, data: bytes) -> None:
    """Write via a temporary file and rename so readers never see partial output."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_elements_text(path: str | os.PathLike, elements: Iterable[bytes]) -> None:
    lines = sorted(decode_element(e) for e in elements)
    write_atomic(path, "".join(line + "\n" for line in lines).encode())
