"""Connection logs to hourly per-institution IP sets, and the plaintext oracle.

The default log format is comma-separated ``timestamp,src,dst`` with UTC
epoch seconds; ``#`` lines are comments.  :data:`ZEEK_CONN` reads Zeek
``conn.log`` TSV files (``ts`` column 0, ``id.orig_h`` 2, ``id.resp_h`` 4).
"""

from __future__ import annotations

import ipaddress
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

log = logging.getLogger(__name__)

HOUR = 3600
DEFAULT_THRESHOLD = 3


@dataclass(frozen=True)
class LogFormat:
    delimiter: str = ","
    timestamp: int = 0
    src: int = 1
    dst: int = 2
    comment: str = "#"


DEFAULT_FORMAT = LogFormat()
ZEEK_CONN = LogFormat(delimiter="\t", timestamp=0, src=2, dst=4)


@dataclass(frozen=True)
class ConnectionRecord:
    timestamp: float
    src: ipaddress.IPv4Address | ipaddress.IPv6Address
    dst: ipaddress.IPv4Address | ipaddress.IPv6Address


def parse_record(line: str, fmt: LogFormat = DEFAULT_FORMAT) -> ConnectionRecord:
    cols = line.rstrip("\r\n").split(fmt.delimiter)
    return ConnectionRecord(
        float(cols[fmt.timestamp]),
        ipaddress.ip_address(cols[fmt.src].strip()),
        ipaddress.ip_address(cols[fmt.dst].strip()),
    )


class InstitutionMap:
    """Which institution, if any, owns an address (by CIDR prefix)."""

    def __init__(self, prefixes: Mapping[str, Iterable[str]]):
        self.networks = [
            (name, ipaddress.ip_network(p, strict=False))
            for name, plist in prefixes.items()
            for p in plist
        ]

    def owner(self, addr) -> str | None:
        for name, net in self.networks:
            if addr.version == net.version and addr in net:
                return name
        return None

    @classmethod
    def parse(cls, spec: str) -> "InstitutionMap":
        """``name=cidr,cidr;name2=cidr`` as used in config files."""
        prefixes: dict[str, list[str]] = {}
        for part in filter(None, (p.strip() for p in spec.split(";"))):
            name, _, cidrs = part.partition("=")
            prefixes.setdefault(name.strip(), []).extend(c.strip() for c in cidrs.split(",") if c.strip())
        return cls(prefixes)


@dataclass
class HourlySets:
    sets: dict[str, set[bytes]]
    parse_errors: int = 0
    out_of_window: int = 0
    not_inbound: int = 0

    def participants(self) -> list[tuple[str, list[bytes]]]:
        """Non-empty sets in a stable order; ids follow list position."""
        return [(name, sorted(self.sets[name])) for name in sorted(self.sets)]


def ingest_hourly_sets(
    lines: Iterable[str],
    institutions: InstitutionMap | Mapping[str, Iterable[str]],
    hour_start: float,
    fmt: LogFormat = DEFAULT_FORMAT,
) -> HourlySets:
    """Unique external sources contacting each institution in one hour.

    A record counts for institution X when its destination lies in X's
    prefixes and its source does not.  Unparseable lines are counted and
    skipped.  Institutions that saw nothing are left out.
    """
    if not isinstance(institutions, InstitutionMap):
        institutions = InstitutionMap(institutions)
    out = HourlySets({})
    for line in lines:
        if not line.strip() or line.lstrip().startswith(fmt.comment):
            continue
        try:
            rec = parse_record(line, fmt)
        except (ValueError, IndexError):
            out.parse_errors += 1
            continue
        if not hour_start <= rec.timestamp < hour_start + HOUR:
            out.out_of_window += 1
            continue
        dest = institutions.owner(rec.dst)
        if dest is None or institutions.owner(rec.src) == dest:
            out.not_inbound += 1
            continue
        out.sets.setdefault(dest, set()).add(rec.src.packed)
    if out.parse_errors:
        log.warning("skipped %d unparseable log lines", out.parse_errors)
    return out


@dataclass
class OracleResult:
    """Elements present in at least t sets and, for each, who holds it."""

    elements: set[bytes]
    holders: dict[bytes, frozenset[int]] = field(default_factory=dict)

    def output_for(self, participant_id: int) -> set[bytes]:
        return {e for e, ids in self.holders.items() if participant_id in ids}


def oracle_over_threshold(sets: Sequence[Iterable[bytes]], t: int) -> OracleResult:
    """Plaintext over-threshold intersection; participant ids are 1-based."""
    holders: dict[bytes, set[int]] = {}
    for i, s in enumerate(sets, start=1):
        for e in set(s):
            holders.setdefault(e, set()).add(i)
    hits = {e: frozenset(ids) for e, ids in holders.items() if len(ids) >= t}
    return OracleResult(set(hits), hits)

