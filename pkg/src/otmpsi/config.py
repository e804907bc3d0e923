"""Plain-text ``key = value`` configuration with command-line overrides.

Example participant file::

    # hourly IDS session
    id = 3
    N = 12
    t = 3
    aggregator = 10.1.0.5:7000
    key = /etc/otmpsi/participant.key
    input = /var/lib/otmpsi/hour.txt
    output = /var/lib/otmpsi/hits.txt

Lists (``keyholders``) are comma separated; addresses are ``host:port``.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable

from .errors import ConfigError
from .shares import COLLUSION_SAFE, DEFAULT_TABLES, NON_INTERACTIVE

Address = tuple[str, int]

_SECTION = "otmpsi"


@dataclass
class RoleConfig:
    role: str = ""
    id: int | None = None
    N: int | None = None
    t: int | None = None
    r: int = 0
    T: int = DEFAULT_TABLES
    k: int = 0
    deployment: str = NON_INTERACTIVE
    listen: str | None = None
    aggregator: str | None = None
    keyholders: list[str] = field(default_factory=list)
    combiner: str | None = None
    key: str | None = None
    input: str | None = None
    output: str | None = None
    timeout: float = 60.0
    workers: int = 1
    seed: int | None = None

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) in (None, "", [])]
        if missing:
            raise ConfigError(f"{self.role or 'role'} needs: {', '.join(missing)}")

    def address(self, name: str) -> Address:
        return parse_address(getattr(self, name), name)

    def keyholder_addresses(self) -> list[Address]:
        return [parse_address(a, "keyholders") for a in self.keyholders]


_FIELDS = {f.name: f for f in fields(RoleConfig)}
_INTS = {"id", "N", "t", "r", "T", "k", "workers", "seed"}


def parse_address(text: str | None, what: str = "address") -> Address:
    host, sep, port = (text or "").rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigError(f"{what}: expected host:port, got {text!r}")
    return host.strip("[]") or "127.0.0.1", int(port)


def _coerce(name: str, raw: str):
    if name not in _FIELDS:
        raise ConfigError(f"unknown configuration key {name!r}")
    raw = raw.strip()
    try:
        if name in _INTS:
            return int(raw, 0)
        if name == "timeout":
            return float(raw)
        if name == "keyholders":
            return [a.strip() for a in raw.split(",") if a.strip()]
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None
    return raw


def parse_config_text(text: str) -> dict[str, object]:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case sensitive (N vs n)
    try:
        parser.read_string(f"[{_SECTION}]\n{text}")
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    return {k: _coerce(k, v) for k, v in parser[_SECTION].items()}


def load_config(
    path: str | os.PathLike | None = None,
    overrides: Iterable[str] = (),
    role: str = "",
    **flags,
) -> RoleConfig:
    """File values, then ``key=value`` overrides, then non-None ``flags``."""
    values: dict[str, object] = {}
    if path is not None:
        try:
            values.update(parse_config_text(Path(path).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    for item in overrides:
        name, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value")
        values[name.strip()] = _coerce(name.strip(), raw)
    for name, value in flags.items():
        if value is not None:
            if name not in _FIELDS:
                raise ConfigError(f"unknown configuration key {name!r}")
            values[name] = value
    if role:
        values["role"] = role
    cfg = RoleConfig(**values)
    if cfg.deployment not in (NON_INTERACTIVE, COLLUSION_SAFE):
        raise ConfigError(f"deployment must be {NON_INTERACTIVE!r} or {COLLUSION_SAFE!r}")
    if cfg.timeout <= 0:
        raise ConfigError("timeout must be positive")
    return cfg
