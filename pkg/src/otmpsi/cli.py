"""Command-line entry point: ``otmpsi <subcommand>``.

Exit codes: 0 success, 2 configuration error, 3 protocol error, 4 timeout.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import analysis, bench
from .config import RoleConfig, load_config
from .elements import read_elements, write_atomic, write_elements_text
from .errors import ConfigError, OtmpsiError, ParameterError, SessionTimeout
from .ingest import DEFAULT_FORMAT, DEFAULT_THRESHOLD, ZEEK_CONN, InstitutionMap, ingest_hourly_sets
from .keyed_hash import ParticipantKey
from .net import Node
from .oprf import OprfKeyShare
from .runtime import AGGREGATOR, AggregatorRole, KeyHolderRole, ParticipantRole, keyholder_name, simulate_local
from .shares import COLLUSION_SAFE, NON_INTERACTIVE
from .wire import MsgType

log = logging.getLogger("otmpsi")

EXIT_OK, EXIT_CONFIG, EXIT_PROTOCOL, EXIT_TIMEOUT = 0, 2, 3, 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, SessionTimeout):
        return EXIT_TIMEOUT
    if isinstance(exc, (ConfigError, ParameterError)):
        return EXIT_CONFIG
    if isinstance(exc, (OtmpsiError, ConnectionError)):
        return EXIT_PROTOCOL
    if isinstance(exc, (OSError, ValueError)):
        # unreadable or malformed input files
        return EXIT_CONFIG
    raise exc


# -- key files -----------------------------------------------------------------


def load_participant_key(path: str) -> ParticipantKey:
    data = Path(path).read_bytes()
    if len(data) != 32:
        data = bytes.fromhex(data.decode().strip())
    try:
        return ParticipantKey(data)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_key_share(path: str) -> OprfKeyShare:
    try:
        return OprfKeyShare.from_bytes(Path(path).read_bytes())
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# -- networked roles -------------------------------------------------------------


def _run_node(role, cfg: RoleConfig, connect: dict, listen: bool = False) -> None:
    node = Node(role, connect, cfg.timeout)

    async def main() -> None:
        if listen:
            host, port = cfg.address("listen")
            await node.listen(host, port)
        await node.run()

    asyncio.run(main())


def cmd_participant(cfg: RoleConfig) -> int:
    cfg.require("id", "aggregator", "input")
    elements = read_elements(cfg.input)
    if not elements:
        raise ConfigError("input set is empty; an empty set does not take part in the session")
    key = load_participant_key(cfg.key) if cfg.key else None
    connect = {AGGREGATOR: cfg.address("aggregator")}
    for j, addr in enumerate(cfg.keyholder_addresses(), start=1):
        connect[keyholder_name(j)] = addr
    role = ParticipantRole(cfg.id, elements, key)
    _run_node(role, cfg, connect)
    if cfg.output:
        write_elements_text(cfg.output, role.output)
    log.info("P%d: %d of %d elements are over threshold", cfg.id, len(role.output), len(elements))
    return EXIT_OK


def cmd_aggregator(cfg: RoleConfig) -> int:
    cfg.require("listen", "N", "t")
    role = AggregatorRole(cfg.N, cfg.t, cfg.r, cfg.T, cfg.deployment, cfg.k, cfg.workers)
    _run_node(role, cfg, {}, listen=True)
    if cfg.output:
        lines = ["alpha,bin,participants"] + [
            f"{rec.alpha},{rec.bin},{' '.join(map(str, sorted(rec.participants)))}" for rec in role.report.records
        ]
        write_atomic(cfg.output, ("\n".join(lines) + "\n").encode())
    log.info("aggregator: %d hit cells", len(role.report.records))
    return EXIT_OK


def cmd_keyholder(cfg: RoleConfig) -> int:
    cfg.require("listen", "key", "k", "N")
    share = load_key_share(cfg.key)
    if cfg.id is not None and cfg.id != share.holder_id:
        raise ConfigError(f"key file belongs to holder {share.holder_id}, config says {cfg.id}")
    connect = {}
    if share.holder_id != 1:
        cfg.require("combiner")
        connect[keyholder_name(1)] = cfg.address("combiner")
    _run_node(KeyHolderRole(share, cfg.k, cfg.N), cfg, connect, listen=True)
    return EXIT_OK


# -- offline commands ------------------------------------------------------------


def _load_sets(args, cfg: RoleConfig) -> tuple[list[str], list[list[bytes]]]:
    if args.log:
        if not args.institutions or args.hour is None:
            raise ConfigError("--log needs --institutions and --hour")
        fmt = ZEEK_CONN if args.zeek else DEFAULT_FORMAT
        with open(args.log) as fh:
            hourly = ingest_hourly_sets(fh, InstitutionMap.parse(args.institutions), args.hour, fmt)
        named = hourly.participants()
        return [n for n, _ in named], [s for _, s in named]
    if not args.inputs:
        raise ConfigError("simulate needs input files or --log")
    sets = [read_elements(p) for p in args.inputs]
    kept = [(Path(p).stem, s) for p, s in zip(args.inputs, sets) if s]
    return [n for n, _ in kept], [s for _, s in kept]


def cmd_simulate(args, cfg: RoleConfig) -> int:
    names, sets = _load_sets(args, cfg)
    t = cfg.t if cfg.t is not None else DEFAULT_THRESHOLD
    key_shares = None
    if cfg.deployment == COLLUSION_SAFE:
        key_shares = [OprfKeyShare.generate(j, t) for j in range(1, max(cfg.k, 1) + 1)]
    res = simulate_local(
        sets, t, r=cfg.r, T=cfg.T, deployment=cfg.deployment, key_shares=key_shares, seed=cfg.seed, workers=cfg.workers
    )
    summary = {
        "participants": len(sets),
        "t": t,
        "M": res.params.M,
        "deployment": cfg.deployment,
        "rounds": res.transcript.rounds(),
        "hit_cells": len(res.report.records),
        "upload_bytes": res.transcript.bytes_sent("P1", MsgType.SHARES),
        "outputs": {name: len(res.outputs[i]) for i, name in enumerate(names, start=1)},
    }
    if cfg.output:
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        for i, name in enumerate(names, start=1):
            write_elements_text(out / f"{name}.txt", res.outputs[i])
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_bench(args, cfg: RoleConfig) -> int:
    grid = [(n, t, m) for n in args.N for t in args.t for m in args.M if 1 <= t <= n]
    if not grid:
        raise ConfigError("benchmark grid is empty")
    rows = bench.bench_reconstruction(grid, cfg.T, cfg.seed, cfg.workers, args.repeats)
    _emit(bench.rows_to_csv(rows), cfg.output)
    return EXIT_OK


def cmd_analyze(args, cfg: RoleConfig) -> int:
    opts = analysis.OPTIMIZATIONS if args.optimization == "all" else (args.optimization,)
    parts = []
    for i, opt in enumerate(opts):
        report = analysis.monte_carlo_miss_rate(args.M, args.t, args.tables, args.trials, opt, cfg.seed)
        csv_text = report.to_csv()
        parts.append(csv_text if i == 0 else csv_text.split("\n", 1)[1])
    _emit("".join(parts), cfg.output)
    return EXIT_OK


def cmd_keygen(args, cfg: RoleConfig) -> int:
    if args.participant_key:
        write_atomic(args.participant_key, ParticipantKey.generate().key)
    if args.keyholders:
        if cfg.t is None:
            raise ConfigError("key-holder shares need the threshold t")
        out = Path(args.dir)
        out.mkdir(parents=True, exist_ok=True)
        for j in range(1, args.keyholders + 1):
            write_atomic(out / f"keyholder{j}.key", OprfKeyShare.generate(j, cfg.t).to_bytes())
    if not (args.participant_key or args.keyholders):
        raise ConfigError("keygen needs --participant-key or --keyholders")
    return EXIT_OK


def _emit(text: str, path: str | None) -> None:
    if path:
        write_atomic(path, text.encode())
    else:
        sys.stdout.write(text)


# -- argument parsing ------------------------------------------------------------


def _table_counts(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        lo, _, hi = part.partition("-")
        out.extend(range(int(lo), int(hi or lo) + 1))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="otmpsi", description="Over-threshold multiparty set intersection")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("-c", "--config", help="key = value configuration file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--output", help="output file (or directory for simulate)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        return sp

    def session(sp):
        sp.add_argument("--t", type=int)
        sp.add_argument("--T", type=int)
        sp.add_argument("--r", type=int)
        sp.add_argument("--k", type=int)
        sp.add_argument("--deployment", choices=[NON_INTERACTIVE, COLLUSION_SAFE])
        sp.add_argument("--timeout", type=float)
        return sp

    sp = session(common(sub.add_parser("participant", help="join a session with one set")))
    sp.add_argument("--id", type=int)
    sp.add_argument("--input")
    sp.add_argument("--key")
    sp.add_argument("--aggregator")
    sp.add_argument("--keyholders", type=lambda s: [a for a in s.split(",") if a])

    sp = session(common(sub.add_parser("aggregator", help="collect share tables and reconstruct")))
    sp.add_argument("--N", type=int)
    sp.add_argument("--listen")

    sp = session(common(sub.add_parser("keyholder", help="serve blinded OPRF evaluations")))
    sp.add_argument("--id", type=int)
    sp.add_argument("--N", type=int)
    sp.add_argument("--key")
    sp.add_argument("--listen")
    sp.add_argument("--combiner")

    sp = session(common(sub.add_parser("simulate", help="run a whole session in one process")))
    sp.add_argument("inputs", nargs="*", help="element files, one per participant")
    sp.add_argument("--log", help="connection log to split into hourly sets")
    sp.add_argument("--institutions", help="name=cidr,cidr;name2=cidr")
    sp.add_argument("--hour", type=float, help="UTC epoch second where the hour starts")
    sp.add_argument("--zeek", action="store_true", help="log is a Zeek conn.log")

    sp = common(sub.add_parser("bench", help="time reconstruction on random tables"))
    sp.add_argument("--N", type=int, nargs="+", default=[10])
    sp.add_argument("--t", type=int, nargs="+", default=[3])
    sp.add_argument("--M", type=int, nargs="+", default=[1000, 10000])
    sp.add_argument("--T", type=int)
    sp.add_argument("--repeats", type=int, default=1)

    sp = common(sub.add_parser("analyze", help="Monte-Carlo miss rate of the binning"))
    sp.add_argument("--M", type=int, default=200)
    sp.add_argument("--t", type=int, default=4)
    sp.add_argument("--tables", type=_table_counts, default=_table_counts("1-6"))
    sp.add_argument("--trials", type=int, default=10_000)
    sp.add_argument("--optimization", choices=[*analysis.OPTIMIZATIONS, "all"], default="all")

    sp = common(sub.add_parser("keygen", help="create key material"))
    sp.add_argument("--participant-key", help="write a fresh shared participant key here")
    sp.add_argument("--keyholders", type=int, help="number of key-holder shares to create")
    sp.add_argument("--t", type=int)
    sp.add_argument("--dir", default=".")
    return p


_CONFIG_KEYS = (
    "id", "N", "t", "r", "T", "k", "deployment", "listen", "aggregator", "keyholders",
    "combiner", "key", "input", "output", "timeout", "workers", "seed",
)  # fmt: skip

_COMMANDS = {
    "participant": cmd_participant,
    "aggregator": cmd_aggregator,
    "keyholder": cmd_keyholder,
}
_OFFLINE = {"simulate": cmd_simulate, "bench": cmd_bench, "analyze": cmd_analyze, "keygen": cmd_keygen}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )
    skip = {"bench": {"N", "t"}, "keygen": {"keyholders"}}.get(args.command, set())
    flags = {k: v for k in _CONFIG_KEYS if k not in skip and (v := vars(args).get(k)) is not None}
    try:
        cfg = load_config(args.config, args.set, role=args.command, **flags)
        if args.command in _COMMANDS:
            return _COMMANDS[args.command](cfg)
        return _OFFLINE[args.command](args, cfg)
    except Exception as exc:
        code = exit_code_for(exc)
        log.error("%s: %s", type(exc).__name__, exc)
        print(f"otmpsi: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
