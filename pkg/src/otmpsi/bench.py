"""Reconstruction timing on synthetic share tables."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .aggregator import expected_interpolations, reconstruct_stacked
from .field import Q
from .shares import DEFAULT_TABLES

CSV_HEADER = ["N", "t", "M", "T", "B", "seconds", "interpolations"]


@dataclass(frozen=True)
class BenchRow:
    N: int
    t: int
    M: int
    T: int
    B: int
    seconds: float
    interpolations: int


def _warm_up() -> None:
    # first call pays for loading the compiled kernel
    reconstruct_stacked(np.ones((2, 4), dtype=np.uint64), [1, 2], 2, 1, 4)


def bench_point(N: int, t: int, M: int, T: int = DEFAULT_TABLES, seed: int | None = 0, workers: int = 1) -> BenchRow:
    """Time one reconstruction over N uniformly random tables."""
    B = M * t
    rng = np.random.default_rng(seed)
    stack = rng.integers(0, Q, size=(N, T * B), dtype=np.uint64)
    start = time.perf_counter()
    report = reconstruct_stacked(stack, list(range(1, N + 1)), t, T, B, workers)
    seconds = time.perf_counter() - start
    if report.interpolations != expected_interpolations(N, t, T, B):
        raise AssertionError("interpolation count drifted from C(N,t)*T*B")
    return BenchRow(N, t, M, T, B, seconds, report.interpolations)


def bench_reconstruction(
    grid: Iterable[tuple[int, int, int]],
    T: int = DEFAULT_TABLES,
    seed: int | None = 0,
    workers: int = 1,
    repeats: int = 1,
) -> list[BenchRow]:
    """One row per (N, t, M) point; with ``repeats`` > 1 the fastest run is kept."""
    _warm_up()
    rows = []
    for N, t, M in grid:
        runs = [bench_point(N, t, M, T, seed, workers) for _ in range(repeats)]
        rows.append(min(runs, key=lambda row: row.seconds))
    return rows


def rows_to_csv(rows: Iterable[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.N, r.t, r.M, r.T, r.B, f"{r.seconds:.6f}", r.interpolations])
    return buf.getvalue()


def loglog_slope(xs: Iterable[float], ys: Iterable[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(list(xs), dtype=float)), np.log(np.asarray(list(ys), dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])
