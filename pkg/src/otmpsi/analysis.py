"""Miss-rate experiment for the binning scheme and its analytic bounds.

Each trial plants one common element in ``t`` sets of size ``M`` and asks
whether some sub-table puts it in the same cell in all ``t`` tables.  Hash
functions are modelled as random oracles: the planted element gets the
same bins and ordering value everywhere, the other elements get fresh
uniform values per set.  Many trials run in one vectorised call of the same
placement kernel the real table builder uses.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .keyed_hash import FIRST, SECOND
from .tables import place

PLAIN = "plain"
REVERSED = "reversed"
SECOND_INSERTION = "second_insertion"
COMBINED = "combined"
OPTIMIZATIONS = (PLAIN, REVERSED, SECOND_INSERTION, COMBINED)

_FLAGS = {
    PLAIN: (False, False),
    REVERSED: (True, False),
    SECOND_INSERTION: (False, True),
    COMBINED: (True, True),
}

# closed forms of the per-table (or per-pair) failure integrals below
SINGLE_PLAIN = math.exp(-1)
SINGLE_SECOND = 2 * math.exp(-2)
PAIR_REVERSED = 3 * math.exp(-1) - 1
PAIR_COMBINED = 2 * math.exp(-1) + 2 * math.exp(-2) + 3 * math.exp(-4) - 1


def failure_integrands():
    """Integrands over the planted element's ordering quantile p in [0, 1]."""
    lose = lambda p: 1 - math.exp(-p)
    lose_second = lambda p: 1 - math.exp(p - 2)
    return {
        "single_plain": lose,
        "single_second": lambda p: lose(p) * lose_second(p),
        "pair_reversed": lambda p: lose(p) * lose(1 - p),
        "pair_combined": lambda p: lose(p) * lose_second(p) * lose(1 - p) * (1 - math.exp(-p - 1)),
    }


def miss_bound(optimization: str, n_tables: int) -> float:
    """Upper bound on the miss probability after ``n_tables`` sub-tables."""
    pair_reversal, second = _FLAGS[optimization]
    single = SINGLE_SECOND if second else SINGLE_PLAIN
    if not pair_reversal:
        return single**n_tables
    pair = PAIR_COMBINED if second else PAIR_REVERSED
    return pair ** (n_tables // 2) * single ** (n_tables % 2)


@dataclass
class MissRateReport:
    M: int
    t: int
    optimization: str
    trials: int
    table_counts: list[int]
    misses: list[int]
    bounds: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.bounds:
            self.bounds = [miss_bound(self.optimization, c) for c in self.table_counts]

    @property
    def rates(self) -> list[float]:
        return [m / self.trials for m in self.misses]

    def sigma(self, i: int) -> float:
        b = self.bounds[i]
        return math.sqrt(b * (1 - b) / self.trials)

    def within_bounds(self, n_sigma: float = 3.0) -> bool:
        return all(r <= b + n_sigma * self.sigma(i) for i, (r, b) in enumerate(zip(self.rates, self.bounds)))

    def monotone(self) -> bool:
        return all(a >= b for a, b in zip(self.misses, self.misses[1:]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["optimization", "M", "t", "tables", "trials", "misses", "rate", "bound"])
        for c, m, r, b in zip(self.table_counts, self.misses, self.rates, self.bounds):
            w.writerow([self.optimization, self.M, self.t, c, self.trials, m, f"{r:.6g}", f"{b:.6g}"])
        return buf.getvalue()


def _uniform_bins(rng, shape, B):
    out = rng.integers(0, B, size=shape)
    out[..., 0] = out[:, :1, 0]
    return out


def _orders(rng, shape):
    out = rng.integers(0, np.iinfo(np.uint64).max, size=shape, dtype=np.uint64, endpoint=True)
    out[..., 0] = out[:, :1, 0]
    return out


def _aligned(passes) -> np.ndarray:
    """Per trial: the planted element won the same pass in all t tables.

    Its bins are identical across the t sets, so that means one common cell.
    """
    p = passes[:, :, 0]
    return ((p & FIRST) != 0).all(axis=1) | ((p & SECOND) != 0).all(axis=1)


def _run_batch(rng, n, M, t, max_tables, pair_reversal, second) -> np.ndarray:
    """Index of the first aligning sub-table per trial (max_tables if none)."""
    B = M * t
    first_hit = np.full(n, max_tables, dtype=np.int64)
    alive = np.arange(n)
    pair_orders = pair_alive = None
    for a in range(max_tables):
        if alive.size == 0:
            break
        shape = (alive.size, t, M)
        if pair_reversal and a % 2 == 1:
            orders = pair_orders[np.searchsorted(pair_alive, alive)]
            prio = ~orders
        else:
            orders = _orders(rng, shape)
            pair_orders, pair_alive = orders, alive
            prio = orders
        bin1 = _uniform_bins(rng, shape, B)
        bin2 = _uniform_bins(rng, shape, B) if second else None
        group = np.repeat(np.arange(alive.size * t), M)
        passes = place(
            bin1.reshape(-1), None if bin2 is None else bin2.reshape(-1), prio.reshape(-1), B, group, alive.size * t
        ).reshape(shape)
        ok = _aligned(passes)
        first_hit[alive[ok]] = a
        alive = alive[~ok]
    return first_hit


def monte_carlo_miss_rate(
    M: int,
    t: int,
    table_counts: Sequence[int],
    trials: int,
    optimization: str = COMBINED,
    seed: int | None = None,
    batch: int | None = None,
) -> MissRateReport:
    """Count trials whose planted element is missed by the first c tables."""
    if optimization not in _FLAGS:
        raise ValueError(f"unknown optimization {optimization!r}; pick one of {OPTIMIZATIONS}")
    if M < 1 or t < 2 or trials < 1:
        raise ValueError("need M >= 1, t >= 2 and at least one trial")
    pair_reversal, second = _FLAGS[optimization]
    counts = sorted(set(int(c) for c in table_counts))
    rng = np.random.default_rng(seed)
    batch = batch or max(1, 400_000 // (M * t))
    first_hit = np.concatenate(
        [
            _run_batch(rng, min(batch, trials - done), M, t, counts[-1], pair_reversal, second)
            for done in range(0, trials, batch)
        ]
    )
    misses = [int(np.count_nonzero(first_hit >= c)) for c in counts]
    return MissRateReport(M, t, optimization, trials, counts, misses)
