import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).parent / "data"

_criteria: dict[int, str] = {}


def random_instance(rnd: random.Random, n_range=(4, 8), t_range=(2, 4), max_size=500, min_size=1):
    """Random sets with planted over- and under-threshold elements.

    Set sizes are log-uniform so that most instances are small and a few
    approach ``max_size``.
    """
    N = rnd.randint(*n_range)
    t = rnd.randint(t_range[0], min(t_range[1], N))
    sizes = [max(min_size, min(max_size, int(round(min_size * (max_size / min_size) ** rnd.random())))) for _ in range(N)]
    sets = [dict() for _ in range(N)]
    # planted elements held by exactly c participants, c around the threshold
    for _ in range(rnd.randint(1, 4)):
        c = rnd.choice([max(1, t - 1), t, min(N, t + 1), N])
        e = rnd.randbytes(4)
        for i in rnd.sample(range(N), c):
            if len(sets[i]) < sizes[i]:
                sets[i][e] = None
    for i, s in enumerate(sets):
        while len(s) < sizes[i]:
            s[rnd.randbytes(4)] = None
    return [list(s) for s in sets], t


@pytest.fixture
def criterion():
    """Record a one-line verdict for an acceptance criterion."""

    def record(number: int, name: str, ok: bool, detail: str = "") -> bool:
        line = f"criterion {number} [{name}]: {'PASS' if ok else 'FAIL'}"
        _criteria[number] = f"{line}  {detail}".rstrip()
        print(_criteria[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_criteria):
            terminalreporter.write_line(_criteria[n])
