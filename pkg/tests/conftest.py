import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from popbias.dataset import InteractionLog  # noqa: E402
from synthetic import synthetic_movielens  # noqa: E402

REPO = Path(__file__).resolve().parents[1]


def movielens_dir() -> Path | None:
    "Location of the MovieLens 1M files, if present."
    candidates = [os.environ.get("POPBIAS_MOVIELENS_DIR"), REPO / "data" / "ml-1m"]
    for c in candidates:
        if c and (Path(c) / "ratings.dat").is_file() and (Path(c) / "users.dat").is_file():
            return Path(c)
    return None


def make_log(rows, rating_scale=(1.0, 5.0)) -> InteractionLog:
    "Log from ``(user, item)`` or ``(user, item, rating)`` tuples, all at iteration 0."
    rows = [r if len(r) == 3 else (*r, 3.0) for r in rows]
    u, i, r = zip(*rows)
    return InteractionLog(np.array(u), np.array(i), np.array(r, dtype=float), np.zeros(len(u), dtype=np.int64), rating_scale)


@pytest.fixture(scope="session")
def small_ml():
    "A small synthetic MovieLens-shaped log and its M/F groups."
    return synthetic_movielens(n_users=120, n_items=300, mean_profile=40, min_profile=15, seed=3)


@pytest.fixture(scope="session")
def medium_ml():
    return synthetic_movielens(n_users=300, n_items=600, seed=7)


# ---------------------------------------------------------------------------
# Acceptance criteria report

_ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    "Record the outcome line for one acceptance criterion; returns the pass flag."

    def record(name: str, passed: bool, detail: str) -> bool:
        _ACCEPTANCE[name] = (bool(passed), detail)
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda n: int(n.split()[0][1:])):
        passed, detail = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    n = sum(p for p, _ in _ACCEPTANCE.values())
    terminalreporter.write_line(f"{n}/{len(_ACCEPTANCE)} criteria passed")
