"""Shared test helpers and the acceptance result board.

Acceptance tests register one line per criterion via record_criterion;
the terminal summary prints the board so a full run always ends with a
visible PASS/FAIL line for every criterion.
"""

import numpy as np
import pytest

ACCEPTANCE_BOARD: list[str] = []


def record_criterion(tag: str, ok: bool, detail: str) -> None:
    line = f"[{tag}] {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_BOARD.append(line)
    print(line, flush=True)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_BOARD:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_BOARD:
            terminalreporter.write_line(line)


def random_two_block_matrices(rng: np.random.Generator, m: int, K: int):
    """Random assignment pair plus valid block matrices for small cases."""
    from dsbmcp import BlockMatrix, CommunityAssignment

    def assignment():
        while True:
            labels = rng.integers(1, K + 1, size=m).astype(np.int32)
            if np.unique(labels).size == K:
                return CommunityAssignment(labels, K)

    def block():
        M = rng.random((K, K))
        return BlockMatrix((M + M.T) / 2)

    return assignment(), assignment(), block(), block()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
