import functools
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from consecdesign.design import ProblemSpec, enumerate_blocks  # noqa: E402
from consecdesign.optimizer import OptimizerConfig, optimize  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@dataclass
class TrackedRun:
    """An optimizer report plus invariants observed on every iterate."""

    report: object
    max_sum_drift: float
    max_asymmetry: float
    sweeps_seen: int
    seconds: float


@functools.lru_cache(maxsize=None)
def tracked_optimize(v: int, k: int, binary_first: bool = True) -> TrackedRun:
    spec = ProblemSpec(v, k)
    perms = {}
    for binary in (True, False):
        cat = enumerate_blocks(spec, binary_only=binary)
        perms[len(cat)] = cat.reversal
    state = {"drift": 0.0, "asym": 0.0, "n": 0}

    def watch(it, p, phi):
        state["n"] += 1
        state["drift"] = max(state["drift"], abs(p.sum() - 1.0))
        state["asym"] = max(state["asym"], float(np.abs(p - p[perms[len(p)]]).max()))

    start = time.perf_counter()
    report = optimize(spec, OptimizerConfig(binary_first=binary_first), callback=watch)
    elapsed = time.perf_counter() - start
    return TrackedRun(report, state["drift"], state["asym"], state["n"], elapsed)


@pytest.fixture(scope="session")
def optimal():
    return tracked_optimize


def record_acceptance(label: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {label}"
    if detail:
        line += f": {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
