from __future__ import annotations

import functools

import pytest

from elsrgm.features import EDGE_TRIANGLE
from elsrgm.graphspace import enumerate_iso_classes, enumerate_labeled, space_from_atlas

# filled by tests/test_acceptance.py: criterion id -> (passed, detail)
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"ACCEPTANCE {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@functools.lru_cache(maxsize=None)
def small_space(n: int):
    return enumerate_labeled(n, EDGE_TRIANGLE, workers=1)


@pytest.fixture(scope="session")
def atlas8():
    return enumerate_iso_classes(8)


@pytest.fixture(scope="session")
def space8(atlas8):
    return space_from_atlas(atlas8, EDGE_TRIANGLE)
