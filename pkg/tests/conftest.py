"""Shared fixtures plus a terminal summary that prints one line per
acceptance criterion."""

from __future__ import annotations

import numpy as np
import pytest

_ACCEPTANCE: dict[str, str] = {}
_NOTES: dict[str, str] = {}


@pytest.fixture
def acceptance_notes():
    """Mutable notes dict; entries show up in the acceptance summary."""
    return _NOTES


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid or "test_criterion" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        _ACCEPTANCE[name] = "PASS" if report.passed else "FAIL"
    elif report.failed:
        _ACCEPTANCE[name] = "FAIL"
    elif report.skipped:
        _ACCEPTANCE.setdefault(name, "SKIP")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        note = _NOTES.get(name)
        suffix = f"  ({note})" if note else ""
        terminalreporter.write_line(f"{name}: {_ACCEPTANCE[name]}{suffix}")


def random_unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """Random float32 unit-norm rows."""
    rows = rng.standard_normal((n, dim))
    rows /= np.sqrt((rows * rows).sum(axis=1))[:, None]
    return rows.astype(np.float32)


@pytest.fixture
def unit_rows():
    return random_unit_rows
