"""Shared fixtures; collects the acceptance verdicts for the terminal summary."""

from __future__ import annotations

from collections import OrderedDict

import pytest

_VERDICTS: "OrderedDict[int, list]" = OrderedDict()


class Verdicts:
    """Records (criterion, part, passed, detail) and prints as it goes."""

    def record(self, criterion: int, passed: bool, detail: str, part: str = "") -> bool:
        _VERDICTS.setdefault(criterion, []).append((part, bool(passed), detail))
        label = f"{criterion}{' ' + part if part else ''}"
        print(f"criterion {label}: {'PASS' if passed else 'FAIL'} - {detail}")
        return bool(passed)


@pytest.fixture(scope="session")
def verdicts() -> Verdicts:
    return Verdicts()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(_VERDICTS):
        parts = _VERDICTS[criterion]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{name + ': ' if name else ''}{'pass' if good else 'FAIL'} ({text})" for name, good, text in parts)
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
