"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

from __future__ import annotations

LINES: list[str] = []


def record(tag: str, title: str, passed: bool, detail: str, elapsed: float | None = None, limit: float | None = None) -> bool:
    timing = ""
    if elapsed is not None:
        timing = f" [{elapsed:.1f} s" + (f" / limit {limit:g} s]" if limit is not None else "]")
    line = f"{'PASS' if passed else 'FAIL'} {tag:>4} {title}: {detail}{timing}"
    LINES.append(line)
    print(line)
    return passed
