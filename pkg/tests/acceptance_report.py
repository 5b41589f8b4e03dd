"""Collects one verdict per acceptance criterion for the end-of-run summary."""

from __future__ import annotations

VERDICTS: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    VERDICTS[criterion] = (ok, detail)


def summary_lines() -> list[str]:
    return [
        f"criterion {c:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        for c, (ok, detail) in sorted(VERDICTS.items())
    ]
