"""Collects one verdict line per acceptance criterion for the terminal summary."""

LINES: list[str] = []


def record(number: int, ok: bool, detail: str) -> bool:
    LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    print(LINES[-1])
    return ok
