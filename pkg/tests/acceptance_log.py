"""Collects one summary line per acceptance criterion for the terminal report."""

LINES = []


def report(number: int, ok: bool, detail: str):
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    LINES.append(line)
    print(line)
    return ok
