"""Collects one verdict line per acceptance criterion for the terminal summary."""

LINES: dict[str, str] = {}


def record(key: str, passed: bool | None, detail: str) -> str:
    verdict = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
    line = f"[{verdict}] criterion {key}: {detail}"
    LINES[key] = line
    return line
