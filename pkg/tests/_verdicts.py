"""Shared store of acceptance verdicts, printed at the end of the session."""

VERDICTS: dict[int, tuple[str, bool, str]] = {}


def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
    VERDICTS[number] = (title, bool(passed), detail)
    print(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} {detail}".rstrip())
    return bool(passed)
