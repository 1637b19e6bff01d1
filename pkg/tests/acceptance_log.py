"""Collects one PASS/FAIL line per acceptance criterion."""

import time
from contextlib import contextmanager

LINES = []


@contextmanager
def criterion(number, title, limit_s):
    """Yield a dict; the body sets ``ok`` and ``detail``. The runtime limit is
    part of the verdict."""
    state = {"ok": False, "detail": ""}
    start = time.perf_counter()
    try:
        yield state
    finally:
        elapsed = time.perf_counter() - start
        in_time = elapsed < limit_s
        ok = state["ok"] and in_time
        line = (f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {state['detail']} "
                f"({elapsed:.1f}s, limit {limit_s}s)")
        LINES.append(line)
        print(line)
        state["passed"] = ok
