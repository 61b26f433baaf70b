"""Optional record of which patient rows every fitting step consumed.

Fitting code calls :func:`record`; it is a no-op unless a recorder is
active, which lets tests check that no held-out row reaches a fit.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager

_state = threading.local()


class FitAudit:
    def __init__(self):
        self.events: list[tuple[str, frozenset]] = []

    def add(self, step: str, ids) -> None:
        self.events.append((step, frozenset(ids)))

    def ids_seen(self) -> set:
        out: set = set()
        for _, ids in self.events:
            out |= ids
        return out

    def steps(self) -> set:
        return {s for s, _ in self.events}


def record(step: str, ids) -> None:
    rec = getattr(_state, "recorder", None)
    if rec is not None and ids is not None:
        rec.add(step, ids)


@contextmanager
def audit_fits():
    """Collect fit events raised in this thread while the block runs."""
    prev = getattr(_state, "recorder", None)
    rec = FitAudit()
    _state.recorder = rec
    try:
        yield rec
    finally:
        _state.recorder = prev


def active() -> bool:
    return getattr(_state, "recorder", None) is not None
