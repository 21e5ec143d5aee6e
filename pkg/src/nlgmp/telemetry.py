"""Factorization counters.

Every Cholesky factorization made through :func:`nlgmp.gaussian.chol_psd`
is recorded against every active :class:`FactorizationCounter`.  Counters
nest: an outer counter also sees what inner ones record.  They are
context-local, so concurrent runs do not interfere.
"""

from __future__ import annotations

import contextlib
import contextvars
from collections import Counter

_active: contextvars.ContextVar[tuple["FactorizationCounter", ...]] = contextvars.ContextVar(
    "nlgmp_factorization_counters", default=()
)


class FactorizationCounter:
    """Counts factorizations by kind ("state", "measurement", "output", ...)."""

    def __init__(self):
        self.counts: Counter[str] = Counter()
        self.dims: list[tuple[str, int]] = []

    def add(self, kind: str, dim: int) -> None:
        self.counts[kind] += 1
        self.dims.append((kind, dim))

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def record(kind: str, dim: int) -> None:
    for counter in _active.get():
        counter.add(kind, dim)


@contextlib.contextmanager
def counting():
    """Context manager yielding a fresh counter that is active inside the block."""
    counter = FactorizationCounter()
    token = _active.set(_active.get() + (counter,))
    try:
        yield counter
    finally:
        _active.reset(token)
