"""Replicate runner with one RNG stream per replicate."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

from .distributions import SeededRng
from .errors import DomainError

T = TypeVar("T")


def as_seeded(rng) -> SeededRng:
    if isinstance(rng, SeededRng):
        return rng
    if isinstance(rng, int):
        return SeededRng(rng)
    raise DomainError("studies need a SeededRng or an integer seed so replicates get their own streams")


def run_replicates(fn: Callable[[int, SeededRng], T], reps: int, rng, threads: int = 1) -> list[T]:
    """Evaluate ``fn(i, rng.child(i))`` for ``i < reps``; results keep index order."""
    base = as_seeded(rng)
    if threads < 1:
        raise DomainError("threads must be at least 1")
    streams = [base.child(i) for i in range(reps)]
    if threads == 1 or reps < 2:
        return [fn(i, s) for i, s in enumerate(streams)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(reps), streams))
