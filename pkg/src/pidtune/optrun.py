"""Bookkeeping shared by both optimizers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

Objective = Callable[[np.ndarray], float]
StopPredicate = Callable[[np.ndarray, float], bool]


class NonFiniteFitness(ArithmeticError):
    def __init__(self, gains, fitness):
        super().__init__(f"objective returned {fitness!r} at gains {[float(g) for g in gains]}")
        self.gains = tuple(float(g) for g in gains)
        self.fitness = fitness


@dataclass(frozen=True)
class HistoryEntry:
    gains: tuple
    fitness: float


@dataclass
class OptRun:
    best_gains: np.ndarray
    best_fitness: float = math.inf
    history: List[HistoryEntry] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def eval_count(self) -> int:
        return len(self.history)

    def record(self, x, fx: float, stop: Optional[StopPredicate]) -> float:
        """Log one evaluation, update the incumbent and the early-stop flag."""
        if not math.isfinite(fx):
            raise NonFiniteFitness(x, fx)
        self.history.append(HistoryEntry(tuple(float(v) for v in x), fx))
        if fx < self.best_fitness:
            self.best_fitness = fx
            self.best_gains = np.array(x, dtype=float)
        if stop is not None and stop(x, fx):
            self.stopped_early = True
        return fx


def bounds_arrays(bounds):
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2 or np.any(b[:, 0] > b[:, 1]):
        raise ValueError(f"bounds must be a sequence of (low, high) pairs, got {bounds!r}")
    return b[:, 0], b[:, 1]


def check_inside(x, lo, hi):
    x = np.asarray(x, dtype=float)
    if np.any(x < lo) or np.any(x > hi):
        raise ValueError(f"initial state {x.tolist()} outside bounds")
    return x
