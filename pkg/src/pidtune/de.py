"""Differential Evolution, rand/1/bin, one objective evaluation at a time.

Every call of the objective counts against the budget, including the initial
population. A trial vector replaces its target as soon as it is evaluated
(immediate updating), so later mutations in the same generation already see it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from pidtune.optrun import Objective, OptRun, StopPredicate, bounds_arrays, check_inside


@dataclass(frozen=True)
class DeConfig:
    mutation_f: float = 0.6
    crossover_cr: float = 0.6
    pop_size: int = 15
    budget: int = 150
    tol: float = 0.0
    atol: float = 0.0

    def __post_init__(self):
        if not 0 < self.mutation_f <= 2:
            raise ValueError(f"mutation_f must be in (0, 2], got {self.mutation_f}")
        if not 0 <= self.crossover_cr <= 1:
            raise ValueError(f"crossover_cr must be in [0, 1], got {self.crossover_cr}")
        if self.pop_size < 4:
            raise ValueError("rand/1 needs pop_size >= 4")
        if self.budget < self.pop_size:
            raise ValueError("budget must be >= pop_size")


@dataclass
class Population:
    members: np.ndarray  # (pop_size, dim)
    fitnesses: np.ndarray
    eval_count: int = 0


def mutate_rand1(pop: Population, target_idx: int, f: float, rng, bounds=None) -> np.ndarray:
    """``x_r1 + f * (x_r2 - x_r3)`` with three distinct indices other than the target."""
    n = len(pop.members)
    if n < 4:
        raise ValueError(f"rand/1 mutation needs >= 4 members, got {n}")
    candidates = [i for i in range(n) if i != target_idx]
    r1, r2, r3 = rng.choice(candidates, size=3, replace=False)
    donor = pop.members[r1] + f * (pop.members[r2] - pop.members[r3])
    if bounds is not None:
        lo, hi = bounds_arrays(bounds)
        donor = np.clip(donor, lo, hi)
    return donor


def crossover_bin(target: np.ndarray, donor: np.ndarray, cr: float, rng) -> np.ndarray:
    if not 0 <= cr <= 1:
        raise ValueError(f"cr must be in [0, 1], got {cr}")
    target = np.asarray(target, dtype=float)
    dim = target.shape[0]
    j_rand = rng.integers(dim)
    take = rng.random(dim) < cr
    take[j_rand] = True
    return np.where(take, donor, target)


def de_run(
    objective: Objective,
    bounds: Sequence[Sequence[float]],
    config: DeConfig,
    initial_state: Sequence[float],
    seed=None,
    stop: Optional[StopPredicate] = None,
) -> OptRun:
    """Minimise ``objective`` within ``bounds`` starting from ``initial_state``.

    Member 0 of the population is ``initial_state``; the rest are uniform in
    the box. ``stop(x, fitness)`` is checked after every evaluation. With
    ``tol == atol == 0`` no population-spread stop is applied.
    """
    lo, hi = bounds_arrays(bounds)
    x0 = check_inside(initial_state, lo, hi)
    rng = np.random.default_rng(seed)
    dim = len(lo)
    box = np.c_[lo, hi]

    members = np.empty((config.pop_size, dim))
    members[0] = x0
    members[1:] = lo + rng.random((config.pop_size - 1, dim)) * (hi - lo)
    pop = Population(members, np.full(config.pop_size, np.inf))
    run = OptRun(best_gains=x0.copy())

    def call(x) -> float:
        pop.eval_count += 1
        return run.record(x, float(objective(x)), stop)

    for i in range(config.pop_size):
        pop.fitnesses[i] = call(pop.members[i])
        if run.stopped_early or pop.eval_count >= config.budget:
            return run

    while True:
        for i in range(config.pop_size):
            donor = mutate_rand1(pop, i, config.mutation_f, rng, bounds=box)
            trial = crossover_bin(pop.members[i], donor, config.crossover_cr, rng)
            f_trial = call(trial)
            if f_trial < pop.fitnesses[i]:
                pop.members[i] = trial
                pop.fitnesses[i] = f_trial
            if run.stopped_early or pop.eval_count >= config.budget:
                return run
        if _spread_converged(pop.fitnesses, config.tol, config.atol):
            return run


def _spread_converged(fitnesses: np.ndarray, tol: float, atol: float) -> bool:
    if tol == 0 and atol == 0:
        return False
    return float(np.std(fitnesses)) <= atol + tol * abs(float(np.mean(fitnesses)))
