"""Bayesian optimization with a fixed-hyperparameter GP and Expected Improvement.

Inputs are mapped to the unit cube through the search bounds and targets are
standardized at every refit, so the kernel hyperparameters below are in those
normalized units. The acquisition is maximized by scoring a random candidate
set; there is no gradient ascent and no marginal-likelihood fitting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.spatial.distance import cdist
from scipy.special import ndtr

from pidtune.optrun import Objective, OptRun, StopPredicate, bounds_arrays, check_inside

PERTURB_SIGMA = 0.05
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class BoConfig:
    xi: float = 0.1
    budget: int = 150
    kernel_length_scale: float = 0.2
    signal_variance: float = 1.0
    jitter: float = 1e-8
    candidate_count: int = 2048

    def __post_init__(self):
        if self.xi < 0:
            raise ValueError("xi must be >= 0")
        if self.jitter <= 0:
            raise ValueError("jitter must be > 0")
        if self.candidate_count < 1:
            raise ValueError("candidate_count must be >= 1")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")


@dataclass
class GpModel:
    lo: np.ndarray
    hi: np.ndarray
    train_inputs: np.ndarray  # unit cube, duplicates collapsed
    train_targets: np.ndarray  # standardized
    y_mean: float
    y_scale: float
    cholesky_factor: np.ndarray  # lower
    alpha: np.ndarray
    length_scale: float
    signal_variance: float

    def normalize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo)

    def denormalize(self, u) -> np.ndarray:
        return self.lo + np.asarray(u, dtype=float) * (self.hi - self.lo)


def sq_exp_kernel(a: np.ndarray, b: np.ndarray, length_scale: float, signal_variance: float):
    d2 = cdist(a, b, "sqeuclidean")
    return signal_variance * np.exp(-0.5 * d2 / length_scale**2)


def _collapse_duplicates(u: np.ndarray, y: np.ndarray):
    uniq, inverse = np.unique(u, axis=0, return_inverse=True)
    if len(uniq) == len(u):
        return u, y
    inverse = inverse.reshape(-1)
    sums = np.zeros(len(uniq))
    counts = np.zeros(len(uniq))
    np.add.at(sums, inverse, y)
    np.add.at(counts, inverse, 1)
    # keep first-seen order so the fit does not depend on lexicographic sorting
    order = np.argsort([np.flatnonzero(inverse == k)[0] for k in range(len(uniq))], kind="stable")
    return uniq[order], (sums / counts)[order]


def gp_fit(inputs, targets, config: BoConfig, bounds) -> GpModel:
    lo, hi = bounds_arrays(bounds)
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).reshape(-1)
    if len(x) == 0 or len(x) != len(y):
        raise ValueError("need at least one observation with matching targets")
    u, y = _collapse_duplicates((x - lo) / (hi - lo), y)

    y_mean = float(y.mean())
    y_scale = float(y.std())
    if not y_scale > 0:
        y_scale = 1.0
    z = (y - y_mean) / y_scale

    K = sq_exp_kernel(u, u, config.kernel_length_scale, config.signal_variance)
    K[np.diag_indices_from(K)] += config.jitter
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"kernel matrix not positive definite with jitter={config.jitter}; "
            "increase the jitter"
        ) from exc
    alpha = cho_solve((L, True), z)
    return GpModel(
        lo=lo,
        hi=hi,
        train_inputs=u,
        train_targets=z,
        y_mean=y_mean,
        y_scale=y_scale,
        cholesky_factor=L,
        alpha=alpha,
        length_scale=config.kernel_length_scale,
        signal_variance=config.signal_variance,
    )


def _predict_unit(model: GpModel, u: np.ndarray):
    """Posterior mean/std in standardized units for unit-cube points ``u``."""
    ks = sq_exp_kernel(u, model.train_inputs, model.length_scale, model.signal_variance)
    mean = ks @ model.alpha
    v = solve_triangular(model.cholesky_factor, ks.T, lower=True)
    var = model.signal_variance - (v**2).sum(axis=0)
    return mean, np.sqrt(np.clip(var, 0.0, None))


def gp_predict(model: GpModel, x):
    """Posterior mean and standard deviation in fitness units.

    Accepts a single point or an (n, dim) array.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    mean, std = _predict_unit(model, np.atleast_2d(model.normalize(x)))
    mean = model.y_mean + model.y_scale * mean
    std = model.y_scale * std
    if single:
        return float(mean[0]), float(std[0])
    return mean, std


def expected_improvement(mean, std, best_fitness, xi):
    """EI for minimisation; returns a scalar for scalar inputs."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    a = best_fitness - mean - xi
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        z = np.where(std > 0, a / np.where(std > 0, std, 1.0), 0.0)
        ei = np.where(
            std > 0,
            a * ndtr(z) + std * _INV_SQRT_2PI * np.exp(-0.5 * z**2),
            np.maximum(a, 0.0),
        )
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def propose_next(model: GpModel, bounds, config: BoConfig, rng, best_fitness=None) -> np.ndarray:
    """Return the candidate with the highest EI (first one on ties).

    ``best_fitness`` is in fitness units; it defaults to the best (collapsed)
    training target.

    The candidate pool holds ``candidate_count`` points: one Gaussian
    perturbation of each training point (at most ``candidate_count - 1`` of
    them) and uniform draws for the rest.
    """
    dim = model.train_inputs.shape[1]
    n_perturb = min(len(model.train_inputs), config.candidate_count - 1)
    uniform = rng.random((config.candidate_count - n_perturb, dim))
    parents = model.train_inputs[:n_perturb]
    perturbed = np.clip(parents + rng.normal(0.0, PERTURB_SIGMA, parents.shape), 0.0, 1.0)
    pool = np.vstack([uniform, perturbed])

    # EI is scored in standardized target units so that xi keeps its meaning
    # whatever the spread of the observed fitness values.
    if best_fitness is None:
        best_z = float(model.train_targets.min())
    else:
        best_z = (best_fitness - model.y_mean) / model.y_scale
    mean, std = _predict_unit(model, pool)
    ei = expected_improvement(mean, std, best_z, config.xi)
    ei = np.atleast_1d(ei)
    return np.clip(model.denormalize(pool[int(np.argmax(ei))]), model.lo, model.hi)


def bo_run(
    objective: Objective,
    bounds: Sequence[Sequence[float]],
    config: BoConfig,
    initial_state: Sequence[float],
    seed=None,
    stop: Optional[StopPredicate] = None,
) -> OptRun:
    """First evaluation is ``initial_state``; afterwards refit, propose, evaluate."""
    lo, hi = bounds_arrays(bounds)
    x0 = check_inside(initial_state, lo, hi)
    rng = np.random.default_rng(seed)
    run = OptRun(best_gains=x0.copy())

    x = x0
    while True:
        run.record(x, float(objective(x)), stop)
        if run.stopped_early or run.eval_count >= config.budget:
            return run
        xs = np.array([h.gains for h in run.history])
        ys = np.array([h.fitness for h in run.history])
        model = gp_fit(xs, ys, config, np.c_[lo, hi])
        x = propose_next(model, np.c_[lo, hi], config, rng, best_fitness=run.best_fitness)
