"""Configurations Generator and Trials Executer.

A trial is one optimizer run (DE or BO) for one (exploration-exploitation
level, initial state, robot, seed) combination. It stops at the first
evaluation that is accepted with a settling time at or below the objective
threshold, or when the evaluation budget is spent.
"""

from __future__ import annotations

import csv
import itertools
import logging
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from pidtune.bo import BoConfig, bo_run
from pidtune.de import DeConfig, de_run
from pidtune.metrics import Constraints, Evaluation, StepMetrics, evaluate
from pidtune.pid import GainVector
from pidtune.plant import Robot, run_experiment
from pidtune.serialize import fmt, sig

log = logging.getLogger(__name__)

OPTIMIZERS = ("de", "bo")
DEFAULT_BOUNDS = ((1.0, 25.0), (0.0, 1.0), (0.0, 1.0))
LOG_COLUMNS = (
    "eval_index",
    "kp",
    "ki",
    "kd",
    "rise_time_ms",
    "overshoot_pct",
    "settling_time_ms",
    "sse_deg",
    "accepted",
    "fitness",
)


@dataclass(frozen=True)
class EecLevel:
    id: int
    label: str
    mutation_f: float
    crossover_cr: float
    xi: float

    @property
    def de_params(self) -> Tuple[float, float]:
        return (self.mutation_f, self.crossover_cr)

    @property
    def bo_params(self) -> Tuple[float]:
        return (self.xi,)


DEFAULT_EECS = (
    EecLevel(0, "balanced", 0.6, 0.6, 0.1),
    EecLevel(1, "exploration-focused", 0.8, 0.3, 0.2),
    EecLevel(2, "exploitation-focused", 0.5, 0.9, 0.01),
)


@dataclass(frozen=True)
class InitialState:
    id: int
    gains: GainVector
    label: str = ""


DEFAULT_INITIAL_STATES = (
    InitialState(1, GainVector(20.0, 0.05, 0.05), "High P, Low I, Low D"),
    InitialState(2, GainVector(20.0, 0.05, 0.9), "High P, Low I, High D"),
)


@dataclass(frozen=True)
class TrialConfig:
    optimizer: str
    eec: EecLevel
    initial_state: InitialState
    robot: str
    seed: int
    budget: int = 150
    objective_threshold_ms: float = 2500.0
    constraints: Constraints = Constraints()
    bounds: Tuple[Tuple[float, float], ...] = DEFAULT_BOUNDS

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        for lo, hi in self.bounds:
            if not lo <= hi:
                raise ValueError(f"bounds not ordered: {self.bounds}")
        if not gains_in_bounds(self.initial_state.gains, self.bounds):
            raise ValueError(
                f"initial state {self.initial_state.gains} outside bounds {self.bounds}"
            )

    @property
    def trial_id(self) -> str:
        return (
            f"{self.robot}_{self.optimizer}_eec{self.eec.id}"
            f"_init{self.initial_state.id}_seed{self.seed}"
        )

    def to_dict(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "optimizer": self.optimizer,
            "eec": asdict(self.eec),
            "initial_state": {
                "id": self.initial_state.id,
                "label": self.initial_state.label,
                "gains": list(self.initial_state.gains.as_tuple()),
            },
            "robot": self.robot,
            "seed": self.seed,
            "budget": self.budget,
            "objective_threshold_ms": self.objective_threshold_ms,
            "constraints": asdict(self.constraints),
            "bounds": [list(b) for b in self.bounds],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrialConfig":
        init = d["initial_state"]
        return cls(
            optimizer=d["optimizer"],
            eec=EecLevel(**d["eec"]),
            initial_state=InitialState(
                int(init["id"]), GainVector.from_seq(init["gains"]), init.get("label", "")
            ),
            robot=d["robot"],
            seed=int(d["seed"]),
            budget=int(d.get("budget", 150)),
            objective_threshold_ms=float(d.get("objective_threshold_ms", 2500.0)),
            constraints=Constraints(**d.get("constraints", {})),
            bounds=tuple(tuple(float(v) for v in b) for b in d.get("bounds", DEFAULT_BOUNDS)),
        )


@dataclass(frozen=True)
class EvalRecord:
    eval_index: int
    gains: GainVector
    metrics: StepMetrics
    accepted: bool
    fitness: float

    def log_row(self) -> List[str]:
        m = self.metrics
        return [
            fmt(self.eval_index),
            fmt(self.gains.kp),
            fmt(self.gains.ki),
            fmt(self.gains.kd),
            fmt(m.rise_time_ms),
            fmt(m.overshoot_pct),
            fmt(m.settling_time_ms),
            fmt(m.steady_state_error_deg),
            fmt(self.accepted),
            fmt(self.fitness),
        ]


@dataclass
class TrialResult:
    config: TrialConfig
    converged: bool
    eval_count: int
    wall_time_ms: float
    best_gains: Optional[GainVector]
    best_metrics: Optional[StepMetrics]
    history: List[EvalRecord] = field(default_factory=list)
    failed: bool = False
    error: Optional[str] = None

    def to_dict(self, include_wall_time: bool = True) -> dict:
        d = {
            "trial_id": self.config.trial_id,
            "config": self.config.to_dict(),
            "converged": self.converged,
            "failed": self.failed,
            "error": self.error,
            "eval_count": self.eval_count,
            "best_gains": _gains_dict(self.best_gains),
            "best_metrics": _metrics_dict(self.best_metrics),
            "history": [
                {
                    "eval_index": r.eval_index,
                    "gains": _gains_dict(r.gains),
                    "metrics": _metrics_dict(r.metrics),
                    "accepted": r.accepted,
                    "fitness": sig(r.fitness),
                }
                for r in self.history
            ],
        }
        if include_wall_time:
            d["wall_time_ms"] = sig(self.wall_time_ms)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrialResult":
        history = [
            EvalRecord(
                eval_index=int(h["eval_index"]),
                gains=_gains_from(h["gains"]),
                metrics=_metrics_from(h["metrics"]),
                accepted=bool(h["accepted"]),
                fitness=float(h["fitness"]),
            )
            for h in d.get("history", [])
        ]
        return cls(
            config=TrialConfig.from_dict(d["config"]),
            converged=bool(d["converged"]),
            eval_count=int(d["eval_count"]),
            wall_time_ms=float(d.get("wall_time_ms") or 0.0),
            best_gains=_gains_from(d.get("best_gains")),
            best_metrics=_metrics_from(d.get("best_metrics")),
            history=history,
            failed=bool(d.get("failed", False)),
            error=d.get("error"),
        )


def _gains_dict(g: Optional[GainVector]):
    if g is None:
        return None
    return {"kp": sig(g.kp), "ki": sig(g.ki), "kd": sig(g.kd)}


def _gains_from(d) -> Optional[GainVector]:
    if d is None:
        return None
    return GainVector(float(d["kp"]), float(d["ki"]), float(d["kd"]))


def _metrics_dict(m: Optional[StepMetrics]):
    if m is None:
        return None
    return {
        "rise_time_ms": m.rise_time_ms,
        "overshoot_pct": sig(m.overshoot_pct),
        "settling_time_ms": m.settling_time_ms,
        "steady_state_error_deg": sig(m.steady_state_error_deg),
    }


def _metrics_from(d) -> Optional[StepMetrics]:
    if d is None:
        return None
    return StepMetrics(
        rise_time_ms=d["rise_time_ms"],
        overshoot_pct=float(d["overshoot_pct"]),
        settling_time_ms=d["settling_time_ms"],
        steady_state_error_deg=float(d["steady_state_error_deg"]),
    )


def gains_in_bounds(gains: GainVector, bounds) -> bool:
    return all(lo <= g <= hi for g, (lo, hi) in zip(gains.as_tuple(), bounds))


def _unique(items: Iterable, key=lambda x: x) -> list:
    seen, out = set(), []
    for item in items:
        k = key(item)
        if k not in seen:
            seen.add(k)
            out.append(item)
    return out


def generate_configs(
    eecs: Sequence[EecLevel],
    initial_states: Sequence[InitialState],
    optimizers: Sequence[str],
    robots: Sequence[str],
    seeds: Sequence[int],
    **common,
) -> List[TrialConfig]:
    """Cartesian product, eec-major, then initial state, optimizer, robot, seed.

    Repeated entries in an input list are dropped so every config is unique.
    ``common`` is forwarded to every ``TrialConfig`` (budget, bounds, ...).
    """
    eecs = _unique(eecs, key=lambda e: e.id)
    initial_states = _unique(initial_states, key=lambda s: s.id)
    return [
        TrialConfig(optimizer=o, eec=e, initial_state=s, robot=r, seed=int(seed), **common)
        for e, s, o, r, seed in itertools.product(
            eecs, initial_states, _unique(optimizers), _unique(robots), _unique(seeds)
        )
    ]


def derived_rng(seed: int, label: str) -> np.random.Generator:
    """Independent stream per purpose; labels are fixed so streams never shift."""
    return np.random.default_rng([int(seed), zlib.crc32(label.encode())])


def execute_trial(config: TrialConfig, robots: Mapping[str, Robot]) -> TrialResult:
    """Run one trial; simulation or fitness failures produce a failed result."""
    if config.robot not in robots:
        raise KeyError(f"no plant registered for robot {config.robot!r}")
    robot = robots[config.robot]
    noise_rng = derived_rng(config.seed, "plant-noise")
    history: List[EvalRecord] = []
    last: List[Evaluation] = []

    def objective(x) -> float:
        gains = GainVector.from_seq(x)
        trace = run_experiment(
            gains, robot.plant, robot.experiment, int(noise_rng.integers(2**32))
        )
        ev = evaluate(trace, config.constraints, config.objective_threshold_ms)
        last[:] = [ev]
        history.append(EvalRecord(len(history) + 1, gains, ev.metrics, ev.accepted, ev.fitness))
        return ev.fitness

    def stop(x, fitness) -> bool:
        return last[0].converged

    x0 = config.initial_state.gains.as_tuple()
    failed, error = False, None
    t0 = time.perf_counter()
    try:
        if config.optimizer == "de":
            de_cfg = DeConfig(
                mutation_f=config.eec.mutation_f,
                crossover_cr=config.eec.crossover_cr,
                budget=max(config.budget, 15),
            )
            # budget below the population size still stops at ``config.budget``
            budget = config.budget

            def capped_stop(x, fitness):
                return stop(x, fitness) or len(history) >= budget

            de_run(objective, config.bounds, de_cfg, x0, derived_rng(config.seed, "de"), capped_stop)
        else:
            bo_cfg = BoConfig(xi=config.eec.xi, budget=config.budget)
            bo_run(objective, config.bounds, bo_cfg, x0, derived_rng(config.seed, "bo"), stop)
    except (ArithmeticError, ValueError) as exc:
        failed, error = True, f"{type(exc).__name__}: {exc}"
        log.warning("trial %s failed: %s", config.trial_id, error)
    wall_ms = (time.perf_counter() - t0) * 1000.0

    best = min(history, key=lambda r: r.fitness) if history else None
    converged = bool(history) and not failed and last[0].converged
    return TrialResult(
        config=config,
        converged=converged,
        eval_count=len(history),
        wall_time_ms=wall_ms,
        best_gains=best.gains if best else None,
        best_metrics=best.metrics if best else None,
        history=history,
        failed=failed,
        error=error,
    )


def _execute_isolated(config: TrialConfig, robots: Mapping[str, Robot]) -> TrialResult:
    try:
        return execute_trial(config, robots)
    except Exception as exc:  # one bad trial must not sink the batch
        log.warning("trial %s failed: %s", config.trial_id, exc)
        return TrialResult(
            config=config,
            converged=False,
            eval_count=0,
            wall_time_ms=0.0,
            best_gains=None,
            best_metrics=None,
            failed=True,
            error=f"{type(exc).__name__}: {exc}",
        )


def run_batch(
    configs: Sequence[TrialConfig],
    robots: Mapping[str, Robot],
    parallelism: int = 1,
) -> List[TrialResult]:
    """Run every trial; results come back in input order."""
    configs = list(configs)
    if not configs:
        return []
    if parallelism <= 1:
        return [_execute_isolated(c, robots) for c in configs]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_execute_isolated, configs, itertools.repeat(dict(robots))))


def write_trial_log(result: TrialResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for rec in result.history:
            writer.writerow(rec.log_row())
    return path
