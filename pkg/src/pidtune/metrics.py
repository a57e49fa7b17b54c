"""Step-response metrics and the accept/reject rule for one experiment.

Conventions:
  * rise time is the first sample at or above 90 % of the setpoint;
  * settling uses a closed +/-5 % band around the setpoint;
  * steady-state error is ``setpoint - mean(last 5 samples)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

RISE_FRACTION = 0.9
SETTLING_BAND = 0.05
SSE_WINDOW = 5
PENALTY_PER_VIOLATION_MS = 1000


@dataclass(frozen=True)
class ExperimentTrace:
    dt_ms: int
    setpoint: float
    samples: Tuple[float, ...]
    commands: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.dt_ms <= 0:
            raise ValueError("dt_ms must be positive")
        if len(self.samples) < 2:
            raise ValueError("a trace needs at least 2 samples")

    @property
    def duration_ms(self) -> int:
        return (len(self.samples) - 1) * self.dt_ms

    def times_ms(self):
        return [i * self.dt_ms for i in range(len(self.samples))]


@dataclass(frozen=True)
class StepMetrics:
    rise_time_ms: Optional[int]
    overshoot_pct: float
    settling_time_ms: Optional[int]
    steady_state_error_deg: float


@dataclass(frozen=True)
class Constraints:
    max_overshoot_pct: float = 30.0
    max_rise_time_ms: float = 1000.0

    def __post_init__(self):
        if self.max_overshoot_pct <= 0 or self.max_rise_time_ms <= 0:
            raise ValueError("constraints must be positive")


@dataclass(frozen=True)
class Evaluation:
    accepted: bool
    converged: bool
    fitness: float
    metrics: StepMetrics
    violations: int


def rise_time(trace: ExperimentTrace) -> Optional[int]:
    threshold = RISE_FRACTION * trace.setpoint
    for i, theta in enumerate(trace.samples):
        if theta >= threshold:
            return i * trace.dt_ms
    return None


def overshoot_pct(trace: ExperimentTrace) -> float:
    peak = max(trace.samples)
    return max(0.0, (peak - trace.setpoint) / trace.setpoint * 100.0)


def settling_time(trace: ExperimentTrace) -> Optional[int]:
    """Earliest time after which every sample stays inside the band."""
    lo = (1.0 - SETTLING_BAND) * trace.setpoint
    hi = (1.0 + SETTLING_BAND) * trace.setpoint
    n = len(trace.samples)
    for i in range(n - 1, -1, -1):
        if not lo <= trace.samples[i] <= hi:
            if i == n - 1:
                return None
            return (i + 1) * trace.dt_ms
    return 0


def steady_state_error(trace: ExperimentTrace) -> float:
    if len(trace.samples) < SSE_WINDOW:
        raise ValueError(
            f"steady-state error needs >= {SSE_WINDOW} samples, got {len(trace.samples)}"
        )
    tail: Sequence[float] = trace.samples[-SSE_WINDOW:]
    return trace.setpoint - math.fsum(tail) / SSE_WINDOW


def compute_metrics(trace: ExperimentTrace) -> StepMetrics:
    return StepMetrics(
        rise_time_ms=rise_time(trace),
        overshoot_pct=overshoot_pct(trace),
        settling_time_ms=settling_time(trace),
        steady_state_error_deg=steady_state_error(trace),
    )


def judge(
    metrics: StepMetrics,
    duration_ms: float,
    constraints: Constraints = Constraints(),
    objective_threshold_ms: float = 2500.0,
) -> Evaluation:
    """Apply the acceptance rule to precomputed metrics.

    Rejected points get ``duration_ms + 1000`` per violated condition so that
    every rejected point ranks below every accepted one.
    """
    violations = 0
    if metrics.overshoot_pct > constraints.max_overshoot_pct:
        violations += 1
    if metrics.rise_time_ms is None or metrics.rise_time_ms > constraints.max_rise_time_ms:
        violations += 1
    if metrics.settling_time_ms is None:
        violations += 1
    accepted = violations == 0
    if accepted:
        fitness = float(metrics.settling_time_ms)
    else:
        fitness = float(duration_ms + PENALTY_PER_VIOLATION_MS * violations)
    converged = accepted and metrics.settling_time_ms <= objective_threshold_ms
    return Evaluation(accepted, converged, fitness, metrics, violations)


def evaluate(
    trace: ExperimentTrace,
    constraints: Constraints = Constraints(),
    objective_threshold_ms: float = 2500.0,
) -> Evaluation:
    return judge(compute_metrics(trace), trace.duration_ms, constraints, objective_threshold_ms)
