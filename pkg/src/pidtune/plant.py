"""Yaw dynamics of the two robot archetypes under a torque command.

Both robots share a linear second-order model (rotational inertia plus viscous
damping) with a saturated command, integrated by explicit Euler at the sample
interval. Only the constants and the experiment horizon differ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from pidtune.metrics import ExperimentTrace
from pidtune.pid import GainVector, PidState, pid_step


class SimulationDiverged(ArithmeticError):
    """Raised when the plant state stops being finite."""


@dataclass(frozen=True)
class PlantParams:
    inertia: float
    damping: float
    command_limit: float
    noise_std: float = 0.0

    def __post_init__(self):
        if not self.inertia > 0:
            raise ValueError(f"inertia must be > 0, got {self.inertia}")
        if not self.command_limit > 0:
            raise ValueError(f"command_limit must be > 0, got {self.command_limit}")
        if not self.damping >= 0:
            raise ValueError(f"damping must be >= 0, got {self.damping}")
        if not self.noise_std >= 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")


@dataclass(frozen=True)
class PlantState:
    theta: float = 0.0  # deg
    omega: float = 0.0  # deg/s


@dataclass(frozen=True)
class ExperimentParams:
    setpoint: float = 90.0
    duration_ms: int = 5000
    dt_ms: int = 100
    abort_angle: float = 120.0

    def __post_init__(self):
        if self.dt_ms <= 0 or self.duration_ms <= 0:
            raise ValueError("duration_ms and dt_ms must be positive")
        if self.duration_ms % self.dt_ms:
            raise ValueError(
                f"duration_ms={self.duration_ms} is not a multiple of dt_ms={self.dt_ms}"
            )
        if not 0 < self.setpoint < self.abort_angle:
            raise ValueError("need 0 < setpoint < abort_angle")

    @property
    def n_samples(self) -> int:
        return self.duration_ms // self.dt_ms + 1


@dataclass(frozen=True)
class Robot:
    name: str
    plant: PlantParams
    experiment: ExperimentParams = field(default_factory=ExperimentParams)


def default_robots() -> Dict[str, Robot]:
    return {
        "ddrm": Robot(
            "ddrm",
            PlantParams(inertia=1.0, damping=2.0, command_limit=600.0),
            ExperimentParams(duration_ms=5000),
        ),
        "omni": Robot(
            "omni",
            PlantParams(inertia=2.0, damping=4.0, command_limit=1000.0),
            ExperimentParams(duration_ms=10000),
        ),
    }


def step(state: PlantState, command: float, params: PlantParams, dt: float) -> PlantState:
    """One explicit-Euler step with the command clamped to the actuator limit."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not (math.isfinite(state.theta) and math.isfinite(state.omega)):
        raise SimulationDiverged(f"non-finite plant state {state}")
    if math.isnan(command):
        raise ValueError("command is NaN")
    u = min(max(command, -params.command_limit), params.command_limit)
    omega = state.omega + dt * (u - params.damping * state.omega) / params.inertia
    theta = state.theta + dt * state.omega
    if not (math.isfinite(theta) and math.isfinite(omega)):
        raise SimulationDiverged(f"plant state diverged to theta={theta}, omega={omega}")
    return PlantState(theta, omega)


def run_experiment(
    gains: GainVector,
    plant: PlantParams,
    exp: ExperimentParams,
    rng_seed: Optional[int] = 0,
) -> ExperimentTrace:
    """Simulate one in-place rotation from rest towards ``exp.setpoint``.

    The run always covers the full horizon; angles past ``abort_angle`` are
    left for the metrics to judge.
    """
    dt = exp.dt_ms / 1000.0
    n = exp.n_samples
    noise = None
    if plant.noise_std > 0:
        noise = np.random.default_rng(rng_seed).normal(0.0, plant.noise_std, size=n - 1)

    state = PlantState()
    pid = PidState()
    samples = [state.theta]
    commands = []
    for k in range(n - 1):
        measured = state.theta if noise is None else state.theta + float(noise[k])
        command, pid = pid_step(pid, exp.setpoint - measured, gains, dt)
        if not math.isfinite(command):
            raise SimulationDiverged(f"non-finite PID command at tick {k}")
        commands.append(min(max(command, -plant.command_limit), plant.command_limit))
        state = step(state, command, plant, dt)
        samples.append(state.theta)
    return ExperimentTrace(
        dt_ms=exp.dt_ms,
        setpoint=exp.setpoint,
        samples=tuple(samples),
        commands=tuple(commands),
    )
