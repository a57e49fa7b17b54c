"""Simulated PID auto-tuning workbench.

Crosses initial PID gain states with exploration-exploitation levels and runs
Differential Evolution or Bayesian Optimization against simulated yaw plants
of a differential-drive and an omnidirectional robot.
"""

from pidtune.pid import GainVector, PidState, pid_step
from pidtune.plant import (
    ExperimentParams,
    PlantParams,
    PlantState,
    Robot,
    SimulationDiverged,
    default_robots,
    run_experiment,
    step,
)
from pidtune.metrics import (
    Constraints,
    Evaluation,
    ExperimentTrace,
    StepMetrics,
    compute_metrics,
    evaluate,
)

__version__ = "0.1.0"

__all__ = [
    "GainVector",
    "PidState",
    "pid_step",
    "ExperimentParams",
    "PlantParams",
    "PlantState",
    "Robot",
    "SimulationDiverged",
    "default_robots",
    "run_experiment",
    "step",
    "Constraints",
    "Evaluation",
    "ExperimentTrace",
    "StepMetrics",
    "compute_metrics",
    "evaluate",
]
