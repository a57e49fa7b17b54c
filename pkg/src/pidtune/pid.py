"""Discrete positional PID law."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Tuple


@dataclass(frozen=True)
class GainVector:
    kp: float
    ki: float
    kd: float

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.kp, self.ki, self.kd)

    @classmethod
    def from_seq(cls, values) -> "GainVector":
        kp, ki, kd = (float(v) for v in values)
        return cls(kp, ki, kd)

    def scaled(self, a: float) -> "GainVector":
        return GainVector(a * self.kp, a * self.ki, a * self.kd)


@dataclass(frozen=True)
class PidState:
    integral_acc: float = 0.0
    prev_error: Optional[float] = None


def pid_step(state: PidState, error: float, gains: GainVector, dt: float):
    """Advance the controller by one sample.

    The integral is accumulated before it is applied, and the derivative acts
    on the error (not the measurement). The first sample has no derivative
    contribution.

    Returns:
        (command, next_state)
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    integral = state.integral_acc + error * dt
    if state.prev_error is None:
        derivative = 0.0
    else:
        derivative = (error - state.prev_error) / dt
    command = gains.kp * error + gains.ki * integral + gains.kd * derivative
    return command, replace(state, integral_acc=integral, prev_error=error)
