"""Trial-matrix config (YAML) and the generated matrix file (JSON)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import yaml

from pidtune.metrics import Constraints
from pidtune.pid import GainVector
from pidtune.plant import ExperimentParams, PlantParams, Robot
from pidtune.serialize import dumps
from pidtune.trials import (
    DEFAULT_BOUNDS,
    OPTIMIZERS,
    EecLevel,
    InitialState,
    TrialConfig,
    generate_configs,
)

MATRIX_VERSION = 1


class ConfigError(ValueError):
    """Malformed config or matrix; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def default_config_path() -> Path:
    return Path(str(resources.files("pidtune") / "data" / "default_config.yaml"))


@dataclass
class WorkbenchConfig:
    robots: Dict[str, Robot]
    initial_states: List[InitialState]
    eecs: List[EecLevel]
    optimizers: List[str] = field(default_factory=lambda: list(OPTIMIZERS))
    seeds: List[int] = field(default_factory=lambda: [0])
    budget: int = 150
    objective_threshold_ms: float = 2500.0
    constraints: Constraints = Constraints()
    bounds: tuple = DEFAULT_BOUNDS

    def filtered(
        self,
        optimizers: Optional[Sequence[str]] = None,
        robots: Optional[Sequence[str]] = None,
        eecs: Optional[Sequence[int]] = None,
        initial_states: Optional[Sequence[int]] = None,
        seeds: Optional[Sequence[int]] = None,
    ) -> "WorkbenchConfig":
        """Restrict the matrix axes; ``None`` keeps an axis unchanged."""
        out = replace(self)
        if optimizers is not None:
            out.optimizers = [o for o in self.optimizers if o in set(optimizers)]
        if robots is not None:
            out.robots = {k: v for k, v in self.robots.items() if k in set(robots)}
        if eecs is not None:
            out.eecs = [e for e in self.eecs if e.id in set(eecs)]
        if initial_states is not None:
            out.initial_states = [s for s in self.initial_states if s.id in set(initial_states)]
        if seeds is not None:
            out.seeds = list(seeds)
        return out

    def generate(self) -> List[TrialConfig]:
        return generate_configs(
            self.eecs,
            self.initial_states,
            self.optimizers,
            list(self.robots),
            self.seeds,
            budget=self.budget,
            objective_threshold_ms=self.objective_threshold_ms,
            constraints=self.constraints,
            bounds=self.bounds,
        )


def _get(d: Mapping, key: str, path: str, default=...):
    if not isinstance(d, Mapping):
        raise ConfigError(path, "expected a mapping")
    if key not in d:
        if default is ...:
            raise ConfigError(f"{path}.{key}" if path else key, "missing")
        return default
    return d[key]


def _build(path: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(path, str(exc)) from exc


def robot_from_dict(name: str, d: Mapping) -> Robot:
    path = f"robots.{name}"
    plant = _build(f"{path}.plant", lambda: PlantParams(**_get(d, "plant", path)))
    exp = _build(f"{path}.experiment", lambda: ExperimentParams(**_get(d, "experiment", path, {})))
    return Robot(name, plant, exp)


def robot_to_dict(robot: Robot) -> dict:
    return {"plant": asdict(robot.plant), "experiment": asdict(robot.experiment)}


def parse_config(doc: Mapping) -> WorkbenchConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("<root>", "config must be a mapping")
    robots_doc = _get(doc, "robots", "")
    if not isinstance(robots_doc, Mapping):
        raise ConfigError("robots", "expected a mapping of robot name to parameters")
    robots = {str(k): robot_from_dict(str(k), v) for k, v in robots_doc.items()}

    states = []
    for i, s in enumerate(_get(doc, "initial_states", "") or []):
        p = f"initial_states[{i}]"
        states.append(
            _build(
                p,
                lambda: InitialState(
                    int(_get(s, "id", p)),
                    GainVector.from_seq(_get(s, "gains", p)),
                    str(s.get("label", "")),
                ),
            )
        )

    eecs = []
    for i, e in enumerate(_get(doc, "eecs", "") or []):
        p = f"eecs[{i}]"
        eecs.append(
            _build(
                p,
                lambda: EecLevel(
                    int(_get(e, "id", p)),
                    str(e.get("label", "")),
                    float(_get(e, "mutation_f", p)),
                    float(_get(e, "crossover_cr", p)),
                    float(_get(e, "xi", p)),
                ),
            )
        )

    optimizers = [str(o).lower() for o in doc.get("optimizers", OPTIMIZERS)]
    for o in optimizers:
        if o not in OPTIMIZERS:
            raise ConfigError("optimizers", f"unknown optimizer {o!r}")

    bounds_doc = doc.get("bounds")
    if bounds_doc is None:
        bounds = DEFAULT_BOUNDS
    else:
        try:
            bounds = tuple(
                (float(bounds_doc[k][0]), float(bounds_doc[k][1])) for k in ("kp", "ki", "kd")
            )
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ConfigError("bounds", f"need kp/ki/kd as [low, high] ({exc})") from exc
        if any(lo > hi for lo, hi in bounds):
            raise ConfigError("bounds", "low must not exceed high")
    for s in states:
        if not all(lo <= g <= hi for g, (lo, hi) in zip(s.gains.as_tuple(), bounds)):
            raise ConfigError(f"initial_states[id={s.id}]", "gains outside bounds")

    return WorkbenchConfig(
        robots=robots,
        initial_states=states,
        eecs=eecs,
        optimizers=optimizers,
        seeds=_build("seeds", lambda: [int(x) for x in doc.get("seeds", [0])]),
        budget=_build("budget", lambda: int(doc.get("budget", 150))),
        objective_threshold_ms=_build(
            "objective_threshold_ms", lambda: float(doc.get("objective_threshold_ms", 2500.0))
        ),
        constraints=_build("constraints", lambda: Constraints(**doc.get("constraints", {}))),
        bounds=bounds,
    )


def load_config(path=None) -> WorkbenchConfig:
    path = Path(path) if path is not None else default_config_path()
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(str(path), f"not valid YAML ({exc})") from exc
    return parse_config(doc)


def matrix_to_dict(configs: Sequence[TrialConfig], robots: Mapping[str, Robot]) -> dict:
    used = sorted({c.robot for c in configs})
    return {
        "version": MATRIX_VERSION,
        "robots": {name: robot_to_dict(robots[name]) for name in used},
        "trials": [c.to_dict() for c in configs],
    }


def write_matrix(configs, robots, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(matrix_to_dict(configs, robots)))
    return path


def read_matrix(path):
    """Return ``(configs, robots)``; every trial's robot must be defined."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"not valid JSON ({exc})") from exc
    robots = {str(k): robot_from_dict(str(k), v) for k, v in _get(doc, "robots", "").items()}
    configs = []
    for i, t in enumerate(_get(doc, "trials", "")):
        cfg = _build(f"trials[{i}]", TrialConfig.from_dict, t)
        if cfg.robot not in robots:
            raise ConfigError(f"trials[{i}].robot", f"unknown robot kind {cfg.robot!r}")
        configs.append(cfg)
    return configs, robots
