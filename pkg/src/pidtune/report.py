"""Aggregation of trial results: summary tables, KDE curves, exports."""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from pidtune.serialize import dumps, fmt, sig
from pidtune.trials import TrialResult

log = logging.getLogger(__name__)

KDE_GRID_POINTS = 512
KDE_GRID_PAD = 4.0  # bandwidths beyond the data range
# Settling times are multiples of the 100 ms sample interval, so a series can
# easily be all-equal; such series are smoothed with one sample interval.
FALLBACK_BANDWIDTH_MS = 100.0
SUMMARY_COLUMNS = (
    "robot",
    "eec",
    "initial_state",
    "optimizer",
    "runs",
    "converged",
    "convergence_pct",
    "best_settling_ms",
    "best_rise_ms",
    "best_overshoot_pct",
    "best_sse_deg",
    "eval_count_at_convergence",
)


class ExportError(OSError):
    pass


@dataclass(frozen=True)
class SummaryRow:
    robot: str
    eec: int
    initial_state: int
    optimizer: str
    runs: int
    converged: int
    convergence_pct: float
    best_settling_ms: Optional[int] = None
    best_rise_ms: Optional[int] = None
    best_overshoot_pct: Optional[float] = None
    best_sse_deg: Optional[float] = None
    eval_count_at_convergence: Optional[int] = None

    def cells(self) -> List[str]:
        return [fmt(getattr(self, c)) for c in SUMMARY_COLUMNS]


@dataclass(frozen=True)
class KdeCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    mean: float
    n_samples: int


def summarize(results: Iterable[TrialResult]) -> List[SummaryRow]:
    """One row per (robot, eec, initial state, optimizer).

    Best-* fields come from the converged run with the lowest settling time
    (ties: fewer evaluations, then lower seed), so the output does not depend
    on input order.
    """
    groups: Dict[Tuple, List[TrialResult]] = defaultdict(list)
    for r in results:
        c = r.config
        groups[(c.robot, c.eec.id, c.initial_state.id, c.optimizer)].append(r)

    rows = []
    for key in sorted(groups):
        runs = groups[key]
        done = [r for r in runs if r.converged]
        best = None
        if done:
            best = min(
                done,
                key=lambda r: (r.best_metrics.settling_time_ms, r.eval_count, r.config.seed),
            )
        robot, eec, state, opt = key
        rows.append(
            SummaryRow(
                robot=robot,
                eec=eec,
                initial_state=state,
                optimizer=opt,
                runs=len(runs),
                converged=len(done),
                convergence_pct=100.0 * len(done) / len(runs),
                best_settling_ms=best.best_metrics.settling_time_ms if best else None,
                best_rise_ms=best.best_metrics.rise_time_ms if best else None,
                best_overshoot_pct=best.best_metrics.overshoot_pct if best else None,
                best_sse_deg=best.best_metrics.steady_state_error_deg if best else None,
                eval_count_at_convergence=best.eval_count if best else None,
            )
        )
    return rows


def average_convergence(rows: Sequence[SummaryRow], optimizer: Optional[str] = None) -> float:
    """Unweighted mean of the per-group convergence percentages."""
    pcts = [r.convergence_pct for r in rows if optimizer is None or r.optimizer == optimizer]
    if not pcts:
        raise ValueError("no summary rows to average")
    return sum(pcts) / len(pcts)


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("automatic bandwidth needs at least 2 samples")
    sigma = float(np.std(x, ddof=1))
    if sigma == 0.0:
        raise ValueError("all samples are identical; pass an explicit bandwidth")
    q75, q25 = np.percentile(x, [75, 25])
    spread = sigma
    if q75 > q25:
        spread = min(sigma, (q75 - q25) / 1.34)
    return 0.9 * spread * x.size ** (-0.2)


def kde(samples, bandwidth="auto", n_grid: int = KDE_GRID_POINTS) -> KdeCurve:
    """Gaussian KDE evaluated on a grid covering the data +/- 4 bandwidths."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("kde needs at least one sample")
    h = silverman_bandwidth(x) if bandwidth == "auto" else float(bandwidth)
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth!r}")
    grid = np.linspace(x.min() - KDE_GRID_PAD * h, x.max() + KDE_GRID_PAD * h, n_grid)
    z = (grid[:, None] - x[None, :]) / h
    density = np.exp(-0.5 * z**2).sum(axis=1) / (x.size * h * math.sqrt(2.0 * math.pi))
    return KdeCurve(grid, density, h, float(x.mean()), int(x.size))


def settling_samples(results: Iterable[TrialResult]) -> Dict[Tuple[str, int], Dict[str, List[int]]]:
    """Best settling times of converged runs, keyed by (robot, eec) then optimizer."""
    out: Dict[Tuple[str, int], Dict[str, List[int]]] = defaultdict(lambda: defaultdict(list))
    for r in results:
        c = r.config
        series = out[(c.robot, c.eec.id)][c.optimizer]
        if r.converged:
            series.append(r.best_metrics.settling_time_ms)
    return {k: {o: sorted(v) for o, v in sorted(g.items())} for k, g in sorted(out.items())}


def kde_or_fallback(samples, fallback_bandwidth: float) -> KdeCurve:
    try:
        return kde(samples)
    except ValueError:
        return kde(samples, bandwidth=fallback_bandwidth)


# --- export -------------------------------------------------------------------


def _open_for_write(path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc.strerror or exc}") from exc


def results_to_json(results: Sequence[TrialResult], include_wall_time: bool = True) -> str:
    return dumps({"results": [r.to_dict(include_wall_time) for r in results]})


def write_results_json(results, path, include_wall_time: bool = True) -> Path:
    with _open_for_write(path) as fh:
        fh.write(results_to_json(results, include_wall_time))
    return Path(path)


def read_results_json(path) -> List[TrialResult]:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or not isinstance(doc.get("results"), list):
        raise ValueError(f"{path}: expected an object with a 'results' list")
    return [TrialResult.from_dict(d) for d in doc["results"]]


def write_summary_csv(rows: Sequence[SummaryRow], path) -> Path:
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow(row.cells())
    return Path(path)


def write_summary_json(rows: Sequence[SummaryRow], path) -> Path:
    doc = []
    for r in rows:
        values = (getattr(r, c) for c in SUMMARY_COLUMNS)
        doc.append({c: sig(v) if isinstance(v, float) else v for c, v in zip(SUMMARY_COLUMNS, values)})
    with _open_for_write(path) as fh:
        fh.write(dumps({"summary": doc}))
    return Path(path)


def write_curves_csv(curves: Dict[str, KdeCurve], path) -> Path:
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("series", "x", "density", "bandwidth", "mean"))
        for name, c in curves.items():
            for x, y in zip(c.grid, c.density):
                w.writerow((name, fmt(x), fmt(y), fmt(c.bandwidth), fmt(c.mean)))
    return Path(path)


def write_curves_json(curves: Dict[str, KdeCurve], path) -> Path:
    doc = {
        name: {
            "bandwidth": sig(c.bandwidth),
            "mean": sig(c.mean),
            "n_samples": c.n_samples,
            "grid": [sig(v) for v in c.grid],
            "density": [sig(v) for v in c.density],
        }
        for name, c in curves.items()
    }
    with _open_for_write(path) as fh:
        fh.write(dumps({"curves": doc}))
    return Path(path)


def write_curves_svg(curves: Dict[str, KdeCurve], path, title: str = "") -> Path:
    from pidtune.plotting import plot_kdes

    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        plot_kdes(curves, path, title=title)
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def export(data, format: str, path, **kwargs) -> Path:
    """Write results, summary rows or KDE curves as csv, json or svg."""
    if isinstance(data, dict):
        writers = {"csv": write_curves_csv, "json": write_curves_json, "svg": write_curves_svg}
    else:
        data = list(data)
        if data and isinstance(data[0], TrialResult):
            writers = {"json": write_results_json}
        else:
            writers = {"csv": write_summary_csv, "json": write_summary_json}
    if format not in writers:
        raise ValueError(f"format {format!r} not supported for this data")
    return writers[format](data, path, **kwargs)
