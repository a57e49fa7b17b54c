import csv
import dataclasses
import json
import math
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import trapezoid

from pidtune.metrics import StepMetrics
from pidtune.pid import GainVector
from pidtune.report import (
    SUMMARY_COLUMNS,
    ExportError,
    KdeCurve,
    average_convergence,
    export,
    kde,
    read_results_json,
    results_to_json,
    settling_samples,
    silverman_bandwidth,
    summarize,
)
from pidtune.trials import DEFAULT_EECS, DEFAULT_INITIAL_STATES, TrialResult, generate_configs


def fake_result(cfg, converged, settling=2000, evals=10):
    m = StepMetrics(800, 20.0, settling if converged else None, 0.5)
    return TrialResult(cfg, converged, evals, 1.0, GainVector(10, 0.1, 0.5), m)


def synthetic_batch(converged_per_group, runs=6, optimizer="bo"):
    """One (robot, eec, init) group per entry, ``runs`` seeds each."""
    out = []
    for eec, n_ok in zip(DEFAULT_EECS, converged_per_group):
        cfgs = generate_configs([eec], DEFAULT_INITIAL_STATES[:1], [optimizer], ["ddrm"], range(runs))
        out += [fake_result(c, i < n_ok, settling=1000 + 100 * i, evals=5 + i) for i, c in enumerate(cfgs)]
    return out


def test_ninety_percent():
    rows = summarize(synthetic_batch([9], runs=10))
    assert rows[0].convergence_pct == 90.0


def test_all_converged_average():
    rows = summarize(synthetic_batch([6, 6, 6]) + synthetic_batch([6, 6, 6], optimizer="de"))
    assert len(rows) == 6
    assert average_convergence(rows) == 100.0


def test_seventy_seven_point_eight():
    rows = summarize(synthetic_batch([6, 4, 4]))
    assert average_convergence(rows, "bo") == pytest.approx(77.78, abs=0.01)


def test_best_fields_from_best_converged_run():
    rows = summarize(synthetic_batch([4]))
    assert rows[0].best_settling_ms == 1000
    assert rows[0].eval_count_at_convergence == 5
    none = summarize(synthetic_batch([0]))[0]
    assert none.best_settling_ms is None and none.convergence_pct == 0


def test_summarize_permutation_invariant():
    batch = synthetic_batch([6, 4, 1]) + synthetic_batch([3, 2, 5], optimizer="de")
    ref = summarize(batch)
    rnd = random.Random(0)
    for _ in range(10):
        rnd.shuffle(batch)
        assert summarize(batch) == ref


def test_convergence_uses_flags_not_metrics():
    # a run flagged unconverged stays unconverged even with good metrics
    cfg = generate_configs(DEFAULT_EECS[:1], DEFAULT_INITIAL_STATES[:1], ["de"], ["ddrm"], [0])[0]
    r = fake_result(cfg, True)
    r = dataclasses.replace(r, converged=False)
    assert summarize([r])[0].convergence_pct == 0.0


# --- KDE --------------------------------------------------------------------


def test_single_sample_peak():
    c = kde([0.0], bandwidth=1.0)
    assert float(np.interp(0.0, c.grid, c.density)) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-4)
    assert c.density.max() == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-4)


def test_grid_layout():
    c = kde([1.0, 2.0, 4.0], bandwidth=0.5)
    assert len(c.grid) == 512
    assert c.grid[0] == pytest.approx(1.0 - 2.0) and c.grid[-1] == pytest.approx(4.0 + 2.0)


def test_silverman_by_hand():
    x = np.array([1.0, 2.0, 3.0, 4.0, 10.0])
    sigma = np.std(x, ddof=1)
    iqr = 4.0 - 2.0
    assert silverman_bandwidth(x) == pytest.approx(0.9 * min(sigma, iqr / 1.34) * 5 ** -0.2)


def test_identical_samples_need_explicit_bandwidth():
    with pytest.raises(ValueError, match="explicit bandwidth"):
        kde([2500, 2500, 2500])
    assert kde([2500, 2500], bandwidth=100).bandwidth == 100


@given(st.lists(st.floats(0, 1e4), min_size=2, max_size=40).filter(lambda v: np.ptp(v) > 1e-3))
def test_integrates_to_one(samples):
    c = kde(samples)
    assert np.all(c.density >= 0)
    assert trapezoid(c.density, c.grid) == pytest.approx(1.0, abs=1e-2)
    assert c.mean == float(np.mean(samples))


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=10), st.floats(-50, 50))
def test_symmetric_samples_symmetric_density(half, m):
    samples = [m + d for d in half] + [m - d for d in half]
    c = kde(samples, bandwidth=3.0)
    # grid is symmetric about m by construction
    np.testing.assert_allclose(c.density, c.density[::-1], atol=1e-9)


def test_settling_samples_grouping():
    batch = synthetic_batch([6, 4, 0]) + synthetic_batch([2, 2, 2], optimizer="de")
    s = settling_samples(batch)
    assert set(s) == {("ddrm", 0), ("ddrm", 1), ("ddrm", 2)}
    assert len(s[("ddrm", 1)]["bo"]) == 4 and len(s[("ddrm", 2)]["bo"]) == 0


# --- export -----------------------------------------------------------------


def test_results_json_round_trip(tmp_path, robots):
    from pidtune.trials import run_batch

    cfgs = generate_configs(DEFAULT_EECS[:1], DEFAULT_INITIAL_STATES, ["de", "bo"], ["ddrm"], [0])
    results = run_batch(cfgs, robots)
    path = export(results, "json", tmp_path / "r.json")
    again = read_results_json(path)
    assert json.loads(results_to_json(again)) == json.loads(path.read_text())


def test_exports_are_byte_stable(tmp_path):
    batch = synthetic_batch([6, 4, 4])
    rows = summarize(batch)
    for fmt_ in ("csv", "json"):
        a = export(rows, fmt_, tmp_path / f"a.{fmt_}").read_bytes()
        b = export(rows, fmt_, tmp_path / f"b.{fmt_}").read_bytes()
        assert a == b
    a = export(batch, "json", tmp_path / "ra.json").read_bytes()
    assert a == export(batch, "json", tmp_path / "rb.json").read_bytes()


def test_summary_csv_format(tmp_path):
    path = export(summarize(synthetic_batch([6, 4, 0])), "csv", tmp_path / "s.csv")
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == SUMMARY_COLUMNS
    assert rows[2][SUMMARY_COLUMNS.index("convergence_pct")] == "66.6667"
    assert rows[3][SUMMARY_COLUMNS.index("best_settling_ms")] == ""


def test_empty_rows_header_only(tmp_path):
    path = export([], "csv", tmp_path / "s.csv")
    assert path.read_text() == ",".join(SUMMARY_COLUMNS) + "\n"


def test_curves_svg_and_csv(tmp_path):
    curves = {"bo": kde([1000, 1200, 1500]), "de": kde([1400, 1600, 2000])}
    svg = export(curves, "svg", tmp_path / "k.svg")
    text = svg.read_text()
    assert text.lstrip().startswith("<?xml") and "<svg" in text
    assert svg.read_bytes() == export(curves, "svg", tmp_path / "k2.svg").read_bytes()
    rows = list(csv.reader(open(export(curves, "csv", tmp_path / "k.csv"))))
    assert len(rows) == 1 + 2 * 512


def test_export_io_error_has_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ExportError, match=str(blocker)):
        export([], "csv", blocker / "sub" / "s.csv")


def test_export_rejects_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        export([], "xml", tmp_path / "x")
