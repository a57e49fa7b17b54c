"""Exit criteria for the workbench, one test per criterion.

Each test prints a PASS/FAIL line (collected in the terminal summary) and
checks its own wall-clock budget.
"""

import contextlib
import json
import math
import time

import numpy as np
import pytest
from scipy.integrate import trapezoid

import oracles
from conftest import ACCEPTANCE_LINES
from pidtune.bo import BoConfig, expected_improvement, gp_fit, gp_predict
from pidtune.cli import main
from pidtune.config import load_config
from pidtune.de import Population, crossover_bin, mutate_rand1
from pidtune.metrics import ExperimentTrace, StepMetrics, compute_metrics, evaluate
from pidtune.pid import GainVector
from pidtune.plant import run_experiment
from pidtune.report import average_convergence, kde, read_results_json, summarize
from pidtune.trials import (
    DEFAULT_EECS,
    DEFAULT_INITIAL_STATES,
    TrialResult,
    generate_configs,
    run_batch,
)

BOUNDS = np.array([(1.0, 25.0), (0.0, 1.0), (0.0, 1.0)])


@contextlib.contextmanager
def criterion(number, title, budget_s):
    t0 = time.perf_counter()
    try:
        yield
        elapsed = time.perf_counter() - t0
        assert elapsed < budget_s, f"took {elapsed:.1f}s, budget {budget_s}s"
    except BaseException as exc:
        ACCEPTANCE_LINES.append(f"FAIL  AC{number:<2} {title}: {exc}".splitlines()[0])
        raise
    ACCEPTANCE_LINES.append(f"PASS  AC{number:<2} {title} ({elapsed:.2f}s)")


def assert_trial_semantics(results):
    for r in results:
        assert not r.failed, r.error
        assert r.eval_count == len(r.history) <= 150
        if r.converged:
            last = r.history[-1]
            m = last.metrics
            assert last.accepted
            assert m.overshoot_pct <= 30 and m.rise_time_ms <= 1000 and m.settling_time_ms <= 2500


def test_ac01_configuration_count():
    with criterion(1, "configuration count 6 per optimizer, 24 total", 1.0):
        cfg = load_config()
        for opt in ("de", "bo"):
            for robot in ("ddrm", "omni"):
                sub = cfg.filtered(optimizers=[opt], robots=[robot]).generate()
                assert len(sub) == 6
        assert len(cfg.generate()) == 24
        pairs = {(c.eec.id, c.initial_state.id) for c in cfg.generate()}
        assert len(pairs) == 6


def test_ac02_eec_fidelity():
    with criterion(2, "EEC parameters (F, CR) and xi", 1.0):
        configs = load_config().generate()
        de = {c.eec.id: c.eec.de_params for c in configs if c.optimizer == "de"}
        bo = {c.eec.id: c.eec.xi for c in configs if c.optimizer == "bo"}
        assert de == {0: (0.6, 0.6), 1: (0.8, 0.3), 2: (0.5, 0.9)}
        assert bo == {0: 0.1, 1: 0.2, 2: 0.01}


def test_ac03_metrics_oracle():
    with criterion(3, "metrics equal brute-force scan on 200 random traces", 5.0):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = int(rng.integers(5, 120))
            base = np.where(rng.random() < 0.5, rng.uniform(-20, 140, n), 90 + rng.normal(0, 6, n))
            samples = tuple(float(v) for v in np.round(base, int(rng.integers(0, 4))))
            sp = float(rng.choice([45.0, 90.0]))
            dt = int(rng.choice([10, 100]))
            m = compute_metrics(ExperimentTrace(dt, sp, samples))
            s = list(samples)
            assert m.rise_time_ms == oracles.rise_time(s, dt, sp)
            assert m.overshoot_pct == oracles.overshoot_pct(s, sp)
            assert m.settling_time_ms == oracles.settling_time(s, dt, sp)
            assert m.steady_state_error_deg == oracles.steady_state_error(s, sp)


def test_ac04_plant_calibration():
    with criterion(4, "20x10x10 grid has accepted-converged and rejected points per robot", 60.0):
        robots = load_config().robots
        grid = [
            GainVector(kp, ki, kd)
            for kp in np.linspace(1, 25, 20)
            for ki in np.linspace(0, 1, 10)
            for kd in np.linspace(0, 1, 10)
        ]
        for name, robot in robots.items():
            converged = rejected = 0
            for g in grid:
                ev = evaluate(run_experiment(g, robot.plant, robot.experiment))
                converged += ev.accepted and ev.metrics.settling_time_ms <= 2500
                rejected += not ev.accepted
            assert converged >= 1, f"{name}: no feasible point"
            assert rejected >= 1, f"{name}: every point accepted"


def test_ac05_de_convergence():
    with criterion(5, "DE / EEC 0 converges on >= 9 of seeds 0-9 per robot and initial state", 120.0):
        cfg = load_config()
        configs = generate_configs(
            [DEFAULT_EECS[0]], cfg.initial_states, ["de"], list(cfg.robots), range(10)
        )
        results = run_batch(configs, cfg.robots)
        assert_trial_semantics(results)
        by_group = {}
        for r in results:
            key = (r.config.robot, r.config.initial_state.id)
            by_group[key] = by_group.get(key, 0) + r.converged
        assert len(by_group) == 4
        assert all(n >= 9 for n in by_group.values()), by_group


def test_ac06_bo_machinery():
    with criterion(6, "GP interpolation, EI >= 0, EI monotone in xi, EI(std=0)", 10.0):
        rng = np.random.default_rng(11)
        for n in (1, 10, 50):
            x = BOUNDS[:, 0] + rng.random((n, 3)) * (BOUNDS[:, 1] - BOUNDS[:, 0])
            y = rng.normal(size=n)
            mean, _ = gp_predict(gp_fit(x, y, BoConfig(jitter=1e-8), BOUNDS), x)
            assert np.max(np.abs(mean - y)) <= 1e-4

        m = rng.normal(0, 100, 10_000)
        s = np.abs(rng.normal(0, 50, 10_000)) * (rng.random(10_000) > 0.1)
        b = rng.normal(0, 100, 10_000)
        xi = rng.uniform(0, 1, 10_000)
        assert np.all(expected_improvement(m, s, b, xi) >= 0)

        m, s, b = rng.normal(size=1000), rng.uniform(0, 3, 1000), rng.normal(size=1000)
        x1 = rng.uniform(0, 0.5, 1000)
        x2 = x1 + rng.uniform(0, 0.5, 1000)
        assert np.all(expected_improvement(m, s, b, x2) <= expected_improvement(m, s, b, x1))

        for mean, best, xi in zip(rng.normal(size=200), rng.normal(size=200), rng.uniform(0, 1, 200)):
            assert expected_improvement(mean, 0.0, best, xi) == max(best - mean - xi, 0.0)


def test_ac07_de_operators():
    with criterion(7, "binomial crossover frequency, forced gene, degenerate mutation", 5.0):
        rng = np.random.default_rng(5)
        cr, n = 0.6, 10_000
        target, donor = np.zeros(3), np.ones(3)
        counts = np.array([crossover_bin(target, donor, cr, rng).sum() for _ in range(n)])
        assert np.all(counts >= 1)
        # one forced gene per draw; the other two are Bernoulli(cr)
        frac = (counts - 1).sum() / (2 * n)
        se = math.sqrt(cr * (1 - cr) / (2 * n))
        assert abs(frac - cr) <= 3 * se, (frac, se)

        v = np.array([12.0, 0.3, 0.4])
        pop = Population(np.tile(v, (15, 1)), np.zeros(15))
        for i in range(15):
            np.testing.assert_array_equal(mutate_rand1(pop, i, 0.8, rng, bounds=BOUNDS), v)


def _strip_wall_time(path):
    doc = json.loads(path.read_text())
    for r in doc["results"]:
        r.pop("wall_time_ms")
    return json.dumps(doc, sort_keys=True)


def _logs(directory):
    return {p.name: p.read_bytes() for p in sorted((directory / "logs").glob("*.csv"))}


def test_ac08_determinism(tmp_path, capsys):
    with criterion(8, "24-trial batch byte-identical across reruns, parallelism 1 and 4", 300.0):
        assert main(["generate", "-o", str(tmp_path)]) == 0
        matrix = str(tmp_path / "trials.json")
        runs = {}
        for label, jobs in (("a", 1), ("b", 1), ("c", 4), ("d", 4)):
            assert main(["run", matrix, "-j", str(jobs), "-o", str(tmp_path / label)]) == 0
            runs[label] = (_strip_wall_time(tmp_path / label / "results.json"), _logs(tmp_path / label))
        ref = runs["a"]
        assert len(ref[1]) == 24
        for label in "bcd":
            assert runs[label] == ref, f"run {label} differs"
        assert_trial_semantics(read_results_json(tmp_path / "a" / "results.json"))
    capsys.readouterr()


def test_ac09_reporting():
    with criterion(9, "77.78% aggregation, KDE normalisation and single-sample peak", 5.0):
        results = []
        for eec, ok in zip(DEFAULT_EECS, (6, 4, 4)):
            for i, c in enumerate(generate_configs([eec], DEFAULT_INITIAL_STATES[:1], ["bo"], ["ddrm"], range(6))):
                m = StepMetrics(700, 20.0, 2000 if i < ok else None, 0.0)
                results.append(TrialResult(c, i < ok, 10, 0.0, GainVector(10, 0, 0), m))
        assert average_convergence(summarize(results)) == pytest.approx(77.78, abs=0.01)

        rng = np.random.default_rng(3)
        for _ in range(20):
            c = kde(rng.normal(2000, 300, int(rng.integers(2, 60))))
            assert abs(trapezoid(c.density, c.grid) - 1) <= 1e-2
        peak = kde([0.0], bandwidth=1.0)
        assert abs(np.interp(0.0, peak.grid, peak.density) - 1 / math.sqrt(2 * math.pi)) <= 1e-4


def test_ac10_trial_semantics():
    with criterion(10, "converged trials meet constraints; no history above 150", 300.0):
        cfg = load_config().filtered(seeds=range(5))
        results = run_batch(cfg.generate(), cfg.robots)
        assert len(results) == 120
        assert_trial_semantics(results)
        # the budget is reachable but never exceeded
        assert max(r.eval_count for r in results) <= 150
