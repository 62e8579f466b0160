"""End-to-end acceptance checks.

Each test prints one ``PASS``/``FAIL`` line and asserts the same condition.
Monte-Carlo checks drive ``smibdse run`` once per seed and read the
resulting trace CSV and metrics file back, so they test exactly what a user
gets on disk. Batches are shared between tests; the whole module takes
several minutes on one core. Deselect with ``-m "not acceptance"``.
"""

import itertools
import time

import numpy as np
import pytest

from smibdse.config import load_preset
from smibdse.filters import FILTERS
from smibdse.filters._core import cubature_points
from smibdse.cli import main
from smibdse.harness import bound_monitor
from smibdse.io import read_json, read_trace
from smibdse.model import SMIBPlant, make_linear_plant

from conftest import closed_form_kf, random_linear_system

pytestmark = pytest.mark.acceptance

RUNS = 50
ATTACKS = ("random", "dos", "replay")
BOUNDED_PRESETS = ("scenario1", "scenario2", "scenario3", "scenario4-random",
                   "scenario4-dos", "scenario4-replay", "scenario4-fdi")
SHARED_BATCHES = {"scenario1", "scenario3"} | {f"scenario4-{k}" for k in ATTACKS}


def report(title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {title}: {detail}"
    print("\n" + line)
    assert ok, line


class Batch:
    """Per-seed traces and metrics, read back from the files ``run`` writes."""

    def __init__(self, traces, metrics, seconds):
        self.traces = traces
        self.metrics = metrics
        self.seconds = seconds

    def values(self, name, key):
        return [m["filters"][name][key] for m in self.metrics]


@pytest.fixture(scope="module")
def batch(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    cache = {}

    def _batch(preset, filters=None):
        key = (preset, filters)
        if key not in cache:
            base = load_preset(preset)
            traces, metrics = [], []
            start = time.perf_counter()
            for i in range(RUNS):
                out = root / preset / (filters or "all") / f"run{i:02d}"
                argv = ["run", "--preset", preset, "--out", str(out),
                        "--seed", str(base.run_seed(i))]
                if filters:
                    argv += ["--filters", filters]
                assert main(argv) == 0
                traces.append(read_trace(out / "trace.csv"))
                metrics.append(read_json(out / "metrics.json"))
            cache[key] = Batch(traces, metrics, time.perf_counter() - start)
        return cache[key]

    return _batch


def test_linear_gaussian_equivalence():
    start = time.perf_counter()
    worst_mean = worst_cov = 0.0
    for seed in range(20):
        a, c, q, r, ys = random_linear_system(seed, steps=100)
        x0, p0 = np.zeros(4), np.eye(4)
        ref_m, ref_p = closed_form_kf(a, c, q, r, x0, p0, ys)
        for cls in FILTERS.values():
            filt = cls(plant=make_linear_plant(a, c), q_cov=q, r_cov=r, x0=x0, p0=p0).fit(ys)
            worst_mean = max(worst_mean, np.abs(filt.means_ - ref_m).max())
            worst_cov = max(worst_cov, np.abs(filt.covariances_ - ref_p).max())
    elapsed = time.perf_counter() - start
    ok = worst_mean <= 1e-8 and worst_cov <= 1e-8 and elapsed < 5.0
    report("linear-Gaussian equivalence with the closed-form Kalman filter", ok,
           f"max mean dev {worst_mean:.2e}, max cov dev {worst_cov:.2e} (tol 1e-8), "
           f"{elapsed:.2f} s (limit 5 s)")


def test_cubature_rule_exactness():
    worst = 0.0
    for n in range(1, 7):
        cs = cubature_points(n)
        for degree in range(4):
            for idx in itertools.combinations_with_replacement(range(n), degree):
                rule = cs.weight * np.sum(np.prod(cs.points[:, list(idx)], axis=1))
                # standard normal moments: only x_i^2 has a non-zero value up to degree 3
                exact = 1.0 if degree == 0 or (degree == 2 and idx[0] == idx[1]) else 0.0
                worst = max(worst, abs(rule - exact))
    report("cubature rule exact for Gaussian monomials of degree <= 3, n = 1..6",
           worst <= 1e-10, f"max error {worst:.2e} (tol 1e-10)")


def test_square_root_matches_cubature_filter(tmp_path):
    cfg = load_preset("scenario1")
    assert main(["run", "--preset", "scenario1", "--filters", "ekf", "--out", str(tmp_path)]) == 0
    trace = read_trace(tmp_path / "trace.csv")
    u = np.array([cfg.inputs.at(t) for t in trace.t])
    kw = dict(plant=SMIBPlant(cfg.params, cfg.dt), q_cov=cfg.noise.q_cov,
              r_cov=cfg.nominal_r_cov, x0=cfg.x0_est, p0=cfg.p0)
    ckf = FILTERS["ckf"](**kw).fit(trace.y_attacked, u)
    sckf = FILTERS["sckf"](**kw).fit(trace.y_attacked, u)
    steps = len(trace) - 1
    dm = np.abs(ckf.means_ - sckf.means_).max()
    dp = np.abs(ckf.covariances_ - sckf.covariances_).max()
    report("square-root and plain cubature filters agree", steps >= 500 and dm <= 1e-8 and dp <= 1e-7,
           f"{steps} steps, max mean dev {dm:.2e} (tol 1e-8), max cov dev {dp:.2e} (tol 1e-7)")


def test_nominal_convergence(batch):
    b = batch("scenario1")
    worst, passing, spd = {}, {}, True
    for name in ("ekf", "ckf", "sckf"):
        rmse = []
        for tr, m in zip(b.traces, b.metrics):
            late = tr.t > 1.0 + 1e-9
            rmse.append(np.sqrt(np.mean(tr.errors(name)[late, 0] ** 2)))
            spd &= m["filters"][name]["min_cov_eig"] > 0
        worst[name] = max(rmse)
        passing[name] = sum(r < 0.05 for r in rmse)
    ok = all(v == RUNS for v in passing.values()) and spd
    detail = ", ".join(f"{n} {passing[n]}/{RUNS} seeds (worst {worst[n]:.3f} rad)" for n in worst)
    report("rotor-angle RMSE after 1 s below 0.05 rad in every seed, covariances SPD", ok,
           f"{detail}; SPD {'held' if spd else 'violated'}")


def test_reactance_fault_ordering(batch):
    b = batch("scenario3")
    seconds = b.seconds
    med = {n: float(np.median(b.values(n, "mean_error_norm"))) for n in ("ekf", "ckf", "sckf")}
    ok = med["ckf"] < med["ekf"] and med["sckf"] < med["ekf"] and seconds < 120
    report("after the reactance fault, cubature filters track better than the EKF", ok,
           f"median mean ||e|| on [2.5, 5] s: ekf {med['ekf']:.5f}, ckf {med['ckf']:.5f}, "
           f"sckf {med['sckf']:.5f}; batch {seconds:.0f} s (limit 120 s)")


def test_attack_detection(batch):
    parts, ok = [], True
    for kind in ATTACKS:
        summary = batch(f"scenario4-{kind}")
        for name in ("ckf", "sckf"):
            lat = summary.values(name, "chi2_latency")
            frac = np.mean([v is not None and v <= 0.5 + 1e-9 for v in lat])
            ok &= frac >= 0.9
            parts.append(f"{kind}/{name} detected within 0.5 s in {frac:.0%}")
        duty_ekf = float(np.median(summary.values("ekf", "chi2_duty_cycle")))
        duty_ckf = float(np.median(summary.values("ckf", "chi2_duty_cycle")))
        ok &= duty_ekf < duty_ckf
        parts.append(f"{kind} median duty ekf {duty_ekf:.3f} vs ckf {duty_ckf:.3f}")
    report("chi-square detects random, DoS and replay attacks (>= 90% within 0.5 s; "
           "EKF duty < CKF duty)", ok, "; ".join(parts))


def test_fdi_evades_chi_square_but_not_euclidean(batch):
    summary = batch("scenario5-fdi", "ckf")
    chi2 = float(np.median(summary.values("ckf", "chi2_duty_cycle")))
    euc = float(np.median(summary.values("ckf", "euclid_duty_cycle")))
    report("FDI with CKF: chi-square duty < 10%, Euclidean duty > 50% (medians)",
           chi2 < 0.10 and euc > 0.50,
           f"chi-square {chi2:.3f}, Euclidean {euc:.3f}")


def test_detector_calibration_on_clean_runs(batch):
    traces = batch("scenario1").traces
    parts, ok = [], True
    for name in ("ekf", "ckf", "sckf"):
        alarms = np.concatenate([tr.chi2_alarm[name][1:] for tr in traces])
        g_mean = float(np.mean([np.mean(tr.g[name][1:]) for tr in traces]))
        rate = float(alarms.mean())
        ok &= 0.0 <= rate <= 0.05 and 0.7 <= g_mean <= 1.4
        parts.append(f"{name} false alarms {rate:.4f}, mean g {g_mean:.3f}")
    report("attack-free false-alarm rate in [0, 0.05] and mean g in [0.7, 1.4]", ok,
           "; ".join(parts))


def test_cubature_error_stays_bounded(batch):
    parts, ok = [], True
    for preset in BOUNDED_PRESETS:
        # reuse the all-filter batches of other checks; filters run independently
        traces = batch(preset, None if preset in SHARED_BATCHES else "ckf").traces
        reports = [bound_monitor(tr.errors("ckf"), tr.t) for tr in traces]
        good = sum(r.bounded and r.non_increasing for r in reports)
        ok &= good == len(reports)
        parts.append(f"{preset} {good}/{len(reports)}")
    report("CKF windowed MSE bounded and not growing after 1 s in every run", ok,
           ", ".join(parts))


def test_trace_export_is_deterministic(tmp_path):
    for preset in ("scenario1", "scenario4-replay", "scenario5-fdi"):
        a, b = tmp_path / f"{preset}-a", tmp_path / f"{preset}-b"
        for out in (a, b):
            assert main(["run", "--preset", preset, "--seed", "123", "--out", str(out)]) == 0
        if (a / "trace.csv").read_bytes() != (b / "trace.csv").read_bytes():
            report("repeated runs give byte-identical trace CSVs", False, f"{preset} differs")
    report("repeated runs give byte-identical trace CSVs", True, "3 presets, seed 123")
