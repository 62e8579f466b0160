"""Scenario runner: truth simulation, attacks, filters and detectors in lockstep."""

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .attacks import AttackInjector
from .config import ScenarioConfig
from .detection import ChiSquareDetector, EuclideanDetector, residual
from .exceptions import NumericalError
from .filters import FILTERS
from .model import STATE_DIM, SMIBPlant, apply_fault, measure, sample_noise, step_discrete

logger = logging.getLogger(__name__)

Z95 = 1.959963984540054


@dataclass
class ScenarioTrace:
    """Per-step record of one run; row ``k`` is time ``k * dt``.

    ``estimates[name]`` has shape ``(rows, 4)``; detector arrays are
    ``NaN``/``False`` at row 0, before the first measurement update.
    """

    t: np.ndarray
    x_true: np.ndarray
    y_clean: np.ndarray
    y_attacked: np.ndarray
    attack_active: np.ndarray
    estimates: Dict[str, np.ndarray] = field(default_factory=dict)
    g: Dict[str, np.ndarray] = field(default_factory=dict)
    d: Dict[str, np.ndarray] = field(default_factory=dict)
    chi2_alarm: Dict[str, np.ndarray] = field(default_factory=dict)
    euclid_alarm: Dict[str, np.ndarray] = field(default_factory=dict)
    min_cov_eig: Dict[str, float] = field(default_factory=dict)

    @property
    def filters(self):
        return tuple(self.estimates)

    def __len__(self):
        return len(self.t)

    def errors(self, name):
        return self.estimates[name] - self.x_true


@dataclass
class FilterMetrics:
    rmse: List[float]
    mean_error_norm: float
    mean_g: float
    chi2_false_alarm_rate: float
    euclid_false_alarm_rate: float
    chi2_duty_cycle: Optional[float]
    euclid_duty_cycle: Optional[float]
    chi2_latency: Optional[float]
    euclid_latency: Optional[float]
    min_cov_eig: float


@dataclass
class RunMetrics:
    seed: int
    interval: List[float]
    filters: Dict[str, FilterMetrics]

    def to_dict(self):
        return asdict(self)


def _interval_mask(t, interval):
    lo, hi = interval
    return (t >= lo - 1e-9) & (t <= hi + 1e-9)


def _first_crossing(t, alarms, start):
    hits = np.flatnonzero(alarms & (t >= start - 1e-9))
    return None if hits.size == 0 else float(t[hits[0]] - start)


def compute_metrics(trace: ScenarioTrace, cfg: ScenarioConfig) -> RunMetrics:
    """Summary numbers of one trace.

    False-alarm rates count samples after the first update and before the
    attack (the whole run when there is no attack). Duty cycles and
    latencies are measured over the attack window.
    """
    t = trace.t
    interval = cfg.metric_interval()
    in_interval = _interval_mask(t, interval)
    updated = np.arange(len(t)) > 0
    attack = cfg.attack
    if attack.kind == "none":
        quiet = updated
        window = None
    else:
        quiet = updated & (t < attack.t_start - 1e-9)
        window = updated & _interval_mask(t, (attack.t_start, attack.t_end))

    def rate(mask, values):
        return float(np.mean(values[mask])) if np.any(mask) else 0.0

    out = {}
    for name in trace.filters:
        err = trace.errors(name)[in_interval]
        g = trace.g[name]
        chi2 = trace.chi2_alarm[name]
        euc = trace.euclid_alarm[name]
        g_mask = in_interval & updated
        out[name] = FilterMetrics(
            rmse=np.sqrt(np.mean(err ** 2, axis=0)).tolist(),
            mean_error_norm=float(np.mean(np.linalg.norm(err, axis=1))),
            mean_g=float(np.mean(g[g_mask])) if np.any(g_mask) else math.nan,
            chi2_false_alarm_rate=rate(quiet, chi2),
            euclid_false_alarm_rate=rate(quiet, euc),
            chi2_duty_cycle=None if window is None else rate(window, chi2),
            euclid_duty_cycle=None if window is None else rate(window, euc),
            chi2_latency=None if window is None else _first_crossing(t, chi2, attack.t_start),
            euclid_latency=None if window is None else _first_crossing(t, euc, attack.t_start),
            min_cov_eig=trace.min_cov_eig[name],
        )
    return RunMetrics(cfg.seed, list(interval), out)


def simulate(cfg: ScenarioConfig) -> ScenarioTrace:
    """Run one seeded scenario and record everything per step."""
    n_rows = cfg.n_steps + 1
    dt = cfg.dt
    t = np.arange(n_rows) * dt
    proc_rng, meas_rng = cfg.noise.streams()
    nominal = SMIBPlant(cfg.params, dt)
    injector = AttackInjector(cfg.attack).fit()
    chi2 = ChiSquareDetector(threshold=cfg.detector.chi2_threshold).fit()

    filters, euclid = {}, {}
    for name in cfg.filters:
        kwargs = dict(plant=nominal, q_cov=cfg.noise.q_cov, r_cov=cfg.nominal_r_cov,
                      x0=cfg.x0_est, p0=cfg.p0)
        if name == "ekf":
            kwargs["joseph"] = cfg.joseph
        filters[name] = FILTERS[name](**kwargs).fit()
        euclid[name] = EuclideanDetector(window=cfg.detector.euclid_window,
                                         threshold=cfg.detector.euclid_threshold).fit()

    x_true = np.empty((n_rows, STATE_DIM))
    y_clean = np.empty(n_rows)
    y_att = np.empty(n_rows)
    active = np.zeros(n_rows, dtype=bool)
    est = {n: np.empty((n_rows, STATE_DIM)) for n in filters}
    g = {n: np.full(n_rows, np.nan) for n in filters}
    d = {n: np.full(n_rows, np.nan) for n in filters}
    min_eig = {n: math.inf for n in filters}

    x = cfg.x0_true.copy()
    for k in range(n_rows):
        tk = t[k]
        if k > 0:
            t_prev = t[k - 1]
            params = apply_fault(cfg.params, cfg.fault, t_prev)
            try:
                x = step_discrete(x, cfg.inputs.at(t_prev), params, dt) + \
                    sample_noise(cfg.noise.q_cov, proc_rng)
            except NumericalError as exc:
                raise NumericalError(f"true state: {exc}", step=k) from exc
            if not np.all(np.isfinite(x)):
                raise NumericalError("true state is not finite", step=k)
        x_true[k] = x
        y = measure(x, apply_fault(cfg.params, cfg.fault, tk)) + \
            sample_noise(cfg.noise.r_cov, meas_rng)
        record = injector.inject(tk, y)
        y_clean[k], y_att[k], active[k] = y[0], record.attacked[0], record.attack_active

        for name, filt in filters.items():
            if k > 0:
                try:
                    arts = filt.step(record.attacked, cfg.inputs.at(t[k - 1]),
                                     cfg.inputs.at(tk),
                                     gain_transform=injector.gain_transform(tk))
                except NumericalError as exc:
                    raise type(exc)(f"{name}: {exc}", step=k) from exc
                z = residual(record.attacked, arts.predicted_meas)
                g[name][k] = chi2.statistic(z, arts.innovation_cov)
                d[name][k] = euclid[name].update(z)
            est[name][k] = filt.mean_
            min_eig[name] = min(min_eig[name], float(np.linalg.eigvalsh(filt.covariance_)[0]))

    trace = ScenarioTrace(t, x_true, y_clean, y_att, active)
    for name in filters:
        trace.estimates[name] = est[name]
        trace.g[name] = g[name]
        trace.d[name] = d[name]
        with np.errstate(invalid="ignore"):
            trace.chi2_alarm[name] = g[name] > cfg.detector.chi2_threshold
            trace.euclid_alarm[name] = d[name] > cfg.detector.euclid_threshold
        trace.min_cov_eig[name] = min_eig[name]
    return trace


def run_scenario(cfg: ScenarioConfig):
    """Simulate ``cfg`` once and return ``(trace, metrics)``."""
    trace = simulate(cfg)
    return trace, compute_metrics(trace, cfg)


@dataclass
class Interval:
    mean: float
    ci_low: float
    ci_high: float
    n: int


@dataclass
class MonteCarloSummary:
    """Per-run metrics plus per-filter means with 95% normal-approximation CIs."""

    config_name: str
    seeds: List[int]
    runs: List[RunMetrics]
    aggregate: Dict[str, Dict[str, Interval]]
    detection_rate: Dict[str, Dict[str, float]]

    def to_dict(self):
        return asdict(self)

    def values(self, filter_name, metric):
        """Per-run values of a scalar metric (``None`` where undefined)."""
        return [getattr(r.filters[filter_name], metric) for r in self.runs]


def _interval(values) -> Interval:
    vals = np.asarray([v for v in values if v is not None and np.isfinite(v)], dtype=float)
    if vals.size == 0:
        return Interval(math.nan, math.nan, math.nan, 0)
    mean = float(vals.mean())
    if vals.size < 2:
        return Interval(mean, mean, mean, 1)
    half = Z95 * float(vals.std(ddof=1)) / math.sqrt(vals.size)
    return Interval(mean, mean - half, mean + half, int(vals.size))


SCALAR_METRICS = ("mean_error_norm", "mean_g", "chi2_false_alarm_rate",
                  "euclid_false_alarm_rate", "chi2_duty_cycle", "euclid_duty_cycle",
                  "chi2_latency", "euclid_latency")


def aggregate(runs: List[RunMetrics], name="custom") -> MonteCarloSummary:
    filters = list(runs[0].filters)
    agg, det = {}, {}
    for f in filters:
        per = {m: _interval([getattr(r.filters[f], m) for r in runs]) for m in SCALAR_METRICS}
        rmse = np.array([r.filters[f].rmse for r in runs])
        for i in range(rmse.shape[1]):
            per[f"rmse_x{i + 1}"] = _interval(rmse[:, i])
        agg[f] = per
        det[f] = {
            "chi2": float(np.mean([r.filters[f].chi2_latency is not None for r in runs])),
            "euclid": float(np.mean([r.filters[f].euclid_latency is not None for r in runs])),
        }
    return MonteCarloSummary(name, [r.seed for r in runs], runs, agg, det)


def _run_one(cfg):
    return compute_metrics(simulate(cfg), cfg)


def run_monte_carlo(cfg: ScenarioConfig, workers=None, keep_traces=False):
    """Run ``cfg.monte_carlo_runs`` independent seeds and aggregate.

    Run ``i`` uses seed ``cfg.seed + i * 10007``. With ``keep_traces`` the
    traces are returned as well, ``(summary, traces)``; traces are only kept
    for serial execution.
    """
    configs = [cfg.with_seed(cfg.run_seed(i)) for i in range(cfg.monte_carlo_runs)]
    workers = workers or 1
    traces = []
    if workers > 1 and len(configs) > 1 and not keep_traces:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_one, configs))
    else:
        runs = []
        for c in configs:
            trace = simulate(c)
            runs.append(compute_metrics(trace, c))
            if keep_traces:
                traces.append(trace)
    summary = aggregate(runs, cfg.name)
    return (summary, traces) if keep_traces else summary


def default_workers():
    return max(1, os.cpu_count() or 1)


@dataclass
class BoundReport:
    """Empirical boundedness check on an error sequence."""

    sup_windowed_mse: float
    windowed_mse: List[float]
    bounded: bool
    non_increasing: bool


def bound_monitor(errors, t, window=50, transient=1.0, limit=1.0, growth=10.0):
    """Windowed mean squared error of ``errors`` after ``transient`` seconds.

    The post-transient samples are cut into consecutive blocks of
    ``window`` samples and ``mean ||e||^2`` is taken per block.
    ``bounded`` means every block is finite and at most ``limit``.
    ``non_increasing`` means the error does not trend upward: the largest
    block in the final third is at most ``growth`` times the largest block
    in the first third.
    """
    errors = np.asarray(errors, dtype=float)
    if errors.ndim == 1:
        errors = errors[:, np.newaxis]
    t = np.asarray(t, dtype=float)
    sq = np.sum(errors ** 2, axis=1)[t >= transient - 1e-9]
    n_blocks = sq.size // window
    if n_blocks == 0:
        blocks = np.array([sq.mean()]) if sq.size else np.array([0.0])
    else:
        blocks = sq[:n_blocks * window].reshape(n_blocks, window).mean(axis=1)
    finite = bool(np.all(np.isfinite(blocks)))
    sup = float(np.max(blocks)) if finite else math.inf
    third = max(1, len(blocks) // 3)
    early, late = blocks[:third].max(), blocks[-third:].max()
    non_increasing = finite and bool(late <= growth * early or late == 0.0)
    return BoundReport(sup, blocks.tolist(), finite and sup <= limit, non_increasing)
