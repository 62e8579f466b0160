"""Scenario configuration: dataclasses, YAML loading, presets, overrides."""

import copy
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import yaml

from .attacks import AttackSpec
from .detection import DetectorConfig, chi2_threshold_for
from .exceptions import ConfigError
from .filters import FILTERS
from .model import STATE_DIM, MachineParams, NoiseSpec, ParamFault
from .validation import check_spd, check_vector

ENV_PREFIX = "SMIBDSE_"
REQUIRED_KEYS = ("name", "dt", "horizon", "noise", "initial", "inputs")
SEED_STRIDE = 10007


@dataclass(frozen=True)
class InputSchedule:
    """Constant mechanical torque and a single step in field voltage."""

    t_m: float = 0.8
    e_fd_initial: float = 2.11
    e_fd_final: float = 2.32
    e_fd_step_time: float = 0.5

    def __post_init__(self):
        if not self.t_m >= 0:
            raise ConfigError("t_m must be >= 0")

    def at(self, t):
        e_fd = self.e_fd_initial if t < self.e_fd_step_time - 1e-9 else self.e_fd_final
        return np.array([self.t_m, e_fd])


@dataclass
class ScenarioConfig:
    """Everything needed to reproduce one scenario run or batch."""

    name: str = "custom"
    params: MachineParams = field(default_factory=MachineParams)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    filter_r_cov: Optional[np.ndarray] = None
    x0_true: np.ndarray = field(default_factory=lambda: np.array([0.4, 0.0, 0.0, 0.0]))
    x0_est: np.ndarray = field(default_factory=lambda: np.array([0.4, 0.0, 0.0, 0.0]))
    p0: np.ndarray = field(default_factory=lambda: 0.01 * np.eye(STATE_DIM))
    inputs: InputSchedule = field(default_factory=InputSchedule)
    dt: float = 0.01
    horizon: float = 5.0
    fault: Optional[ParamFault] = None
    attack: AttackSpec = field(default_factory=AttackSpec)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    alpha: float = 0.01
    filters: Tuple[str, ...] = ("ekf", "ckf", "sckf")
    monte_carlo_runs: int = 1
    rmse_interval: Optional[Tuple[float, float]] = None
    transient: float = 1.0
    joseph: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if not self.horizon > 0:
            raise ConfigError(f"horizon must be > 0, got {self.horizon}")
        if abs(self.horizon / self.dt - round(self.horizon / self.dt)) > 1e-6:
            raise ConfigError("horizon must be a whole number of steps")
        if int(self.monte_carlo_runs) < 1:
            raise ConfigError("monte_carlo_runs must be >= 1")
        self.monte_carlo_runs = int(self.monte_carlo_runs)
        self.filters = tuple(self.filters)
        unknown = [f for f in self.filters if f not in FILTERS]
        if unknown or not self.filters:
            raise ConfigError(f"filters must be a non-empty subset of {sorted(FILTERS)}, got {list(self.filters)}")
        self.x0_true = check_vector(self.x0_true, STATE_DIM, "x0_true")
        self.x0_est = check_vector(self.x0_est, STATE_DIM, "x0_est")
        self.p0 = check_spd(self.p0, STATE_DIM, "p0")
        if self.filter_r_cov is not None:
            self.filter_r_cov = check_spd(self.filter_r_cov, 1, "filter_r_cov")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def n_steps(self):
        return int(round(self.horizon / self.dt))

    @property
    def seed(self):
        return self.noise.seed

    @property
    def nominal_r_cov(self):
        """Measurement covariance the filters assume."""
        return self.noise.r_cov if self.filter_r_cov is None else self.filter_r_cov

    def with_seed(self, seed):
        new = copy.copy(self)
        new.noise = NoiseSpec(self.noise.q_cov, self.noise.r_cov, int(seed))
        return new

    def run_seed(self, i):
        """Seed of Monte-Carlo run ``i``."""
        return self.seed + i * SEED_STRIDE

    def metric_interval(self):
        """Default RMSE interval depends on what the scenario stresses."""
        if self.rmse_interval is not None:
            return tuple(self.rmse_interval)
        if self.attack.kind != "none":
            return (self.attack.t_start, min(self.attack.t_end, self.horizon))
        if self.fault is not None:
            return (self.fault.fault_time, self.horizon)
        return (0.0, self.horizon)


def _matrix(value, dim, name):
    """Scalar -> scalar * I, list -> diagonal, nested list -> matrix."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(dim)
    if arr.ndim == 1:
        if arr.shape[0] != dim:
            raise ConfigError(f"{name} diagonal must have {dim} entries")
        return np.diag(arr)
    return arr


def _take(section, key, where, default=None, required=False):
    if key in section:
        return section[key]
    if required:
        raise ConfigError(f"missing required key '{where}{key}'")
    return default


def _check_keys(section, allowed, where):
    if not isinstance(section, dict):
        raise ConfigError(f"section '{where.rstrip('.')}' must be a mapping")
    extra = sorted(set(section) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) {', '.join(where + k for k in extra)}")


_TOP_KEYS = ("name", "seed", "dt", "horizon", "machine", "noise", "initial", "inputs",
             "fault", "attack", "detector", "filters", "monte_carlo", "metrics")


def config_from_dict(raw: dict) -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from the nested mapping of a config file."""
    try:
        return _build_config(raw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from None


def _build_config(raw):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    _check_keys(raw, _TOP_KEYS, "")
    for key in REQUIRED_KEYS:
        _take(raw, key, "", required=True)

    machine = raw.get("machine") or {}
    _check_keys(machine, [f.name for f in fields(MachineParams)], "machine.")
    params = MachineParams(**{k: float(v) for k, v in machine.items()})

    noise = raw["noise"]
    _check_keys(noise, ("q_cov", "r_cov", "filter_r_cov"), "noise.")
    q_cov = _matrix(_take(noise, "q_cov", "noise.", required=True), STATE_DIM, "noise.q_cov")
    r_cov = _matrix(_take(noise, "r_cov", "noise.", required=True), 1, "noise.r_cov")
    filter_r = noise.get("filter_r_cov")
    filter_r = None if filter_r is None else _matrix(filter_r, 1, "noise.filter_r_cov")
    seed = int(raw.get("seed", 0))

    init = raw["initial"]
    _check_keys(init, ("x_true", "x_est", "p0"), "initial.")
    x_true = _take(init, "x_true", "initial.", required=True)
    x_est = _take(init, "x_est", "initial.", required=True)
    p0 = _matrix(_take(init, "p0", "initial.", required=True), STATE_DIM, "initial.p0")

    inp = raw["inputs"]
    _check_keys(inp, [f.name for f in fields(InputSchedule)], "inputs.")
    inputs = InputSchedule(**{k: float(v) for k, v in inp.items()})

    fault = None
    if raw.get("fault"):
        fs = raw["fault"]
        _check_keys(fs, ("time", "x_d_prime", "x_q_prime"), "fault.")
        xdp = float(_take(fs, "x_d_prime", "fault.", required=True))
        xqp = float(fs.get("x_q_prime", xdp))
        fault = ParamFault(float(_take(fs, "time", "fault.", required=True)),
                           params.with_reactances(xdp, xqp))

    attack = AttackSpec()
    if raw.get("attack"):
        at = raw["attack"]
        _check_keys(at, ("kind", "t_start", "t_end", "amplitude", "frequency", "delay",
                         "gain_mask", "fdi_mode", "amplitude_bound"), "attack.")
        horizon = float(raw["horizon"])
        t_end = at.get("t_end")
        attack = AttackSpec(
            kind=str(_take(at, "kind", "attack.", required=True)),
            window=(float(at.get("t_start", 0.0)),
                    horizon if t_end is None else float(t_end)),
            amplitude=float(at.get("amplitude", 0.0)),
            frequency=float(at.get("frequency", 0.0)),
            delay=float(at.get("delay", 0.0)),
            gain_mask=at.get("gain_mask"),
            fdi_mode=str(at.get("fdi_mode", "additive")),
            amplitude_bound=_float_or_inf(at.get("amplitude_bound")),
        )

    det = raw.get("detector") or {}
    _check_keys(det, ("alpha", "chi2_threshold", "euclid_threshold", "euclid_window"), "detector.")
    alpha = float(det.get("alpha", 0.01))
    chi2_thr = det.get("chi2_threshold")
    detector = DetectorConfig(
        chi2_threshold=chi2_threshold_for(1, alpha) if chi2_thr is None else float(chi2_thr),
        euclid_threshold=float(det.get("euclid_threshold", DetectorConfig.euclid_threshold)),
        euclid_window=int(det.get("euclid_window", DetectorConfig.euclid_window)),
    )

    mc = raw.get("monte_carlo") or {}
    _check_keys(mc, ("runs",), "monte_carlo.")
    metrics = raw.get("metrics") or {}
    _check_keys(metrics, ("rmse_interval", "transient", "joseph"), "metrics.")
    interval = metrics.get("rmse_interval")

    return ScenarioConfig(
        name=str(raw["name"]),
        params=params,
        noise=NoiseSpec(q_cov, r_cov, seed),
        filter_r_cov=filter_r,
        x0_true=x_true,
        x0_est=x_est,
        p0=p0,
        inputs=inputs,
        dt=float(raw["dt"]),
        horizon=float(raw["horizon"]),
        fault=fault,
        attack=attack,
        detector=detector,
        alpha=alpha,
        filters=tuple(raw.get("filters", ("ekf", "ckf", "sckf"))),
        monte_carlo_runs=int(mc.get("runs", 1)),
        rmse_interval=None if interval is None else tuple(float(v) for v in interval),
        transient=float(metrics.get("transient", 1.0)),
        joseph=bool(metrics.get("joseph", False)),
    )


def _float_or_inf(value):
    return math.inf if value is None else float(value)


def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, float) and math.isinf(value):
        return None
    return value


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Inverse of :func:`config_from_dict`; the result is YAML-serializable."""
    out = {
        "name": cfg.name,
        "seed": cfg.seed,
        "dt": cfg.dt,
        "horizon": cfg.horizon,
        "machine": asdict(cfg.params),
        "noise": {"q_cov": cfg.noise.q_cov.tolist(), "r_cov": cfg.noise.r_cov.tolist()},
        "initial": {"x_true": cfg.x0_true.tolist(), "x_est": cfg.x0_est.tolist(),
                    "p0": cfg.p0.tolist()},
        "inputs": asdict(cfg.inputs),
        "detector": {"alpha": cfg.alpha,
                     "chi2_threshold": cfg.detector.chi2_threshold,
                     "euclid_threshold": cfg.detector.euclid_threshold,
                     "euclid_window": cfg.detector.euclid_window},
        "filters": list(cfg.filters),
        "monte_carlo": {"runs": cfg.monte_carlo_runs},
        "metrics": {"transient": cfg.transient, "joseph": cfg.joseph},
    }
    if cfg.filter_r_cov is not None:
        out["noise"]["filter_r_cov"] = cfg.filter_r_cov.tolist()
    if cfg.rmse_interval is not None:
        out["metrics"]["rmse_interval"] = list(cfg.rmse_interval)
    if cfg.fault is not None:
        out["fault"] = {"time": cfg.fault.fault_time,
                        "x_d_prime": cfg.fault.faulted_params.x_d_prime,
                        "x_q_prime": cfg.fault.faulted_params.x_q_prime}
    if cfg.attack.kind != "none":
        a = cfg.attack
        out["attack"] = {"kind": a.kind, "t_start": a.t_start, "t_end": _plain(a.t_end),
                         "amplitude": a.amplitude, "frequency": a.frequency,
                         "delay": a.delay, "fdi_mode": a.fdi_mode,
                         "gain_mask": _plain(a.gain_mask),
                         "amplitude_bound": _plain(a.amplitude_bound)}
    return out


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return config_from_dict(raw)


def list_presets():
    root = resources.files("smibdse") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_preset(name) -> ScenarioConfig:
    names = list_presets()
    if name not in names:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(names)}")
    text = (resources.files("smibdse") / "presets" / f"{name}.yaml").read_text()
    return config_from_dict(yaml.safe_load(text))


def preset_dict(name) -> dict:
    if name not in list_presets():
        raise ConfigError(f"unknown preset {name!r}")
    return yaml.safe_load((resources.files("smibdse") / "presets" / f"{name}.yaml").read_text())


def env_overrides(environ=None) -> dict:
    """Flag-equivalent settings taken from ``SMIBDSE_*`` environment variables."""
    environ = os.environ if environ is None else environ
    out = {}
    for key in ("config", "preset", "out", "seed", "runs", "filters", "attack",
                "channels", "alpha", "workers"):
        value = environ.get(ENV_PREFIX + key.upper())
        if value is not None and value != "":
            out[key] = value
    return out


def apply_overrides(cfg: ScenarioConfig, seed=None, runs=None, filters=None,
                    attack=None, alpha=None) -> ScenarioConfig:
    """Return a copy of ``cfg`` with command-line style overrides applied."""
    cfg = copy.copy(cfg)
    if seed is not None:
        cfg = cfg.with_seed(int(seed))
    if runs is not None:
        cfg.monte_carlo_runs = int(runs)
        if cfg.monte_carlo_runs < 1:
            raise ConfigError("runs must be >= 1")
    if filters is not None:
        if isinstance(filters, str):
            filters = [f.strip() for f in filters.split(",") if f.strip()]
        cfg.filters = tuple(filters)
        cfg.__post_init__()
    if attack is not None:
        cfg.attack = _attack_override(cfg, attack)
    if alpha is not None:
        alpha = float(alpha)
        cfg.alpha = alpha
        cfg.detector = replace(cfg.detector, chi2_threshold=chi2_threshold_for(1, alpha))
    return cfg


def _attack_override(cfg, kind):
    """Swap in the stock attack of kind ``kind`` (taken from the presets)."""
    if kind == "none":
        return AttackSpec()
    preset = {"random": "scenario4-random", "dos": "scenario4-dos",
              "replay": "scenario4-replay", "fdi": "scenario5-fdi"}.get(kind)
    if preset is None:
        raise ConfigError(f"unknown attack kind {kind!r}")
    return load_preset(preset).attack
