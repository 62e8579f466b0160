"""Fourth-order synchronous machine against an infinite bus.

State ordering is ``[delta, domega, eq_prime, ed_prime]`` and input ordering
is ``[t_m, e_fd]``. Every function here broadcasts over leading axes, so a
stack of cubature points of shape ``(m, 4)`` can be pushed through the
dynamics in one call.
"""

from dataclasses import asdict, dataclass, field, replace
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import optimize

from .exceptions import ConfigError, NumericalError
from .validation import check_positive, check_spd

STATE_NAMES = ("delta", "domega", "eq_prime", "ed_prime")
STATE_DIM = 4
MEAS_DIM = 1


class StateVector(NamedTuple):
    delta: float
    domega: float
    eq_prime: float
    ed_prime: float


class InputVector(NamedTuple):
    t_m: float
    e_fd: float


class ElectricalOutputs(NamedTuple):
    t_e: np.ndarray
    i_d: np.ndarray
    i_q: np.ndarray


@dataclass(frozen=True)
class MachineParams:
    """Per-unit machine constants.

    Defaults are the nominal values of the test machine; the transient
    reactances default to 0.375 so that a reactance fault to 0.475 starts
    from the pre-fault value.
    """

    d_damping: float = 0.05
    j_inertia: float = 10.0
    t_do_prime: float = 0.13
    t_qo_prime: float = 0.01
    x_d: float = 2.06
    x_q: float = 1.21
    x_d_prime: float = 0.375
    x_q_prime: float = 0.375
    v_t: float = 1.02
    omega_0: float = 377.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not np.isfinite(value):
                raise ConfigError(f"{name} must be finite, got {value}")
        for name in ("j_inertia", "t_do_prime", "t_qo_prime", "x_d_prime",
                     "x_q_prime", "v_t", "omega_0"):
            check_positive(getattr(self, name), name)
        if self.x_d < self.x_d_prime:
            raise ConfigError("x_d must be >= x_d_prime")
        if self.x_q < self.x_q_prime:
            raise ConfigError("x_q must be >= x_q_prime")

    def with_reactances(self, x_d_prime, x_q_prime=None):
        if x_q_prime is None:
            x_q_prime = x_d_prime
        return replace(self, x_d_prime=x_d_prime, x_q_prime=x_q_prime)


def electrical_outputs(x, p: MachineParams) -> ElectricalOutputs:
    """Air-gap torque and d/q currents for state(s) ``x``."""
    x = np.asarray(x, dtype=float)
    delta, eq = x[..., 0], x[..., 2]
    sin_d = np.sin(delta)
    t_e = (p.v_t / p.x_d_prime) * eq * sin_d + \
        0.5 * p.v_t ** 2 * (1.0 / p.x_q - 1.0 / p.x_q_prime) * np.sin(2.0 * delta)
    i_d = (eq - p.v_t * np.cos(delta)) / p.x_d_prime
    i_q = p.v_t * sin_d / p.x_q
    return ElectricalOutputs(t_e, i_d, i_q)


def measure(x, p: MachineParams):
    """Measured electrical output, shape ``x.shape[:-1] + (1,)``."""
    return electrical_outputs(x, p).t_e[..., np.newaxis]


def measurement_jacobian(x, p: MachineParams):
    """Analytic 1x4 Jacobian of :func:`measure` at a single state."""
    x = np.asarray(x, dtype=float)
    delta, eq = x[0], x[2]
    d_delta = (p.v_t / p.x_d_prime) * eq * np.cos(delta) + \
        p.v_t ** 2 * (1.0 / p.x_q - 1.0 / p.x_q_prime) * np.cos(2.0 * delta)
    d_eq = (p.v_t / p.x_d_prime) * np.sin(delta)
    return np.array([[d_delta, 0.0, d_eq, 0.0]])


def machine_derivatives(x, u, p: MachineParams):
    """Continuous-time state derivative ``dx/dt``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    t_m, e_fd = u[..., 0], u[..., 1]
    t_e, i_d, i_q = electrical_outputs(x, p)
    dx = np.empty(np.broadcast_shapes(x.shape, u.shape[:-1] + (STATE_DIM,)))
    dx[..., 0] = p.omega_0 * x[..., 1]
    dx[..., 1] = (t_m - t_e - p.d_damping * x[..., 1]) / p.j_inertia
    dx[..., 2] = (e_fd - x[..., 2] - (p.x_d - p.x_d_prime) * i_d) / p.t_do_prime
    dx[..., 3] = (-x[..., 3] - (p.x_q - p.x_q_prime) * i_q) / p.t_qo_prime
    return dx


def step_discrete(x, u, p: MachineParams, dt):
    """Advance ``x`` by one classical RK4 step of length ``dt``."""
    if not dt > 0:
        raise ConfigError(f"dt must be > 0, got {dt}")
    x = np.asarray(x, dtype=float)
    # overflow is reported below as a NumericalError
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = machine_derivatives(x, u, p)
        k2 = machine_derivatives(x + 0.5 * dt * k1, u, p)
        k3 = machine_derivatives(x + 0.5 * dt * k2, u, p)
        k4 = machine_derivatives(x + dt * k3, u, p)
        out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericalError("state became non-finite during integration")
    return out


def equilibrium(u, p: MachineParams, delta_guess=0.82):
    """Steady state for constant input ``u``.

    The speed deviation is zero at rest, the two transient voltages follow in
    closed form from the rotor angle, and the rotor angle is the root of the
    torque balance ``T_e = T_m`` nearest ``delta_guess``.
    """
    t_m, e_fd = float(u[0]), float(u[1])

    def voltages(delta):
        eq = (e_fd * p.x_d_prime + (p.x_d - p.x_d_prime) * p.v_t * np.cos(delta)) / p.x_d
        ed = -(p.x_q - p.x_q_prime) * p.v_t * np.sin(delta) / p.x_q
        return eq, ed

    def imbalance(delta):
        eq, _ = voltages(delta[0])
        return electrical_outputs([delta[0], 0.0, eq, 0.0], p).t_e - t_m

    sol = optimize.root(imbalance, [delta_guess], tol=1e-13)
    if not sol.success and abs(imbalance(sol.x)[()]) > 1e-10:
        raise NumericalError(f"equilibrium search failed: {sol.message}")
    delta = float(sol.x[0])
    eq, ed = voltages(delta)
    return np.array([delta, 0.0, eq, ed])


class PlantModel:
    """Discrete-time plant ``x_k = f(x_{k-1}, u_{k-1})``, ``y_k = h(x_k, u_k)``.

    ``f`` and ``h`` must broadcast over a leading batch axis. When no
    analytic ``jac_f`` is supplied, central differences are used.
    """

    def __init__(self, state_dim, meas_dim, f, h, jac_f=None, jac_h=None):
        if state_dim < 1 or meas_dim < 1:
            raise ConfigError("state_dim and meas_dim must be positive")
        self.state_dim = int(state_dim)
        self.meas_dim = int(meas_dim)
        self.f = f
        self.h = h
        self._jac_f = jac_f
        self._jac_h = jac_h

    def jac_f(self, x, u):
        if self._jac_f is not None:
            return np.asarray(self._jac_f(x, u), dtype=float)
        from .linalg import jacobian_fd
        return jacobian_fd(lambda z: self.f(z, u), x)

    def jac_h(self, x, u):
        if self._jac_h is not None:
            return np.asarray(self._jac_h(x, u), dtype=float)
        from .linalg import jacobian_fd
        return jacobian_fd(lambda z: self.h(z, u), x)


class SMIBPlant(PlantModel):
    """The machine model discretized with RK4 at step ``dt``."""

    def __init__(self, params: Optional[MachineParams] = None, dt=0.01):
        self.params = params if params is not None else MachineParams()
        self.dt = check_positive(dt, "dt")
        super().__init__(
            STATE_DIM, MEAS_DIM,
            f=lambda x, u: step_discrete(x, u, self.params, self.dt),
            h=lambda x, u=None: measure(x, self.params),
            jac_h=lambda x, u=None: measurement_jacobian(x, self.params),
        )

    def __repr__(self):
        return f"SMIBPlant(params={self.params!r}, dt={self.dt})"


@dataclass(frozen=True)
class ParamFault:
    """Abrupt switch of the true machine parameters at ``fault_time``."""

    fault_time: float
    faulted_params: MachineParams

    def __post_init__(self):
        check_positive(self.fault_time, "fault_time", strict=False)


def apply_fault(p: MachineParams, fault: Optional[ParamFault], t):
    if fault is None or t < fault.fault_time:
        return p
    return fault.faulted_params


@dataclass
class NoiseSpec:
    """Process/measurement noise covariances and the seed of their streams."""

    q_cov: np.ndarray = field(default_factory=lambda: 0.001 ** 2 * np.eye(STATE_DIM))
    r_cov: np.ndarray = field(default_factory=lambda: np.array([[0.01 ** 2]]))
    seed: int = 0

    def __post_init__(self):
        self.q_cov = check_spd(self.q_cov, name="q_cov", allow_zero=True)
        self.r_cov = check_spd(self.r_cov, name="r_cov", allow_zero=True)
        self.seed = int(self.seed)

    def streams(self):
        """Independent generators for process noise and measurement noise."""
        proc, meas = np.random.SeedSequence(self.seed).spawn(2)
        return np.random.default_rng(proc), np.random.default_rng(meas)


def sample_noise(cov, rng: np.random.Generator, size=None):
    """Zero-mean Gaussian draw(s) with covariance ``cov``.

    An all-zero covariance yields exact zeros; otherwise ``cov`` must be
    positive definite.
    """
    cov = check_spd(cov, name="noise covariance", allow_zero=True)
    dim = cov.shape[0]
    shape = (dim,) if size is None else (size, dim)
    std = rng.standard_normal(shape)
    if not np.any(cov):
        return np.zeros(shape)
    chol = np.linalg.cholesky(cov)
    return std @ chol.T


def make_linear_plant(a, c):
    """Plant with ``f(x) = A x`` and ``h(x) = C x``; used for consistency checks."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    f: Callable = lambda x, u=None: np.asarray(x) @ a.T
    h: Callable = lambda x, u=None: np.asarray(x) @ c.T
    return PlantModel(a.shape[0], c.shape[0], f, h,
                      jac_f=lambda x, u=None: a, jac_h=lambda x, u=None: c)
