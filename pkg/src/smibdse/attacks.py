"""Measurement-channel attack models.

The functional forms (:func:`random_attack` and friends) map one clean
sample to one attacked sample. :class:`AttackInjector` wraps them with the
history buffer that the hold and replay attacks need.
"""

import bisect
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import ConfigError

logger = logging.getLogger(__name__)

ATTACK_KINDS = ("none", "random", "dos", "replay", "fdi")
FDI_MODES = ("additive", "replace")
_TIME_EPS = 1e-9


@dataclass(frozen=True)
class AttackSpec:
    """One attack on the measurement channel.

    ``amplitude`` is the sine amplitude for ``random`` and the injected
    value for ``fdi``. ``amplitude_bound`` caps ``|amplitude|``.
    ``gain_mask`` scales the filter gain row-wise while an FDI attack is
    active; ``None`` leaves the gain alone.
    """

    kind: str = "none"
    window: Tuple[float, float] = (0.0, math.inf)
    amplitude: float = 0.0
    frequency: float = 0.0
    delay: float = 0.0
    gain_mask: Optional[Tuple[float, ...]] = None
    fdi_mode: str = "additive"
    amplitude_bound: float = math.inf

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"attack kind must be one of {ATTACK_KINDS}, got {self.kind!r}")
        t_start, t_end = (float(v) for v in self.window)
        object.__setattr__(self, "window", (t_start, t_end))
        if not t_start <= t_end:
            raise ConfigError(f"attack window start {t_start} is after its end {t_end}")
        if self.delay < 0:
            raise ConfigError("delay must be >= 0")
        if abs(self.amplitude) > self.amplitude_bound:
            raise ConfigError(
                f"|amplitude| = {abs(self.amplitude)} exceeds bound {self.amplitude_bound}")
        if self.fdi_mode not in FDI_MODES:
            raise ConfigError(f"fdi_mode must be one of {FDI_MODES}")
        if self.gain_mask is not None:
            object.__setattr__(self, "gain_mask", tuple(float(v) for v in self.gain_mask))

    @property
    def t_start(self):
        return self.window[0]

    @property
    def t_end(self):
        return self.window[1]

    def active(self, t):
        return self.kind != "none" and \
            self.t_start - _TIME_EPS <= t <= self.t_end + _TIME_EPS


@dataclass(frozen=True)
class MeasurementRecord:
    t: float
    clean: np.ndarray
    attacked: np.ndarray
    attack_active: bool


@dataclass
class MeasurementHistory:
    """Time-ordered clean samples for lookups by time."""

    times: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def append(self, t, value):
        if self.times and t <= self.times[-1]:
            raise ValueError("history times must increase")
        self.times.append(float(t))
        self.values.append(np.array(value, dtype=float, copy=True))

    def __len__(self):
        return len(self.times)

    def at_or_before(self, t):
        """Index of the latest sample at or before ``t``, or ``None``."""
        i = bisect.bisect_right(self.times, t + _TIME_EPS) - 1
        return i if i >= 0 else None

    def before(self, t):
        """Index of the latest sample strictly before ``t``, or ``None``."""
        i = bisect.bisect_left(self.times, t - _TIME_EPS) - 1
        return i if i >= 0 else None


def random_attack(clean, t, spec: AttackSpec):
    if not spec.active(t):
        return clean
    return clean + spec.amplitude * math.sin(2.0 * math.pi * spec.frequency * t)


def dos_attack(history: MeasurementHistory, t, spec: AttackSpec):
    """Hold the last sample taken before the window for its whole duration.

    ``history`` must already contain the current sample.
    """
    current = history.values[-1]
    if not spec.active(t):
        return current
    i = history.before(spec.t_start)
    if i is None:
        raise ConfigError(
            f"DoS window starts at {spec.t_start} s, before any measurement was taken")
    return history.values[i]


def replay_attack(history: MeasurementHistory, t, spec: AttackSpec):
    """Re-send the clean sample recorded ``delay`` seconds earlier.

    Falls back to the earliest recorded sample when the history is shorter
    than the delay.
    """
    current = history.values[-1]
    if not spec.active(t):
        return current
    i = history.at_or_before(t - spec.delay)
    if i is None:
        logger.warning("replay history underrun at t=%.4f s; using earliest sample", t)
        i = 0
    return history.values[i]


def fdi_attack(clean, t, spec: AttackSpec):
    """Additive bias (default) or cancel-and-replace injection."""
    if not spec.active(t):
        return clean
    if spec.fdi_mode == "replace":
        # a = -y + eta cancels the true reading entirely
        return np.zeros_like(np.asarray(clean, dtype=float)) + spec.amplitude
    return clean + spec.amplitude


def fdi_gain_mask(gain, spec: AttackSpec):
    """Row-wise scaling ``diag(mask) @ gain`` of an ``n x p`` gain."""
    gain = np.asarray(gain, dtype=float)
    if spec.gain_mask is None:
        return gain
    mask = np.asarray(spec.gain_mask)
    if mask.shape[0] != gain.shape[0]:
        raise ConfigError(
            f"gain mask has {mask.shape[0]} entries but the gain has {gain.shape[0]} rows")
    return mask[:, np.newaxis] * gain


class AttackInjector(TransformerMixin, BaseEstimator):
    """Streaming attacker on the measurement channel.

    Call :meth:`inject` once per sample in time order, or
    :meth:`transform` on a whole sequence.

    Parameters
    ----------
    spec : AttackSpec
        Attack to apply; ``AttackSpec()`` is the no-attack identity.
    """

    def __init__(self, spec=None):
        self.spec = spec

    def fit(self, X=None, y=None):
        self.spec_ = self.spec if self.spec is not None else AttackSpec()
        self.history_ = MeasurementHistory()
        return self

    def inject(self, t, clean) -> MeasurementRecord:
        if not hasattr(self, "history_"):
            self.fit()
        spec = self.spec_
        clean = np.atleast_1d(np.asarray(clean, dtype=float))
        self.history_.append(t, clean)
        if spec.kind == "random":
            attacked = random_attack(clean, t, spec)
        elif spec.kind == "dos":
            attacked = dos_attack(self.history_, t, spec)
        elif spec.kind == "replay":
            attacked = replay_attack(self.history_, t, spec)
        elif spec.kind == "fdi":
            attacked = fdi_attack(clean, t, spec)
        else:
            attacked = clean
        return MeasurementRecord(t, clean, np.array(attacked, dtype=float), spec.active(t))

    def gain_transform(self, t):
        """Gain manipulation to hand to a filter update at time ``t``, if any."""
        spec = self.spec_ if hasattr(self, "spec_") else (self.spec or AttackSpec())
        if spec.kind != "fdi" or spec.gain_mask is None or not spec.active(t):
            return None
        return lambda gain: fdi_gain_mask(gain, spec)

    def transform(self, X, t=None):
        """Attack a clean sequence ``X`` sampled at times ``t``."""
        X = np.asarray(X, dtype=float).reshape(len(X), -1)
        if t is None:
            raise ValueError("sample times are required")
        self.fit()
        return np.array([self.inject(tk, xk).attacked for tk, xk in zip(t, X)])
