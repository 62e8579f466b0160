"""SVG line plots of a recorded trace."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .exceptions import ConfigError, IoError  # noqa: E402
from .model import STATE_NAMES  # noqa: E402

STATE_CHANNELS = ("x1", "x2", "x3", "x4")
ERROR_CHANNELS = ("e1", "e2", "e3", "e4")
CHANNELS = STATE_CHANNELS + ERROR_CHANNELS + ("y", "g", "d")


def parse_channels(spec):
    """Comma-separated channel list; empty means every state channel."""
    if spec is None:
        return list(STATE_CHANNELS)
    items = [c.strip() for c in spec.split(",")] if isinstance(spec, str) else list(spec)
    items = [c for c in items if c]
    if not items:
        return list(STATE_CHANNELS)
    bad = [c for c in items if c not in CHANNELS]
    if bad:
        raise ConfigError(f"unknown channel(s) {', '.join(bad)}; valid channels: {', '.join(CHANNELS)}")
    return items


def plot_trace(trace, path, channels=None, chi2_threshold=None, euclid_threshold=None):
    """Draw one panel per channel and save as SVG.

    State panels overlay truth and each filter's estimate, error panels show
    estimate minus truth, ``y`` shows clean vs delivered measurement, and the
    ``g``/``d`` panels draw the detector statistic with its threshold.
    """
    channels = parse_channels(channels)
    fig, axes = plt.subplots(len(channels), 1, sharex=True, squeeze=False,
                             figsize=(8, 2.2 * len(channels)))
    t = trace.t
    for ax, ch in zip(axes[:, 0], channels):
        if ch in STATE_CHANNELS:
            i = STATE_CHANNELS.index(ch)
            ax.plot(t, trace.x_true[:, i], "k", lw=1.5, label="true")
            for name in trace.filters:
                ax.plot(t, trace.estimates[name][:, i], lw=1, label=name)
            ax.set_ylabel(STATE_NAMES[i])
        elif ch in ERROR_CHANNELS:
            i = ERROR_CHANNELS.index(ch)
            for name in trace.filters:
                ax.plot(t, trace.errors(name)[:, i], lw=1, label=name)
            ax.set_ylabel(f"error {STATE_NAMES[i]}")
        elif ch == "y":
            ax.plot(t, trace.y_clean, "k", lw=1, label="clean")
            ax.plot(t, trace.y_attacked, lw=1, label="delivered")
            ax.set_ylabel("T_e")
        else:
            stats = trace.g if ch == "g" else trace.d
            thr = chi2_threshold if ch == "g" else euclid_threshold
            for name in trace.filters:
                ax.plot(t, stats[name], lw=1, label=name)
            if thr is not None:
                ax.axhline(thr, color="r", ls="--", lw=1, label="threshold")
            if ch == "g" and np.nanmax(np.concatenate([*trace.g.values(), [1.0]])) > 100:
                ax.set_yscale("log")
            ax.set_ylabel(ch)
        ax.legend(loc="upper right", fontsize="small")
        ax.grid(alpha=0.3)
    axes[-1, 0].set_xlabel("t [s]")
    fig.tight_layout()
    try:
        fig.savefig(path, format="svg")
    except OSError as exc:
        raise IoError(f"cannot write plot {path}: {exc}") from None
    finally:
        plt.close(fig)
    return path
