"""Circular (mod 2*pi) arithmetic and the few statistics the estimators need.

All angles are radians. Functions accept scalars or numpy arrays and return
the same kind of object back.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise ValueError(f"phase must be finite, got {x!r}")


def _as_output(x):
    # 0-d arrays back to plain floats so scalar callers get scalars
    if isinstance(x, np.ndarray) and x.ndim == 0:
        return float(x)
    return x


def wrap_2pi(x):
    """Wrap an angle into [0, 2*pi)."""
    _check_finite(x)
    out = np.mod(x, TWO_PI)
    # np.mod can round tiny negatives up to exactly 2*pi
    out = np.where(out >= TWO_PI, 0.0, out)
    return _as_output(out)


def wrap_signed(x):
    """Wrap an angle into (-pi, pi]."""
    _check_finite(x)
    out = np.pi - np.mod(np.pi - np.asarray(x, dtype=float), TWO_PI)
    out = np.where(out <= -np.pi, out + TWO_PI, out)
    return _as_output(out)


def wrap_period(x, period):
    """Wrap into [0, period) for an arbitrary positive period."""
    _check_finite(x)
    if not period > 0:
        raise ValueError("period must be positive")
    out = np.mod(x, period)
    out = np.where(out >= period, 0.0, out)
    return _as_output(out)


def circ_distance(a, b):
    """Shortest angular distance between two phases, in [0, pi]."""
    return _as_output(np.abs(wrap_signed(np.asarray(a) - np.asarray(b))))


def circular_mean(angles, axis=None, period=TWO_PI):
    """Angle of the resultant of unit phasors, wrapped into [0, period)."""
    angles = np.asarray(angles, dtype=float)
    z = np.exp(1j * angles * (TWO_PI / period)).sum(axis=axis)
    return wrap_period(np.angle(z) * (period / TWO_PI), period)


def coherent_average(samples):
    """Average complex carrier samples before taking the phase.

    Parameters
    ----------
    samples : array_like of complex
        Noisy unit-magnitude carrier samples. The last axis is averaged.

    Returns
    -------
    phase : float or ndarray
        Phase of the mean in [0, 2*pi).
    magnitude : float or ndarray
        Magnitude of the mean. Near zero means the phase carries no
        information; callers should reject such averages rather than trust
        the angle.
    """
    samples = np.asarray(samples, dtype=complex)
    if samples.size == 0 or samples.shape[-1] == 0:
        raise ValueError("coherent_average needs at least one sample")
    mean = samples.mean(axis=-1)
    return wrap_2pi(np.angle(mean)), _as_output(np.abs(mean))


def circular_rmse(errors):
    """Root-mean-square of wrapped phase errors, reported in degrees."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("circular_rmse needs at least one error")
    e = wrap_signed(errors)
    return float(np.degrees(np.sqrt(np.mean(np.square(e)))))
