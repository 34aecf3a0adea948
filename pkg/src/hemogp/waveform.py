"""Periodic inlet velocity waveform: a baseline plus a train of Gaussian peaks.

u(t) = a0 + sum_i a_i * exp(-(tau - b_i)^2 / c_i),  tau = t - floor(t/T)*T

Tails are not wrapped across the period seam; the formula is evaluated as
written, so a peak close to t=0 or t=T loses the part of its tail that falls
outside [0, T).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class InletWaveform:
    period: float
    base: float
    peaks: tuple          # a_i, m/s
    centers: tuple        # b_i, s
    widths: tuple         # c_i, s^2 (Gaussian denominators, not std devs)

    def __post_init__(self):
        if not self.period > 0.0:
            raise ConfigError(f"waveform period must be positive, got {self.period}")
        n = len(self.peaks)
        if n < 1:
            raise ConfigError("waveform needs at least one peak term")
        if len(self.centers) != n or len(self.widths) != n:
            raise ConfigError(
                "waveform peaks/centers/widths must have equal length, got "
                f"{n}/{len(self.centers)}/{len(self.widths)}"
            )
        for i, w in enumerate(self.widths):
            if not w > 0.0:
                raise ConfigError(f"waveform width {i + 1} must be positive, got {w}")
        # freeze list inputs into tuples so instances stay hashable
        object.__setattr__(self, "peaks", tuple(float(v) for v in self.peaks))
        object.__setattr__(self, "centers", tuple(float(v) for v in self.centers))
        object.__setattr__(self, "widths", tuple(float(v) for v in self.widths))

    @property
    def n_peaks(self):
        return len(self.peaks)


def evaluate_inlet(wf, t):
    """Waveform velocity at time(s) t. Scalar in, scalar out; array in, array out."""
    t = np.asarray(t, dtype=float)
    tau = t - np.floor(t / wf.period) * wf.period
    u = np.full_like(tau, wf.base)
    for a, b, c in zip(wf.peaks, wf.centers, wf.widths):
        d = tau - b
        u += a * np.exp(-(d * d) / c)
    if u.ndim == 0:
        return float(u)
    return u
