"""Raised-cosine injection model and its recovery from mean-intensity traces."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import DataError, FitQualityError, ParameterError
from .traces import Trace, differentiate

__all__ = [
    "InjectionProfile",
    "raised_cosine",
    "raised_cosine_slope",
    "cumulative_intensity",
    "extract_injection",
    "THRESHOLD",
]

THRESHOLD = 0.05
PLATEAU_FRACTION = 0.10
# Last-decile slope above this fraction of the peak slope means no plateau.
PLATEAU_SLOPE_LIMIT = 0.05


@dataclasses.dataclass(frozen=True)
class InjectionProfile:
    """Raised-cosine release starting at ``t0`` [s] and lasting ``tw`` [s].

    ``amplitude`` is the total released quantity, i.e. the integral of the
    release rate.
    """

    t0: float
    tw: float
    amplitude: float = 1.0

    def __post_init__(self):
        for name in ("t0", "tw", "amplitude"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.tw <= 0:
            raise ParameterError(f"tw must be > 0, got {self.tw}")
        if self.t0 < 0:
            raise ParameterError(f"t0 must be >= 0, got {self.t0}")
        if self.amplitude <= 0:
            raise ParameterError(f"amplitude must be > 0, got {self.amplitude}")

    @property
    def omega(self) -> float:
        return 2.0 * math.pi / self.tw

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "InjectionProfile":
        return cls(t0=data["t0"], tw=data["tw"], amplitude=data.get("amplitude", 1.0))


def _phase(p: InjectionProfile, t):
    t = np.asarray(t, dtype=float)
    tau = t - p.t0
    inside = (tau >= 0) & (tau <= p.tw)
    return tau, inside


def raised_cosine(p: InjectionProfile, t):
    """Release rate ``(A / tw) (1 - cos(2 pi (t - t0) / tw))`` on ``[t0, t0 + tw]``, zero elsewhere."""
    tau, inside = _phase(p, t)
    rate = (p.amplitude / p.tw) * (1.0 - np.cos(p.omega * tau))
    return np.where(inside, rate, 0.0)


def raised_cosine_slope(p: InjectionProfile, t):
    """Time derivative of :func:`raised_cosine`."""
    tau, inside = _phase(p, t)
    slope = (p.amplitude / p.tw) * p.omega * np.sin(p.omega * tau)
    return np.where(inside, slope, 0.0)


def cumulative_intensity(p: InjectionProfile, grid) -> Trace:
    """Released quantity up to each time in ``grid`` (integral of the release rate)."""
    t = np.asarray(grid, dtype=float)
    tau = np.clip(t - p.t0, 0.0, p.tw)
    frac = tau / p.tw - np.sin(p.omega * tau) / (2.0 * math.pi)
    return Trace(t, p.amplitude * frac, "intensity")


def _crossing(t, f, level, i0, i1):
    """Linear-interpolated time where ``f`` crosses ``level`` between samples ``i0`` and ``i1``."""
    f0, f1 = f[i0], f[i1]
    if f1 == f0:
        return float(t[i1])
    return float(t[i0] + (level - f0) / (f1 - f0) * (t[i1] - t[i0]))


def _detect(rate: Trace, threshold: float):
    """Onset, offset and height of the main excursion of ``rate`` above ``threshold * max``."""
    t, f = rate.t, rate.y
    i_peak = int(np.argmax(f))
    peak = float(f[i_peak])
    level = threshold * peak
    below = f <= level
    before = np.nonzero(below[:i_peak])[0]
    after = np.nonzero(below[i_peak:])[0]
    if before.size == 0 or after.size == 0:
        raise FitQualityError("injection is not fully contained in the trace")
    i_on = int(before[-1])
    i_off = i_peak + int(after[0])
    return _crossing(t, f, level, i_on, i_on + 1), _crossing(t, f, level, i_off - 1, i_off), peak


def extract_injection(
    meas: Trace,
    smooth_window: int = 5,
    threshold: float = THRESHOLD,
    calibration_steps: int = 20,
) -> InjectionProfile:
    """Estimate the raised-cosine injection from a mean-intensity trace.

    The release rate is the smoothed derivative of ``meas``.  The main
    excursion is the contiguous run of samples around the rate maximum that
    stays above ``threshold * max``.  For a raised cosine those crossings sit
    a fraction ``c = acos(1 - 2 threshold) / (2 pi)`` of ``tw`` inside the
    true support, which gives the first estimate.

    Smoothing widens the excursion further.  To remove that bias the
    detector is re-run on a noiseless raised cosine sampled on the same grid
    with the same window, and ``(t0, tw)`` is shifted until the synthetic
    crossings line up with the measured ones (``calibration_steps = 0``
    disables this).

    Raises
    ------
    DataError
        Fewer than ``2 * smooth_window`` samples.
    FitQualityError
        Flat trace, or the trace has not reached a plateau by its end.
    """
    if not 0 < threshold < 1:
        raise ParameterError(f"threshold must lie in (0, 1), got {threshold}")
    if len(meas) < 2 * int(smooth_window):
        raise DataError(
            f"trace has {len(meas)} samples; need at least {2 * int(smooth_window)}"
        )
    rate = differentiate(meas, smooth_window)
    f = rate.y
    peak = float(np.max(f))
    if not peak > 0:
        raise FitQualityError("intensity never increases; no injection present")

    n_tail = max(int(math.ceil(PLATEAU_FRACTION * f.size)), 1)
    tail_slope = abs(float(np.mean(f[-n_tail:])))
    if tail_slope > PLATEAU_SLOPE_LIMIT * peak:
        raise FitQualityError(
            f"no plateau: final-decile slope {tail_slope:.3g} exceeds "
            f"{PLATEAU_SLOPE_LIMIT:.0%} of peak slope {peak:.3g}"
        )

    t_on, t_off, _ = _detect(rate, threshold)
    c = math.acos(1.0 - 2.0 * threshold) / (2.0 * math.pi)
    tw = (t_off - t_on) / (1.0 - 2.0 * c)
    t0 = t_on - c * tw

    for _ in range(calibration_steps):
        if tw <= 0:
            break
        synth = cumulative_intensity(InjectionProfile(max(t0, 0.0), tw), meas.t)
        try:
            s_on, s_off, _ = _detect(differentiate(synth, smooth_window), threshold)
        except FitQualityError:
            break
        d_on = t_on - s_on
        d_width = (t_off - t_on) - (s_off - s_on)
        t0 += d_on
        tw += d_width
        if abs(d_on) < 1e-9 * tw and abs(d_width) < 1e-9 * tw:
            break

    if not tw > 0:
        raise FitQualityError(f"estimated injection duration is not positive ({tw:.3g} s)")
    amplitude = float(np.mean(meas.y[-max(int(math.ceil(PLATEAU_FRACTION * len(meas))), 1):]))
    if not amplitude > 0:
        raise FitQualityError("plateau intensity is not positive")
    return InjectionProfile(t0=max(t0, 0.0), tw=tw, amplitude=amplitude)
