"""Uniformly sampled time series, CSV I/O and the shared derivative pipeline."""

from __future__ import annotations

import csv
import dataclasses
import io
import os
import sys

import numpy as np

from .errors import DataError

__all__ = [
    "Trace",
    "uniform_grid",
    "moving_average",
    "differentiate",
    "read_trace_csv",
    "write_trace_csv",
    "format_float",
]

# Relative spacing jitter tolerated before a trace is resampled.
JITTER_TOL = 0.01


def format_float(value: float) -> str:
    """Shortest round-tripping representation, so CSV output is reproducible."""
    return repr(float(value))


@dataclasses.dataclass(frozen=True, eq=False)
class Trace:
    """Time series on a strictly increasing uniform grid.

    Attributes
    ----------
    t : ndarray
        Sample times [s].
    y : ndarray
        Sample values.
    unit_label : str
        Free-form unit tag of ``y``.
    """

    t: np.ndarray
    y: np.ndarray
    unit_label: str = ""

    def __post_init__(self):
        t = np.array(self.t, dtype=float).reshape(-1)
        y = np.array(self.y, dtype=float).reshape(-1)
        if t.size < 2:
            raise DataError("a trace needs at least 2 samples")
        if t.size != y.size:
            raise DataError(f"len(t)={t.size} differs from len(y)={y.size}")
        steps = np.diff(t)
        if np.any(steps <= 0):
            raise DataError("trace time grid must be strictly increasing")
        dt = (t[-1] - t[0]) / (t.size - 1)
        if np.max(np.abs(steps - dt)) > 1e-6 * dt:
            raise DataError("trace time grid must be uniform; resample first")
        t.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)

    @property
    def dt(self) -> float:
        return float((self.t[-1] - self.t[0]) / (self.t.size - 1))

    def __len__(self):
        return self.t.size

    def with_values(self, y, unit_label=None) -> "Trace":
        return Trace(self.t, y, self.unit_label if unit_label is None else unit_label)


def uniform_grid(t_end: float, dt: float, t_start: float = 0.0) -> np.ndarray:
    """Grid ``t_start, t_start + dt, ...`` up to and including ``t_end`` (to rounding)."""
    n = int(np.floor((t_end - t_start) / dt + 1e-9)) + 1
    return t_start + dt * np.arange(n)


def moving_average(y, window: int) -> np.ndarray:
    """Centered moving average that keeps the input length.

    The half-width shrinks symmetrically near the ends, so linear data passes
    through unchanged.  Even windows are rounded up to the next odd size.
    """
    y = np.asarray(y, dtype=float)
    half = max(int(window), 1) // 2
    if half == 0:
        return y.copy()
    n = y.size
    idx = np.arange(n)
    h = np.minimum(half, np.minimum(idx, n - 1 - idx))
    csum = np.concatenate(([0.0], np.cumsum(y)))
    return (csum[idx + h + 1] - csum[idx - h]) / (2 * h + 1)


def differentiate(meas: Trace, smooth_window: int = 5) -> Trace:
    """Central-difference derivative after moving-average smoothing.

    The result lives on ``meas.t[1:-1]``.

    Raises
    ------
    DataError
        If the trace has fewer than ``2 * smooth_window`` samples.
    """
    if len(meas) < max(2 * int(smooth_window), 3):
        raise DataError(
            f"trace has {len(meas)} samples; need at least {max(2 * int(smooth_window), 3)}"
        )
    s = moving_average(meas.y, smooth_window)
    dy = (s[2:] - s[:-2]) / (2.0 * meas.dt)
    label = f"d({meas.unit_label})/dt" if meas.unit_label else ""
    return Trace(meas.t[1:-1], dy, label)


def read_trace_csv(path) -> Trace:
    """Read a ``t_s,value`` CSV.

    Grids whose spacing deviates by more than 1% from the mean step are
    resampled onto a uniform grid by linear interpolation.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header[:2]] != ["t_s", "value"]:
            raise DataError(f"{path}: expected header 't_s,value', got {','.join(header)!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                raise DataError(f"{path}:{lineno}: cannot parse {row!r}") from None
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 samples")
    data = np.array(rows)
    t, y = data[:, 0], data[:, 1]
    if np.any(np.diff(t) <= 0):
        raise DataError(f"{path}: time column must be strictly increasing")
    dt = (t[-1] - t[0]) / (t.size - 1)
    if np.max(np.abs(np.diff(t) - dt)) > JITTER_TOL * dt:
        grid = t[0] + dt * np.arange(t.size)
        y = np.interp(grid, t, y)
        t = grid
    else:
        t = t[0] + dt * np.arange(t.size)
    return Trace(t, y)


def _trace_csv_text(trace: Trace) -> str:
    buf = io.StringIO()
    buf.write("t_s,value\n")
    for ti, yi in zip(trace.t, trace.y):
        buf.write(f"{format_float(ti)},{format_float(yi)}\n")
    return buf.getvalue()


def write_trace_csv(trace: Trace, path) -> None:
    text = _trace_csv_text(trace)
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(os.fspath(path), "w", newline="") as fh:
        fh.write(text)
