"""Least-squares estimation of the ring channel from a receiver intensity trace.

The fit target is the smoothed time derivative of the measured intensity;
the model derivative goes through exactly the same smoothing and differencing
so that both sides see the same linear operator.

Internally the optimizer works on the transformed vector

    theta = (log d_eff, log v_eff, log l_eff, d_rx / l_eff, log scale)

inside a box.  The ratio keeps ``0 <= d_rx < l_eff`` feasible for every
point in the box.

A single trace only pins the combinations ``v_eff / l_eff``,
``d_eff / l_eff**2``, ``d_rx / l_eff`` and ``scale / l_eff``: stretching all
lengths by ``a`` (and ``d_eff`` by ``a**2``, ``scale`` by ``a``) leaves the
prediction unchanged.  Hold one of ``l_eff`` or ``scale`` fixed through
``FitProblem.fixed`` to make the remaining parameters identifiable.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .channel import ChannelParams
from .errors import ConvergenceError, DataError
from .injection import InjectionProfile
from .response import forward
from .traces import Trace, differentiate

__all__ = [
    "FitBounds",
    "FitProblem",
    "FitResult",
    "StartReport",
    "fit_channel",
    "differentiate",
    "residual_report",
    "noise_floor",
    "levenberg_marquardt",
    "LMResult",
]

log = logging.getLogger(__name__)

PARAM_NAMES = ("d_eff", "v_eff", "l_eff", "d_rx", "scale")
# Largest admissible d_rx / l_eff; the interval is half-open.
FRACTION_MAX = 1.0 - 1e-9


@dataclasses.dataclass(frozen=True)
class FitBounds:
    """Box constraints, each a ``(lo, hi)`` pair in natural units."""

    d_eff: tuple[float, float] = (1e-10, 1e-4)
    v_eff: tuple[float, float] = (1e-6, 1e-2)
    l_eff: tuple[float, float] = (1e-3, 1.0)
    fraction: tuple[float, float] = (0.0, FRACTION_MAX)
    scale: tuple[float, float] = (1e-30, 1e30)

    def __post_init__(self):
        for name in ("d_eff", "v_eff", "l_eff", "fraction", "scale"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not lo < hi:
                raise ValueError(f"bounds for {name} need lo < hi, got ({lo}, {hi})")
            if name != "fraction" and lo <= 0:
                raise ValueError(f"lower bound for {name} must be > 0, got {lo}")
            object.__setattr__(self, name, (lo, hi))
        lo, hi = self.fraction
        if lo < 0 or hi > FRACTION_MAX:
            object.__setattr__(self, "fraction", (max(lo, 0.0), min(hi, FRACTION_MAX)))

    def transformed(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([
            math.log(self.d_eff[0]), math.log(self.v_eff[0]), math.log(self.l_eff[0]),
            self.fraction[0], math.log(self.scale[0]),
        ])
        hi = np.array([
            math.log(self.d_eff[1]), math.log(self.v_eff[1]), math.log(self.l_eff[1]),
            self.fraction[1], math.log(self.scale[1]),
        ])
        return lo, hi

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in dataclasses.asdict(self).items()}

    @classmethod
    def from_dict(cls, data: dict) -> "FitBounds":
        return cls(**{k: tuple(v) for k, v in data.items()})


@dataclasses.dataclass(frozen=True, eq=False)
class FitProblem:
    measured: Trace
    injection: InjectionProfile
    bounds: FitBounds = FitBounds()
    init: Optional[Sequence[float]] = None  # (d_eff, v_eff, l_eff, d_rx, scale)
    n_starts: int = 16
    seed: int = 0
    smooth_window: int = 5
    max_iter: int = 200
    # Parameters held at a given value, keyed by name in PARAM_NAMES.
    fixed: Optional[Mapping[str, float]] = None

    def __post_init__(self):
        for name in self.fixed or {}:
            if name not in PARAM_NAMES:
                raise ValueError(f"cannot fix unknown parameter {name!r}; choose from {PARAM_NAMES}")


@dataclasses.dataclass(frozen=True)
class StartReport:
    start_index: int
    cost: float
    n_iter: int
    converged: bool
    message: str


@dataclasses.dataclass(frozen=True, eq=False)
class FitResult:
    params: ChannelParams
    scale: float
    residual_rms: float
    n_iter: int
    converged: bool
    start_index: int
    cost_history: tuple = ()
    starts: tuple = ()
    at_bounds: dict = dataclasses.field(default_factory=dict)

    def vector(self) -> np.ndarray:
        p = self.params
        return np.array([p.d_eff, p.v_eff, p.l_eff, p.d_rx, self.scale])

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "scale": self.scale,
            "residual_rms": self.residual_rms,
            "n_iter": self.n_iter,
            "converged": self.converged,
            "start_index": self.start_index,
            "at_bounds": dict(self.at_bounds),
            "starts": [dataclasses.asdict(s) for s in self.starts],
        }


# --------------------------------------------------------------------------
# Levenberg-Marquardt


@dataclasses.dataclass
class LMResult:
    x: np.ndarray
    cost: float
    residual: np.ndarray
    n_iter: int
    n_eval: int
    converged: bool
    message: str
    cost_history: list


def _jacobian(fun, x, r, lo, hi, rel_step):
    J = np.empty((r.size, x.size))
    for i in range(x.size):
        h = rel_step * max(abs(x[i]), 1.0)
        xp = x.copy()
        if x[i] + h > hi[i]:
            h = -h
        xp[i] = x[i] + h
        J[:, i] = (fun(xp) - r) / h
    return J


def levenberg_marquardt(fun, x0, lo, hi, max_iter=200, ftol=1e-10, xtol=1e-10, gtol=1e-12,
                        rel_step=1e-6):
    """Minimize ``0.5 * ||fun(x)||^2`` over the box ``lo <= x <= hi``.

    Damped Gauss-Newton with Marquardt's diagonal scaling and a forward
    difference Jacobian.  Parameters sitting on a bound with the gradient
    pointing outwards are frozen for that iteration; the remaining step is
    clipped to the box.  Only steps that lower the cost are accepted, so
    ``cost_history`` is strictly decreasing.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    r = fun(x)
    cost = 0.5 * float(r @ r)
    n_eval = 1
    history = [cost]
    mu = None
    nu = 2.0
    scale_diag = np.zeros(x.size)
    message = "maximum iterations reached"
    converged = False
    it = 0
    need_jac = True
    while it < max_iter:
        it += 1
        if need_jac:
            J = _jacobian(fun, x, r, lo, hi, rel_step)
            n_eval += x.size
            A = J.T @ J
            g = J.T @ r
            scale_diag = np.maximum(scale_diag, np.diag(A))
            need_jac = False
        active = ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
        free = ~active
        g_free = g[free]
        if not np.any(free) or np.max(np.abs(g_free)) <= gtol * max(cost, 1e-300):
            message = "gradient below tolerance"
            converged = True
            break
        D = np.where(scale_diag[free] > 0, scale_diag[free], 1.0)
        if mu is None:
            mu = 1e-3
        A_free = A[np.ix_(free, free)]
        try:
            step_free = np.linalg.solve(A_free + mu * np.diag(D), -g_free)
        except np.linalg.LinAlgError:
            mu *= nu
            nu *= 2.0
            continue
        step = np.zeros_like(x)
        step[free] = step_free
        x_new = np.clip(x + step, lo, hi)
        step = x_new - x
        if np.linalg.norm(step) <= xtol * (np.linalg.norm(x) + xtol):
            message = "step below tolerance"
            converged = True
            break
        r_new = fun(x_new)
        n_eval += 1
        cost_new = 0.5 * float(r_new @ r_new)
        # Predicted reduction of the quadratic model for the (clipped) step.
        Js = J @ step
        predicted = -(g @ step) - 0.5 * float(Js @ Js)
        actual = cost - cost_new
        if np.isfinite(cost_new) and actual > 0:
            rho = actual / predicted if predicted > 0 else 0.0
            x, r = x_new, r_new
            rel_drop = actual / max(cost, 1e-300)
            cost = cost_new
            history.append(cost)
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
            need_jac = True
            if rel_drop <= ftol:
                message = "relative cost reduction below tolerance"
                converged = True
                break
        else:
            mu *= nu
            nu *= 2.0
            if mu > 1e16:
                message = "damping diverged without improvement"
                converged = True
                break
    return LMResult(x, cost, r, it, n_eval, converged, message, history)


# --------------------------------------------------------------------------
# Channel fitting


def noise_floor(y) -> float:
    """Robust noise level from the MAD of first differences (Gaussian-consistent)."""
    d = np.diff(np.asarray(y, dtype=float))
    if d.size == 0:
        return 0.0
    return float(1.4826 * np.median(np.abs(d - np.median(d))) / math.sqrt(2.0))


def _to_natural(theta):
    d_eff, v_eff, l_eff = math.exp(theta[0]), math.exp(theta[1]), math.exp(theta[2])
    frac = min(max(float(theta[3]), 0.0), FRACTION_MAX)
    return d_eff, v_eff, l_eff, frac * l_eff, math.exp(theta[4])


def _to_theta(vec):
    d_eff, v_eff, l_eff, d_rx, scale = (float(v) for v in vec)
    return np.array([math.log(d_eff), math.log(v_eff), math.log(l_eff), d_rx / l_eff, math.log(scale)])


class _Objective:
    """Residual of the smoothed model derivative against the smoothed measured one."""

    def __init__(self, prob: FitProblem):
        self.prob = prob
        self.grid = prob.measured.t
        self.target = differentiate(prob.measured, prob.smooth_window).y

    def model(self, d_eff, v_eff, l_eff, d_rx, scale):
        ch = ChannelParams(d_eff, v_eff, l_eff, d_rx)
        y = forward(ch, self.prob.injection, scale, self.grid)
        return differentiate(Trace(self.grid, y), self.prob.smooth_window).y

    def __call__(self, theta):
        try:
            return self.model(*_to_natural(theta)) - self.target
        except (ValueError, FloatingPointError, OverflowError):
            return np.full(self.target.shape, np.inf)


def _held_values(prob: FitProblem) -> np.ndarray:
    """Transformed values of fixed parameters, NaN where the parameter is free."""
    held = np.full(5, np.nan)
    fixed = dict(prob.fixed or {})
    if "d_rx" in fixed and "l_eff" not in fixed:
        raise ValueError("fixing d_rx requires fixing l_eff as well")
    for name, value in fixed.items():
        i = PARAM_NAMES.index(name)
        if name == "d_rx":
            held[i] = float(value) / float(fixed["l_eff"])
        else:
            held[i] = math.log(float(value))
    return held


def _start_points(prob: FitProblem, obj: _Objective, lo, hi, held):
    starts = []
    if prob.init is not None:
        theta = _to_theta(prob.init)
        theta = np.where(np.isnan(held), theta, held)
        starts.append(np.clip(theta, lo, hi))
    n_lhs = max(int(prob.n_starts) - len(starts), 0)
    if n_lhs:
        sampler = qmc.LatinHypercube(d=4, seed=np.random.default_rng(prob.seed))
        unit = sampler.random(n_lhs)
        for u in unit:
            theta = np.empty(5)
            theta[:4] = lo[:4] + u * (hi[:4] - lo[:4])
            theta[:4] = np.where(np.isnan(held[:4]), theta[:4], held[:4])
            if np.isnan(held[4]):
                # Intensity scale enters linearly; start from its least-squares value.
                d_eff, v_eff, l_eff, d_rx, _ = _to_natural(np.append(theta[:4], 0.0))
                try:
                    unit_model = obj.model(d_eff, v_eff, l_eff, d_rx, 1.0)
                    denom = float(unit_model @ unit_model)
                    s = float(unit_model @ obj.target) / denom if denom > 0 else 1.0
                except ValueError:
                    s = 1.0
                theta[4] = math.log(s) if s > 0 and math.isfinite(s) else 0.0
            else:
                theta[4] = held[4]
            starts.append(np.clip(theta, lo, hi))
    return starts


def _at_bounds(theta, lo, hi):
    names = ("d_eff", "v_eff", "l_eff", "fraction", "scale")
    span = hi - lo
    return {
        n: ("lower" if theta[i] <= lo[i] + 1e-9 * span[i] else "upper" if theta[i] >= hi[i] - 1e-9 * span[i] else "free")
        for i, n in enumerate(names)
    }


def fit_channel(prob: FitProblem) -> FitResult:
    """Fit ``(d_eff, v_eff, l_eff, d_rx, scale)`` to the measured trace.

    Runs one Levenberg-Marquardt solve per start (the optional ``init``
    first, then Latin-hypercube samples of the transformed box drawn from
    ``seed``) and keeps the lowest final cost, ties going to the lower start
    index.

    Raises
    ------
    DataError
        Measured derivative is identically zero or never exceeds three times
        its noise floor.
    ConvergenceError
        No start converged.
    """
    if prob.n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    obj = _Objective(prob)
    target = obj.target
    peak = float(np.max(np.abs(target)))
    if peak == 0.0:
        raise DataError("measured derivative is identically zero")
    floor = noise_floor(target)
    if peak <= 3.0 * floor:
        raise DataError(
            f"measured derivative never exceeds 3x its noise floor ({peak:.3g} <= 3 x {floor:.3g})"
        )
    lo, hi = prob.bounds.transformed()
    held = _held_values(prob)
    free = np.isnan(held)

    def embed(theta_free):
        theta = held.copy()
        theta[free] = theta_free
        return theta

    def fun(theta_free):
        return obj(embed(theta_free))

    best = None
    reports = []
    for index, theta0 in enumerate(_start_points(prob, obj, lo, hi, held)):
        res = levenberg_marquardt(fun, theta0[free], lo[free], hi[free], max_iter=prob.max_iter)
        ok = res.converged and math.isfinite(res.cost)
        reports.append(StartReport(index, float(res.cost), res.n_iter, ok, res.message))
        log.debug("start %d: cost=%.6g iter=%d %s", index, res.cost, res.n_iter, res.message)
        if ok and (best is None or res.cost < best[1].cost):
            best = (index, res)
    if best is None:
        raise ConvergenceError("no optimizer start converged", [dataclasses.asdict(r) for r in reports])

    index, res = best
    theta = embed(res.x)
    d_eff, v_eff, l_eff, d_rx, scale = _to_natural(theta)
    return FitResult(
        params=ChannelParams(d_eff, v_eff, l_eff, d_rx),
        scale=scale,
        residual_rms=float(math.sqrt(np.mean(res.residual ** 2))),
        n_iter=res.n_iter,
        converged=True,
        start_index=index,
        cost_history=tuple(res.cost_history),
        starts=tuple(reports),
        at_bounds=_at_bounds(theta, lo, hi),
    )


def residual_report(res: FitResult, prob: FitProblem):
    """Residuals of a fit on the derivative target and on the intensity itself.

    Returns ``(derivative_residual, intensity_residual, summary)`` where both
    residuals are model minus measurement and ``summary`` holds the RMS,
    largest absolute value and its time for each.
    """
    grid = prob.measured.t
    model_y = forward(res.params, prob.injection, res.scale, grid)
    model_dy = differentiate(Trace(grid, model_y), prob.smooth_window)
    meas_dy = differentiate(prob.measured, prob.smooth_window)
    d_res = model_dy.with_values(model_dy.y - meas_dy.y, "intensity/s")
    i_res = Trace(grid, model_y - prob.measured.y, "intensity")

    def stats(tr: Trace):
        i = int(np.argmax(np.abs(tr.y)))
        return {
            "rms": float(math.sqrt(np.mean(tr.y ** 2))),
            "max_abs": float(abs(tr.y[i])),
            "t_of_max_s": float(tr.t[i]),
        }

    return d_res, i_res, {"derivative": stats(d_res), "intensity": stats(i_res)}
