"""Analytical response of a closed-loop drift-diffusion channel.

A molecule bolus released at ``x = 0`` at ``t = 0`` on a ring of
circumference ``l_eff`` spreads with effective diffusion coefficient
``d_eff`` while being carried downstream at ``v_eff``.  On an infinite line
the density is a Gaussian; on the ring it is the Gaussian wrapped onto the
circle (a wrapped normal distribution).

All densities are per metre of loop length.  Diffusion coefficients are in
m^2/s.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DomainError, ParameterError

__all__ = [
    "ChannelParams",
    "PhysicalChannel",
    "SpaceTimePoint",
    "gaussian_response",
    "wrapped_response",
    "wrapped_bin_mass",
    "taylor_aris",
    "peak_times",
    "equilibrium_density",
    "n_images",
]

DEFAULT_TOL = 1e-12

# Gaussian tail cut-off in standard deviations; 8 sigma leaves < 1e-15 mass.
_MIN_SIGMAS = 8.0


@dataclasses.dataclass(frozen=True)
class ChannelParams:
    """Closed-loop channel: ``d_eff`` [m^2/s], ``v_eff`` [m/s], ``l_eff`` [m], ``d_rx`` [m].

    Reverse flow is not represented; reflect coordinates instead
    (``x -> l_eff - x``, ``d_rx -> l_eff - d_rx``).
    """

    d_eff: float
    v_eff: float
    l_eff: float
    d_rx: float = 0.0

    def __post_init__(self):
        for name in ("d_eff", "v_eff", "l_eff", "d_rx"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.d_eff <= 0:
            raise ParameterError(f"d_eff must be > 0, got {self.d_eff}")
        if self.l_eff <= 0:
            raise ParameterError(f"l_eff must be > 0, got {self.l_eff}")
        if self.v_eff < 0:
            raise ParameterError(
                "v_eff must be >= 0; express reverse flow by reflecting coordinates"
            )
        if not 0 <= self.d_rx < self.l_eff:
            raise ParameterError(
                f"d_rx must lie in [0, l_eff), got d_rx={self.d_rx}, l_eff={self.l_eff}"
            )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelParams":
        return cls(
            d_eff=data["d_eff"],
            v_eff=data["v_eff"],
            l_eff=data["l_eff"],
            d_rx=data.get("d_rx", 0.0),
        )

    def replace(self, **changes) -> "ChannelParams":
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True)
class PhysicalChannel:
    """Pipe geometry and flow feeding the Taylor-Aris mapping."""

    d_molecular: float
    r0: float
    v_mean: float

    def __post_init__(self):
        for name in ("d_molecular", "r0", "v_mean"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be finite and > 0, got {value!r}")
            object.__setattr__(self, name, value)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PhysicalChannel":
        return cls(d_molecular=data["d_molecular"], r0=data["r0"], v_mean=data["v_mean"])


@dataclasses.dataclass(frozen=True)
class SpaceTimePoint:
    x: float
    t: float

    def __post_init__(self):
        if self.t < 0:
            raise DomainError(f"t must be >= 0, got {self.t}")


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError(
            "density is a Dirac impulse at t <= 0; evaluate at t > 0 "
            "or convolve with an injection profile"
        )
    return t


def _tail_sigmas(tol):
    # Two-sided Gaussian tail mass below tol, never fewer than 8 sigma.
    return max(_MIN_SIGMAS, float(-ndtri(tol / 2.0)))


def n_images(sigma, l_eff, tol=DEFAULT_TOL):
    """Number of wrap images needed on each side of the principal one.

    Every image with ``|offset| <= max(z * sigma, l_eff)`` is kept, where
    ``z`` is the larger of 8 and the standard-normal quantile for ``tol``.
    """
    reach = max(_tail_sigmas(tol) * float(np.max(sigma)), l_eff)
    return int(math.ceil(reach / l_eff)) + 1


def gaussian_response(p: ChannelParams, x, t):
    """Open-tube (``l_eff -> inf``) density at position ``x`` and time ``t``."""
    t = _check_time(t)
    x = np.asarray(x, dtype=float)
    var = 2.0 * p.d_eff * t
    return np.exp(-((x - p.v_eff * t) ** 2) / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)


def wrapped_response(p: ChannelParams, x, t, tol: float = DEFAULT_TOL):
    """Density on the ring at position ``x`` in ``[0, l_eff)`` and time ``t``.

    Sums Gaussian images spaced ``l_eff`` apart.  Where the spread already
    exceeds one loop the equivalent Fourier series is used instead, which
    needs only a handful of terms there.

    Raises
    ------
    ParameterError
        If ``tol <= 0``.
    DomainError
        If any ``t <= 0``.
    """
    if not tol > 0:
        raise ParameterError(f"tol must be > 0, got {tol}")
    t = _check_time(t)
    x = np.asarray(x, dtype=float)
    x, t = np.broadcast_arrays(x, t)
    L = p.l_eff
    sigma = np.sqrt(2.0 * p.d_eff * t)
    # Offset of x from the bolus centre, reduced to one loop.
    u = np.mod(x - p.v_eff * t, L)

    out = np.empty(x.shape)
    wide = sigma >= L
    narrow = ~wide
    if np.any(narrow):
        s = sigma[narrow]
        un = u[narrow]
        K = n_images(s, L, tol)
        k = np.arange(-K, K + 1).reshape((-1,) + (1,) * un.ndim)
        z = (un + k * L) / s
        out[narrow] = np.exp(-0.5 * z * z).sum(axis=0) / (s * np.sqrt(2.0 * np.pi))
    if np.any(wide):
        lam = 2.0 * np.pi / L
        sbar = lam * sigma[wide]
        phase = lam * u[wide]
        # exp(-n^2 sbar^2 / 2) < tol * 1e-3 for n >= n_max.
        n_max = int(math.ceil(math.sqrt(2.0 * math.log(1e3 / tol)) / float(sbar.min()))) + 1
        n = np.arange(1, n_max + 1).reshape((-1,) + (1,) * phase.ndim)
        series = (np.exp(-0.5 * (n * sbar) ** 2) * np.cos(n * phase)).sum(axis=0)
        out[wide] = (1.0 + 2.0 * series) / L
    return out


def wrapped_bin_mass(p: ChannelParams, edges, t, tol: float = DEFAULT_TOL):
    """Probability mass of the ring density in each bin ``[edges[i], edges[i+1])`` at scalar ``t``."""
    t = float(_check_time(t))
    edges = np.asarray(edges, dtype=float)
    L = p.l_eff
    mu = p.v_eff * t
    sigma = math.sqrt(2.0 * p.d_eff * t)
    if sigma < L:
        # Shift so the bolus centre sits inside [0, L).
        shift = mu - math.floor(mu / L) * L
        K = n_images(sigma, L, tol)
        k = np.arange(-K, K + 1)[:, None]
        cdf = ndtr((edges[None, :] - shift + k * L) / sigma).sum(axis=0)
        return np.diff(cdf)
    lam = 2.0 * np.pi / L
    sbar = lam * sigma
    n_max = int(math.ceil(math.sqrt(2.0 * math.log(1e3 / tol)) / sbar)) + 1
    n = np.arange(1, n_max + 1)[:, None]
    prim = (np.exp(-0.5 * (n * sbar) ** 2) * np.sin(n * (lam * edges[None, :] - lam * mu)) / n).sum(axis=0)
    return np.diff(edges) / L + np.diff(prim) / np.pi


def taylor_aris(pc: PhysicalChannel) -> float:
    """Effective axial diffusion coefficient for laminar flow in a round pipe.

    ``d_eff = d + r0^2 v^2 / (48 d)``.
    """
    return pc.d_molecular + (pc.r0 ** 2 * pc.v_mean ** 2) / (48.0 * pc.d_molecular)


def peak_times(p: ChannelParams, k_max: int) -> list[tuple[int, float]]:
    """Time of the receiver-side concentration peak for each loop cycle ``k = 0..k_max``.

    The receiver at ``d_rx`` sees the ``k``-th pass of the bolus after it
    travelled ``d_rx + k * l_eff``.
    """
    if p.v_eff <= 0:
        raise DomainError("peak_times requires v_eff > 0 (formula is singular for pure diffusion)")
    if k_max < 0:
        raise ParameterError(f"k_max must be >= 0, got {k_max}")
    D, v = p.d_eff, p.v_eff
    out = []
    for k in range(int(k_max) + 1):
        dist = p.d_rx + k * p.l_eff
        # (sqrt(1 + a^2) - 1) written as a^2 / (sqrt(1 + a^2) + 1) to avoid cancellation.
        a2 = (v * dist / D) ** 2
        out.append((k, (D / v ** 2) * a2 / (math.sqrt(1.0 + a2) + 1.0)))
    return out


def equilibrium_density(p: ChannelParams) -> float:
    """Uniform long-time density ``1 / l_eff``."""
    return 1.0 / p.l_eff
