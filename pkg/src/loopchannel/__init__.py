"""Molecule propagation in closed-loop advective-dispersive channels."""

from .channel import (
    ChannelParams,
    PhysicalChannel,
    equilibrium_density,
    gaussian_response,
    peak_times,
    taylor_aris,
    wrapped_bin_mass,
    wrapped_response,
)
from .errors import (
    ConvergenceError,
    DataError,
    DomainError,
    FitQualityError,
    LoopChannelError,
    ParameterError,
)
from .estimation import FitBounds, FitProblem, FitResult, fit_channel, residual_report
from .injection import InjectionProfile, cumulative_intensity, extract_injection, raised_cosine
from .pbs import Frames, ParticleEnsemble, SimConfig, receiver_trace, simulate
from .response import ForwardModel, predict, predict_derivative
from .traces import Trace, differentiate, read_trace_csv, uniform_grid, write_trace_csv

__version__ = "0.1.0"
