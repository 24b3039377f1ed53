"""Continuum-level density control of repulsive swarms on the unit circle.

Submodules
----------
ring        grid, fields, kernels, convolution, norms, KL divergence
macro       finite-volume transport of densities and disturbances
micro       agent dynamics and kernel density estimation
controller  control source, velocity reconstruction, integral action
simulation  closed-loop drivers (macro or agent plant)
bounds      numerical checks of the Lyapunov inequalities
experiment  scenario specs, sweeps and presets
io          spec files and CSV/JSON output
"""

from .controller import ControllerConfig, IntegralState, compute_q, compute_U, sample_control
from .errors import RingSwarmError
from .experiment import ExperimentSpec, MetricsSeries, preset, run_experiment, sweep
from .macro import MacroState, StepDisturbance, step_controlled, step_reference
from .micro import AgentEnsemble, estimate_density, interaction_velocity, step_agents
from .ring import (
    MorseKernel,
    RingField,
    RingGrid,
    circular_convolution,
    kl_divergence,
    lp_norm,
    von_mises_field,
    window_kernel,
    wrap_angle,
)
from .simulation import ClosedLoop

__version__ = "0.1.0"

__all__ = [
    "AgentEnsemble",
    "ClosedLoop",
    "ControllerConfig",
    "ExperimentSpec",
    "IntegralState",
    "MacroState",
    "MetricsSeries",
    "MorseKernel",
    "RingField",
    "RingGrid",
    "RingSwarmError",
    "StepDisturbance",
    "circular_convolution",
    "compute_U",
    "compute_q",
    "estimate_density",
    "interaction_velocity",
    "kl_divergence",
    "lp_norm",
    "preset",
    "run_experiment",
    "sample_control",
    "step_agents",
    "step_controlled",
    "step_reference",
    "sweep",
    "von_mises_field",
    "window_kernel",
    "wrap_angle",
]
