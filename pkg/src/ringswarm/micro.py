"""Agent-level dynamics on the ring and the density estimate that links
agents to fields."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidParameterError, StepRejectedError
from .ring import TWO_PI, Kernel, RingField, RingGrid, wrap_angle


@dataclass
class AgentEnsemble:
    positions: np.ndarray

    def __post_init__(self):
        self.positions = np.atleast_1d(wrap_angle(np.asarray(self.positions, dtype=float)))

    @property
    def n(self) -> int:
        return self.positions.size

    @classmethod
    def evenly_spaced(cls, n: int) -> "AgentEnsemble":
        """Agents at ``-pi + (i - 1/2) 2pi/n``, ``i = 1..n``."""
        return cls(-np.pi + (np.arange(n) + 0.5) * TWO_PI / n)

    @classmethod
    def sample(cls, rho: RingField, n: int, rng: np.random.Generator) -> "AgentEnsemble":
        """Draw ``n`` agents from the density ``rho`` (piecewise constant on cells)."""
        grid = rho.grid
        w = np.clip(rho.values, 0.0, None)
        w = w / w.sum()
        cells = rng.choice(grid.m, size=n, p=w)
        jitter = rng.uniform(-0.5, 0.5, size=n)
        return cls(grid.x[cells] + jitter * grid.cell_width)


#: Lags this close to +-pi are treated as exactly antipodal.
SEAM_ATOL = 1e-12


def _pairwise_lags(x: np.ndarray) -> np.ndarray:
    d = x[:, None] - x[None, :]
    d = np.where(d >= np.pi, d - TWO_PI, d)
    return np.where(d < -np.pi, d + TWO_PI, d)


def interaction_velocity(agents: AgentEnsemble, kernel: Kernel) -> np.ndarray:
    """``v_i = sum_j f(wrap(x_i - x_j))``; the self term is dropped."""
    x = agents.positions
    lags = _pairwise_lags(x)
    vals = np.asarray(kernel(lags), dtype=float)
    # antipodal pairs land on either side of the seam after rounding
    seam = np.abs(np.abs(lags) - np.pi) < SEAM_ATOL
    if seam.any():
        vals[seam] = 0.5 * (float(kernel(-np.pi)) + float(kernel(np.pi)))
    np.fill_diagonal(vals, 0.0)
    return vals.sum(axis=1)


def step_agents(
    agents: AgentEnsemble,
    kernel: Kernel,
    control,
    dt: float,
    max_displacement: Optional[float] = TWO_PI / 256,
    interaction: Optional[np.ndarray] = None,
) -> AgentEnsemble:
    """One explicit-midpoint step of ``x_i' = sum_j f(x_i - x_j) + u_i``.

    ``control`` (per-agent velocities or a scalar) is held over the step.
    ``max_displacement`` caps ``max|x_i'| * dt``; pass ``None`` to skip the
    check. ``interaction`` may carry already computed interaction
    velocities at the current positions, saving one pairwise sum.
    """
    if not dt > 0:
        raise InvalidParameterError(f"dt must be positive, got {dt!r}")
    u = np.broadcast_to(np.asarray(control, dtype=float), agents.positions.shape)
    if interaction is None:
        interaction = interaction_velocity(agents, kernel)
    v1 = interaction + u
    if max_displacement is not None:
        vmax = float(np.abs(v1).max())
        if vmax * dt >= max_displacement:
            raise StepRejectedError(
                f"agents would move {vmax * dt:.3g} > {max_displacement:.3g} in one step",
                0.5 * max_displacement / vmax,
            )
    mid = AgentEnsemble(agents.positions + 0.5 * dt * v1)
    v2 = interaction_velocity(mid, kernel) + u
    return AgentEnsemble(agents.positions + dt * v2)


def default_bandwidth(n: int) -> float:
    """Default smoothing width ``0.5 * n**(-1/5)`` (about 0.2 rad for 100 agents)."""
    return 0.5 * n ** (-0.2)


def estimate_density(
    agents: AgentEnsemble, grid: RingGrid, bandwidth: Optional[float] = None
) -> RingField:
    """Von Mises kernel density estimate scaled to integrate to ``N``.

    ``bandwidth`` is the angular standard deviation of the smoothing kernel
    (concentration ``1 / bandwidth**2``).
    """
    if bandwidth is None:
        bandwidth = default_bandwidth(agents.n)
    if not bandwidth > 0:
        raise InvalidParameterError(f"bandwidth must be positive, got {bandwidth!r}")
    kappa = 1.0 / bandwidth**2
    x, p = grid.x, agents.positions
    # cos(x - p) through the addition formula: two outer products are
    # much cheaper than a full cosine table
    arg = np.outer(np.cos(p), np.cos(x))
    arg += np.outer(np.sin(p), np.sin(x))
    arg -= 1.0
    arg *= kappa
    dens = np.exp(arg, out=arg).sum(axis=0)
    dens *= agents.n / (grid.cell_width * dens.sum())
    return RingField(grid, dens)
