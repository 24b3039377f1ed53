"""Macroscopic density transport on the ring.

The controlled mass balance ``rho_t + [rho (V + U + d)]_x = q`` and the
reference self-advection ``rho_d_t + [rho_d V_d]_x = 0`` are discretized
with a conservative finite-volume scheme (global Lax-Friedrichs fluxes on
node-centred cells) and advanced with the explicit midpoint rule.

The Lax-Friedrichs flux splits into a central difference plus a numerical
diffusion ``alpha * h / 2 * rho_xx``. When the plant and the reference are
stepped together they share ``alpha``; the diffusion then acts on the error
``rho_d - rho`` only, so the closed-loop cancellations of the controller
survive discretization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import SimulationAbortedError, StepRejectedError, InvalidParameterError
from .ring import Kernel, RingField, RingGrid, circular_convolution, ddx

log = logging.getLogger(__name__)

#: Courant number used for the admissible step.
CFL = 0.5
#: Abort once this fraction of N has been removed by nonnegativity clipping.
CLIP_ABORT_FRACTION = 1e-4


@dataclass
class MacroState:
    rho: RingField
    rho_d: RingField
    t: float = 0.0
    clipped_mass: float = 0.0

    @property
    def grid(self) -> RingGrid:
        return self.rho.grid


class DisturbanceField:
    """Additive velocity perturbation ``d(x, t)``.

    ``D1`` and ``D2`` bound ``|d|`` and ``|d_x|`` over the horizon. Subclasses
    override :meth:`__call__`; the generic form wraps a callable.
    """

    def __init__(self, rule: Callable[[np.ndarray, float], np.ndarray], D1: float, D2: float):
        self.rule = rule
        self.D1 = float(D1)
        self.D2 = float(D2)

    def __call__(self, x, t: float) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.rule(x, t), dtype=float), np.shape(x)).copy()

    def sample(self, grid: RingGrid, t: float) -> RingField:
        return RingField(grid, self(grid.x, t))

    def check_periodic(self, t: float, atol: float = 1e-12) -> None:
        ends = self(np.array([-np.pi, np.pi]), t)
        if abs(ends[0] - ends[1]) > atol * max(1.0, abs(ends[0])):
            raise InvalidParameterError(
                f"disturbance is not periodic at t={t}: d(-pi)={ends[0]}, d(pi)={ends[1]}"
            )

    def is_zero(self) -> bool:
        return False


class NoDisturbance(DisturbanceField):
    def __init__(self):
        super().__init__(lambda x, t: 0.0, 0.0, 0.0)

    def is_zero(self) -> bool:
        return True


class StepDisturbance(DisturbanceField):
    """Spatially constant ``amplitude`` switched on at ``switch_time``."""

    def __init__(self, amplitude: float, switch_time: float):
        self.amplitude = float(amplitude)
        self.switch_time = float(switch_time)
        super().__init__(self._rule, abs(self.amplitude), 0.0)

    def _rule(self, x, t):
        return self.amplitude if t >= self.switch_time else 0.0

    def is_zero(self) -> bool:
        return self.amplitude == 0.0


def velocity_field(kernel: Kernel, rho: RingField) -> RingField:
    """Nonlocal interaction velocity ``V = f * rho``."""
    return circular_convolution(kernel, rho)


def error_field(state: MacroState) -> RingField:
    """Density error ``rho_d - rho``."""
    return state.rho_d - state.rho


def lf_divergence(rho: np.ndarray, v: np.ndarray, alpha: float, h: float) -> np.ndarray:
    """Discrete ``[rho v]_x`` from global Lax-Friedrichs face fluxes.

    Summing the result times ``h`` telescopes to zero, so transport never
    changes the total mass.
    """
    w = rho * v
    # flux[i] sits on the face between cells i and i+1
    flux = np.empty_like(w)
    flux[:-1] = 0.5 * (w[:-1] + w[1:]) - 0.5 * alpha * (rho[1:] - rho[:-1])
    flux[-1] = 0.5 * (w[-1] + w[0]) - 0.5 * alpha * (rho[0] - rho[-1])
    div = np.empty_like(w)
    div[1:] = flux[1:] - flux[:-1]
    div[0] = flux[0] - flux[-1]
    return div / h


def admissible_dt(v: np.ndarray, h: float, cfl: float = CFL) -> float:
    vmax = float(np.abs(v).max()) if np.size(v) else 0.0
    return np.inf if vmax == 0.0 else cfl * h / vmax


Control = Union[RingField, Callable[[RingField, float], RingField], None]


def _resolve(control: Control, rho: RingField, t: float) -> Optional[np.ndarray]:
    if control is None:
        return None
    if callable(control) and not isinstance(control, RingField):
        control = control(rho, t)
    return control.values


def _transport_speed(kernel, rho, U, d, t):
    v = velocity_field(kernel, rho).values
    if U is not None:
        v = v + U
    if d is not None and not d.is_zero():
        v = v + d(rho.grid.x, t)
    return v


def step_controlled(
    state: MacroState,
    kernel: Kernel,
    dt: float,
    q: Control = None,
    U: Control = None,
    disturbance: Optional[DisturbanceField] = None,
    alpha: Optional[float] = None,
) -> MacroState:
    """Advance ``rho`` by one midpoint step of ``rho_t + [rho (V+U+d)]_x = q``.

    ``q`` and ``U`` may be fields (held over the step) or callables
    ``(rho, t) -> RingField`` re-evaluated at each stage. ``rho_d`` is carried
    over unchanged. Raises :class:`StepRejectedError` when ``dt`` exceeds the
    CFL limit.
    """
    grid = state.grid
    h = grid.cell_width
    d = disturbance
    if d is not None:
        d.check_periodic(state.t)
    U0 = _resolve(U, state.rho, state.t)
    v0 = _transport_speed(kernel, state.rho, U0, d, state.t)
    limit = admissible_dt(v0, h)
    if dt > limit * (1 + 1e-12):
        raise StepRejectedError(f"dt={dt:.3g} violates CFL (max {limit:.3g})", limit)
    a = float(np.abs(v0).max()) if alpha is None else float(alpha)

    def rhs(rho: RingField, t: float, U_vals, v):
        out = -lf_divergence(rho.values, v, a, h)
        qv = _resolve(q, rho, t)
        if qv is not None:
            out = out + qv
        return out

    k1 = rhs(state.rho, state.t, U0, v0)
    mid = RingField(grid, state.rho.values + 0.5 * dt * k1)
    tm = state.t + 0.5 * dt
    Um = _resolve(U, mid, tm)
    vm = _transport_speed(kernel, mid, Um, d, tm)
    k2 = rhs(mid, tm, Um, vm)
    new = state.rho.values + dt * k2
    new, clipped = clip_negative(new, h)
    out = MacroState(RingField(grid, new), state.rho_d, state.t + dt, state.clipped_mass + clipped)
    _guard_clipping(out)
    return out


def reference_rhs(rho_d: RingField, kernel: Kernel, alpha: float) -> np.ndarray:
    """Right-hand side ``-[rho_d V_d]_x`` of the reference dynamics."""
    vd = velocity_field(kernel, rho_d).values
    return -lf_divergence(rho_d.values, vd, alpha, rho_d.grid.cell_width)


def step_reference(
    rho_d: RingField, kernel: Kernel, dt: float, alpha: Optional[float] = None
) -> RingField:
    """Advance the reference density one midpoint step of ``rho_d_t + [rho_d V_d]_x = 0``."""
    h = rho_d.grid.cell_width
    vd = velocity_field(kernel, rho_d).values
    limit = admissible_dt(vd, h)
    if dt > limit * (1 + 1e-12):
        raise StepRejectedError(f"dt={dt:.3g} violates CFL (max {limit:.3g})", limit)
    a = float(np.abs(vd).max()) if alpha is None else float(alpha)
    k1 = reference_rhs(rho_d, kernel, a)
    mid = RingField(rho_d.grid, rho_d.values + 0.5 * dt * k1)
    k2 = reference_rhs(mid, kernel, a)
    return RingField(rho_d.grid, rho_d.values + dt * k2)


def clip_negative(values: np.ndarray, h: float):
    """Zero out negative samples; returns the new array and the mass removed."""
    neg = values < 0
    if not np.any(neg):
        return values, 0.0
    removed = float(-values[neg].sum() * h)
    values = np.where(neg, 0.0, values)
    return values, removed


def _guard_clipping(state: MacroState) -> None:
    mass = abs(state.rho_d.integral()) or 1.0
    if state.clipped_mass > CLIP_ABORT_FRACTION * mass:
        raise SimulationAbortedError(
            f"nonnegativity clipping removed {state.clipped_mass:.3g} "
            f"(> {CLIP_ABORT_FRACTION:g} N) by t={state.t:.4g}"
        )
    if state.clipped_mass > 0:
        log.debug("cumulative clipped mass %.3g at t=%.4g", state.clipped_mass, state.t)
