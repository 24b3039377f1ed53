"""Macroscopic control synthesis.

The source-form law is

    q = Kp e - [e V_d]_x - [rho V_e]_x + Ki * int_0^t e dtau

with ``V_d = f~ * rho_d`` and ``V_e = window(f~, delta) * e``; the nominal law
is recovered with ``f~ = f``, ``delta = pi`` and ``Ki = 0``. The source is
then converted into a velocity field ``U`` solving ``[rho U]_x = -q`` and
sampled at the agent positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import (
    InvalidParameterError,
    NoPeriodicSolutionError,
    UnknownModeError,
)
from .ring import (
    TWO_PI,
    DifferenceKernel,
    Kernel,
    RingField,
    circular_convolution,
    ddx,
    window_kernel,
    wrap_angle,
    _check_same_grid,
)

#: Relative tolerance on ``|int q| / ||q||_1`` accepted by :func:`compute_U`.
PERIODICITY_RTOL = 1e-6


@dataclass(frozen=True)
class ControllerConfig:
    """Gains and model knowledge of the macroscopic controller.

    ``rho_floor`` and ``integral_clamp`` default to ``1e-3 N / 2pi`` and
    ``10 N / 2pi``; leave them ``None`` to have them derived from the
    density mass at run time.
    """

    kp: float
    controller_kernel: Kernel
    ki: float = 0.0
    sensing_radius: float = np.pi
    rho_floor: Optional[float] = None
    integral_clamp: Optional[float] = None

    def __post_init__(self):
        if not self.kp > 0:
            raise InvalidParameterError(f"kp must be positive, got {self.kp!r}")
        if self.ki < 0:
            raise InvalidParameterError(f"ki must be >= 0, got {self.ki!r}")
        if not (0 < self.sensing_radius <= np.pi * (1 + 1e-12)):
            raise InvalidParameterError(
                f"sensing radius must lie in (0, pi], got {self.sensing_radius!r}"
            )
        if self.rho_floor is not None and not self.rho_floor > 0:
            raise InvalidParameterError("rho_floor must be positive")

    @property
    def sensing_kernel(self) -> Kernel:
        if self.sensing_radius >= np.pi:
            return self.controller_kernel
        return window_kernel(self.controller_kernel, self.sensing_radius)

    def with_mass(self, mass: float) -> "ControllerConfig":
        """Fill the mass-dependent defaults."""
        return replace(
            self,
            rho_floor=self.rho_floor if self.rho_floor is not None else 1e-3 * mass / TWO_PI,
            integral_clamp=(
                self.integral_clamp if self.integral_clamp is not None else 10.0 * mass / TWO_PI
            ),
        )


@dataclass
class IntegralState:
    """Running time integral of the error field."""

    accumulated: RingField
    clamp: Optional[float] = None

    @classmethod
    def zeros_like(cls, e: RingField, clamp: Optional[float] = None) -> "IntegralState":
        return cls(e.grid.zeros(), clamp)


def compute_q(
    e: RingField,
    rho: RingField,
    rho_d: RingField,
    config: ControllerConfig,
    integral: Optional[IntegralState] = None,
    reference_source: Optional[RingField] = None,
) -> RingField:
    """Macroscopic control source.

    ``reference_source`` is an optional feed-forward added to ``q``; it is
    used when the desired density is held fixed instead of following its
    own transport (see :mod:`ringswarm.simulation`).
    """
    _check_same_grid(e, rho, rho_d)
    vd = circular_convolution(config.controller_kernel, rho_d)
    ve = circular_convolution(config.sensing_kernel, e)
    q = config.kp * e.values - ddx(e * vd).values - ddx(rho * ve).values
    if integral is not None and config.ki:
        q = q + config.ki * integral.accumulated.values
    if reference_source is not None:
        q = q + reference_source.values
    return RingField(e.grid, q)


def project_zero_mean(q: RingField):
    """Remove the mean of ``q``; returns the projected field and the removed integral."""
    total = q.integral()
    return RingField(q.grid, q.values - total / TWO_PI), total


def compute_U(q: RingField, rho: RingField, config: ControllerConfig) -> RingField:
    """Velocity field ``U`` with ``[rho U]_x = -q``.

    The flux ``W = rho U`` is the trapezoidal antiderivative of ``-q``, shifted
    so that ``int W dx = 0``; ``rho`` is floored at ``config.rho_floor``
    before dividing.
    """
    grid = _check_same_grid(q, rho)
    h = grid.cell_width
    qv = q.values
    l1 = h * np.abs(qv).sum()
    total = h * qv.sum()
    if abs(total) > PERIODICITY_RTOL * l1 + 1e-12:
        raise NoPeriodicSolutionError(
            f"int q dx = {total:.3g} is not zero; no periodic U exists"
        )
    qv = qv - total / TWO_PI
    Q = np.empty_like(qv)
    Q[0] = 0.0
    np.cumsum(0.5 * h * (qv[:-1] + qv[1:]), out=Q[1:])
    W = -(Q - Q.mean())
    floor = config.rho_floor
    if floor is None:
        floor = 1e-3 * rho.integral() / TWO_PI
    return RingField(grid, W / np.maximum(rho.values, floor))


def sample_control(U: RingField, positions) -> np.ndarray:
    """Periodic linear interpolation of ``U`` at the agent positions."""
    x = np.asarray(getattr(positions, "positions", positions), dtype=float)
    grid = U.grid
    return np.interp(wrap_angle(x), grid.x, U.values, period=TWO_PI)


def update_integral(
    integral: IntegralState, e: RingField, dt: float, e_next: Optional[RingField] = None
) -> IntegralState:
    """Accumulate ``e dt``.

    With ``e_next`` the trapezoidal rule is used, otherwise the left
    rectangle rule. Samples are clamped to ``+/- integral.clamp``.
    """
    if not dt > 0:
        raise InvalidParameterError(f"dt must be positive, got {dt!r}")
    inc = e.values if e_next is None else 0.5 * (e.values + e_next.values)
    acc = integral.accumulated.values + dt * inc
    if integral.clamp is not None:
        acc = np.clip(acc, -integral.clamp, integral.clamp)
    return IntegralState(RingField(e.grid, acc), integral.clamp)


ERROR_MODES = ("nominal", "limited-sensing", "disturbance", "kernel-perturbation")


def error_rhs_closed_form(
    e: RingField,
    rho_d: RingField,
    rho: RingField,
    config: ControllerConfig,
    mode: str,
    plant_kernel: Optional[Kernel] = None,
    disturbance: Optional[RingField] = None,
) -> RingField:
    """Closed-form error dynamics ``e_t`` predicted for each perturbation.

    * ``limited-sensing``: ``-Kp e + [rho_d (g*e)]_x - [e (g*e)]_x`` with
      ``g = window(f, delta) - f``.
    * ``disturbance``: ``-Kp e + [(rho_d - e) d]_x``.
    * ``kernel-perturbation``: ``-Kp e + [e (g~*rho_d)]_x + [(rho_d - e)(g~*e)]_x``
      with ``g~ = f~ - f``.

    Derivatives use the same central differences as :func:`compute_q`.
    """
    _check_same_grid(e, rho_d, rho)
    kp = config.kp
    if mode == "nominal":
        return -kp * e
    if mode == "limited-sensing":
        f = plant_kernel or config.controller_kernel
        g = DifferenceKernel(window_kernel(f, config.sensing_radius), f)
        vt = circular_convolution(g, e)
        return -kp * e + ddx(rho_d * vt) - ddx(e * vt)
    if mode == "disturbance":
        if disturbance is None:
            raise InvalidParameterError("disturbance mode needs the sampled field d")
        return -kp * e + ddx((rho_d - e) * disturbance)
    if mode == "kernel-perturbation":
        if plant_kernel is None:
            raise InvalidParameterError("kernel-perturbation mode needs the plant kernel")
        gt = DifferenceKernel(config.controller_kernel, plant_kernel)
        ud = circular_convolution(gt, rho_d)
        ue = circular_convolution(gt, e)
        return -kp * e + ddx(e * ud) + ddx((rho_d - e) * ue)
    raise UnknownModeError(f"unknown error-dynamics mode {mode!r}; expected one of {ERROR_MODES}")
