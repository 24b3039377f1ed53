"""Numerical checks of the Lyapunov differential inequalities.

All checks work on a sampled trajectory of ``eta(t) = ||e(t)||_2^2``. The
time derivative is estimated with second-order finite differences
(``numpy.gradient`` with second-order one-sided ends) and compared with the
right-hand side of the relevant inequality. A sample is a violation when
``lhs > rhs + tol`` with ``tol = 1e-3 * max|rhs| + 1e-8``.

A report whose theorem hypothesis does not hold is returned with
``hypothesis_met=False`` and no violations; it is informational, not a
failure.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    HypothesisNotMetError,
    InvalidParameterError,
    TrajectoryTooShortError,
    UnknownModeError,
    UnsupportedRegimeError,
)
from .ring import DifferenceKernel, Kernel, RingField, RingGrid, ddx, lp_norm, window_kernel

REL_TOL = 1e-3
ABS_TOL = 1e-8


@dataclass(frozen=True)
class BoundConstants:
    """Norm bounds entering the theorem inequalities."""

    M: float = 0.0
    L: float = 0.0
    D1: float = 0.0
    D2: float = 0.0
    g_norm: float = 0.0
    gx_norm: float = 0.0
    gtilde_norm: float = 0.0
    gtildex_norm: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0 or not np.isfinite(value):
                raise InvalidParameterError(f"bound constant {name} must be finite and >= 0, got {value}")

    def to_dict(self) -> dict:
        return asdict(self)


def kernel_norms(kernel: Kernel, grid: RingGrid):
    """``(||k||_2, ||k_x||_2)`` on the grid, with the central-difference derivative."""
    k = kernel.on_grid(grid)
    return lp_norm(k, 2), lp_norm(ddx(k), 2)


def measure_constants(
    grid: RingGrid,
    rho_d_l2: Iterable[float],
    rho_d_x_l2: Iterable[float],
    plant_kernel: Kernel,
    sensing_radius: float = np.pi,
    controller_kernel: Optional[Kernel] = None,
    D1: float = 0.0,
    D2: float = 0.0,
) -> BoundConstants:
    """Bound constants over a run: ``M`` and ``L`` are maxima of the recorded
    reference norms; the kernel terms use ``g = window(f, delta) - f`` and
    ``g~ = f~ - f``."""
    g = DifferenceKernel(window_kernel(plant_kernel, sensing_radius), plant_kernel)
    gn, gxn = kernel_norms(g, grid)
    gtn = gtxn = 0.0
    if controller_kernel is not None:
        gtn, gtxn = kernel_norms(DifferenceKernel(controller_kernel, plant_kernel), grid)
    return BoundConstants(
        M=float(np.max(np.asarray(list(rho_d_l2), dtype=float))),
        L=float(np.max(np.asarray(list(rho_d_x_l2), dtype=float))),
        D1=float(D1),
        D2=float(D2),
        g_norm=gn,
        gx_norm=gxn,
        gtilde_norm=gtn,
        gtildex_norm=gtxn,
    )


@dataclass
class BoundReport:
    kind: str
    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    satisfied: np.ndarray
    margin: np.ndarray
    tolerance: float
    hypothesis_met: bool = True
    note: str = ""
    envelope: Optional[np.ndarray] = None
    envelope_ok: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)

    @property
    def violations(self) -> int:
        if not self.hypothesis_met:
            return 0
        n = int(np.count_nonzero(~self.satisfied))
        if self.envelope_ok is not None:
            n += int(np.count_nonzero(~self.envelope_ok))
        return n

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "samples": int(self.t.size),
            "violations": self.violations,
            "hypothesis_met": self.hypothesis_met,
            "min_margin": float(np.min(self.margin)) if self.margin.size else 0.0,
            "tolerance": self.tolerance,
            "note": self.note,
            **self.extras,
        }


def _prepare(t, err_l2):
    t = np.asarray(t, dtype=float)
    e = np.asarray(err_l2, dtype=float)
    if t.size < 3 or t.size != e.size:
        raise TrajectoryTooShortError(
            f"bound checks need at least 3 matching samples, got {t.size}/{e.size}"
        )
    eta = e**2
    lhs = np.gradient(eta, t, edge_order=2)
    return t, e, eta, lhs


def _report(kind, t, lhs, rhs, **kw) -> BoundReport:
    tol = REL_TOL * float(np.max(np.abs(rhs))) + ABS_TOL
    margin = rhs - lhs
    return BoundReport(kind, t, lhs, rhs, margin >= -tol, margin, tol, **kw)


def limited_sensing_rate(constants: BoundConstants, kp: float, err_l2):
    c = constants
    return -2 * kp + 2 * c.M * c.gx_norm + 2 * c.L * c.g_norm + c.gx_norm * np.asarray(err_l2)


def check_limited_sensing_inequality(t, err_l2, constants: BoundConstants, kp: float) -> BoundReport:
    """``d/dt ||e||^2 <= (-2Kp + 2M||g_x|| + 2L||g|| + ||g_x|| ||e||) ||e||^2``."""
    t, e, eta, lhs = _prepare(t, err_l2)
    rhs = limited_sensing_rate(constants, kp, e) * eta
    return _report("limited-sensing", t, lhs, rhs)


def kernel_perturbation_rate(constants: BoundConstants, kp: float, err_l2):
    c = constants
    return (
        -2 * kp
        + 3 * c.M * c.gtildex_norm
        + 2 * c.L * c.gtilde_norm
        + c.gtildex_norm * np.asarray(err_l2)
    )


def check_kernel_perturbation_inequality(
    t, err_l2, constants: BoundConstants, kp: float
) -> BoundReport:
    """``d/dt ||e||^2 <= (-2Kp + 3M||g~_x|| + 2L||g~|| + ||g~_x|| ||e||) ||e||^2``."""
    t, e, eta, lhs = _prepare(t, err_l2)
    rhs = kernel_perturbation_rate(constants, kp, e) * eta
    return _report("kernel-perturbation", t, lhs, rhs)


def disturbance_coefficients(constants: BoundConstants, kp: float):
    """``(a, c)`` of the scalar comparison system ``eta' = -a eta + c sqrt(eta)``."""
    c = constants
    return 2 * kp - c.D2, 2 * c.L * c.D1 + 2 * c.M * c.D2


def steady_state_bound(constants: BoundConstants, kp: float) -> float:
    """Asymptotic bound ``c^2 / a^2`` on ``||e||_2^2`` under velocity disturbances."""
    a, c = disturbance_coefficients(constants, kp)
    if not a > 0:
        raise HypothesisNotMetError(f"2 Kp = {2 * kp:g} does not exceed D2 = {constants.D2:g}")
    return (c / a) ** 2


def comparison_ode_solve(a: float, c: float, eta0: float, horizon, rtol: float = 1e-10):
    """Solve ``v' = -a v + c sqrt(v)``, ``v(0) = eta0``.

    ``horizon`` is either a final time or an increasing array of sample
    times starting at 0. Integrates ``w = sqrt(v)``, which obeys the
    Lipschitz equation ``w' = (c - a w) / 2`` and yields the maximal
    solution when ``eta0 = 0``. Returns ``(t, v)``.
    """
    if not a > 0:
        raise UnsupportedRegimeError(f"comparison system needs a > 0, got a={a!r}")
    if c < 0 or eta0 < 0:
        raise UnsupportedRegimeError("comparison system needs c >= 0 and eta0 >= 0")
    t_eval = np.atleast_1d(np.asarray(horizon, dtype=float))
    if t_eval.size == 1:
        t_eval = np.linspace(0.0, float(t_eval[0]), 201)
    if t_eval[-1] == t_eval[0]:
        return t_eval, np.full(t_eval.shape, float(eta0))
    sol = solve_ivp(
        lambda _, w: 0.5 * (c - a * w),
        (t_eval[0], t_eval[-1]),
        [np.sqrt(eta0)],
        t_eval=t_eval,
        method="DOP853",
        rtol=rtol,
        atol=1e-14,
    )
    return t_eval, sol.y[0] ** 2


def check_disturbance_inequality(t, err_l2, constants: BoundConstants, kp: float) -> BoundReport:
    """``eta' <= -a eta + c sqrt(eta)`` plus domination by the comparison solution."""
    t, e, eta, lhs = _prepare(t, err_l2)
    a, c = disturbance_coefficients(constants, kp)
    if not a > 0:
        rhs = -a * eta + c * np.sqrt(eta)
        return BoundReport(
            "disturbance", t, lhs, rhs, np.ones(t.size, bool), rhs - lhs, 0.0,
            hypothesis_met=False, note=f"2Kp={2 * kp:g} <= D2={constants.D2:g}",
        )
    rhs = -a * eta + c * np.sqrt(eta)
    rep = _report("disturbance", t, lhs, rhs, extras={"a": a, "c": c, "equilibrium": (c / a) ** 2})
    _, env = comparison_ode_solve(a, c, float(eta[0]), t - t[0])
    env_tol = REL_TOL * float(np.max(env)) + ABS_TOL
    rep.envelope = env
    rep.envelope_ok = eta <= env + env_tol
    return rep


def nominal_check(t, err_l2, kp: float) -> BoundReport:
    """Unperturbed decay ``d/dt ||e||^2 <= -2 Kp ||e||^2``."""
    return check_limited_sensing_inequality(t, err_l2, BoundConstants(), kp)


def gain_threshold(kind: str, constants: BoundConstants, gamma: float) -> float:
    """Gain above which the error is guaranteed not to grow inside ``||e|| < gamma``."""
    c = constants
    if kind == "limited-sensing":
        return (c.M + gamma / 2) * c.gx_norm + c.L * c.g_norm
    if kind == "kernel-perturbation":
        return c.gtildex_norm * gamma / 2 + 1.5 * c.M * c.gtildex_norm + c.L * c.gtilde_norm
    raise UnknownModeError(f"no gain threshold for {kind!r}")


def check(kind: str, t, err_l2, constants: BoundConstants, kp: float) -> BoundReport:
    """Dispatch to the inequality check for ``kind``."""
    if kind == "nominal":
        rep = check_limited_sensing_inequality(t, err_l2, constants, kp)
        rep.kind = "nominal"
        return rep
    if kind == "limited-sensing":
        return check_limited_sensing_inequality(t, err_l2, constants, kp)
    if kind == "disturbance":
        return check_disturbance_inequality(t, err_l2, constants, kp)
    if kind == "kernel-perturbation":
        return check_kernel_perturbation_inequality(t, err_l2, constants, kp)
    raise UnknownModeError(f"unknown bound kind {kind!r}")
