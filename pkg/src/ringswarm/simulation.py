"""Closed-loop drivers coupling the reference, the controller and the plant.

Two plants are supported:

``macro``
    the density PDE driven directly by the source ``q``; plant, reference
    and error integral are advanced together by one midpoint step that
    shares the Lax-Friedrichs coefficient, so the discrete error obeys the
    same cancellations as the continuous one.
``micro``
    ``N`` agents driven by ``u_i = U(x_i)``, with ``U`` synthesized from the
    kernel density estimate of the agents (zero-order hold per step).

The desired density either follows its own transport (``advected``) or is
held at its initial profile (``stationary``). A held profile is not a
solution of the reference transport, so the controller then adds the
feed-forward source ``[rho_d (f~ * rho_d)]_x`` that would hold it in place;
with this term every error-dynamics identity of the advected case is
preserved except under kernel mismatch, where the feed-forward itself is
computed with the wrong kernel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .controller import (
    ControllerConfig,
    IntegralState,
    compute_q,
    compute_U,
    project_zero_mean,
    sample_control,
    update_integral,
)
from .errors import InvalidParameterError, SimulationAbortedError
from .macro import (
    CFL,
    DisturbanceField,
    NoDisturbance,
    admissible_dt,
    clip_negative,
    lf_divergence,
    step_reference,
    velocity_field,
    CLIP_ABORT_FRACTION,
)
from .micro import AgentEnsemble, estimate_density, interaction_velocity, step_agents
from .ring import Kernel, RingField, RingGrid, circular_convolution, ddx, kl_divergence, lp_norm

log = logging.getLogger(__name__)

LOOP_MODES = ("macro", "micro")
REFERENCE_MODES = ("advected", "stationary")


@dataclass
class Snapshot:
    t: float
    x: np.ndarray
    rho: np.ndarray
    rho_d: np.ndarray
    u_field: np.ndarray


@dataclass
class SimulationRecord:
    """Per-step samples of one closed-loop run."""

    t: List[float] = field(default_factory=list)
    err_l2: List[float] = field(default_factory=list)
    kl: List[float] = field(default_factory=list)
    mass: List[float] = field(default_factory=list)
    ref_mass: List[float] = field(default_factory=list)
    rho_d_l2: List[float] = field(default_factory=list)
    rho_d_x_l2: List[float] = field(default_factory=list)
    q_residual: List[float] = field(default_factory=list)
    snapshots: List[Snapshot] = field(default_factory=list)
    clipped_mass: float = 0.0
    final_rho: Optional[RingField] = None
    final_rho_d: Optional[RingField] = None
    final_agents: Optional[AgentEnsemble] = None

    def arrays(self) -> Dict[str, np.ndarray]:
        keys = ("t", "err_l2", "kl", "mass", "ref_mass", "rho_d_l2", "rho_d_x_l2", "q_residual")
        return {k: np.asarray(getattr(self, k), dtype=float) for k in keys}


@dataclass
class ClosedLoop:
    grid: RingGrid
    plant_kernel: Kernel
    config: ControllerConfig
    rho_d0: RingField
    n_agents: int
    mode: str = "micro"
    reference: str = "advected"
    disturbance: DisturbanceField = field(default_factory=NoDisturbance)
    bandwidth: Optional[float] = None
    agents0: Optional[AgentEnsemble] = None
    rho0: Optional[RingField] = None
    dt_max: float = 0.01
    stiffness_factor: float = 0.2

    def __post_init__(self):
        if self.mode not in LOOP_MODES:
            raise InvalidParameterError(f"loop mode must be one of {LOOP_MODES}, got {self.mode!r}")
        if self.reference not in REFERENCE_MODES:
            raise InvalidParameterError(
                f"reference must be one of {REFERENCE_MODES}, got {self.reference!r}"
            )
        self.config = self.config.with_mass(float(self.n_agents))
        if self.agents0 is None:
            self.agents0 = AgentEnsemble.evenly_spaced(self.n_agents)
        if self.rho0 is None:
            self.rho0 = estimate_density(self.agents0, self.grid, self.bandwidth)

    # -- helpers ---------------------------------------------------------
    def _dt_limit(self, speed: float) -> float:
        gains = self.config.kp + np.sqrt(self.config.ki)
        dt = min(self.dt_max, self.stiffness_factor / gains)
        if speed > 0:
            dt = min(dt, CFL * self.grid.cell_width / speed)
        return dt

    def _feedforward(self, rho_d: RingField, alpha: float) -> Optional[RingField]:
        if self.reference != "stationary":
            return None
        vt = circular_convolution(self.config.controller_kernel, rho_d)
        return RingField(
            self.grid, lf_divergence(rho_d.values, vt.values, alpha, self.grid.cell_width)
        )

    def _record(self, rec: SimulationRecord, t, rho, rho_d, q_res):
        e = rho_d - rho
        rec.t.append(t)
        rec.err_l2.append(lp_norm(e, 2))
        rec.kl.append(kl_divergence(rho, rho_d))
        rec.mass.append(rho.integral())
        rec.ref_mass.append(rho_d.integral())
        rec.rho_d_l2.append(lp_norm(rho_d, 2))
        rec.rho_d_x_l2.append(lp_norm(ddx(rho_d), 2))
        rec.q_residual.append(q_res)

    def _snapshot_due(self, t, pending: List[float], dt_next: float) -> bool:
        return bool(pending) and t >= pending[0] - 1e-12

    # -- run -------------------------------------------------------------
    def run(self, t_final: float, snapshot_times: Sequence[float] = ()) -> SimulationRecord:
        if t_final < 0:
            raise InvalidParameterError("t_final must be >= 0")
        pending = sorted(float(s) for s in snapshot_times if 0 <= s <= t_final)
        if self.mode == "macro":
            return self._run_macro(t_final, pending)
        return self._run_micro(t_final, pending)

    def _run_macro(self, t_final, pending) -> SimulationRecord:
        grid, h, cfg = self.grid, self.grid.cell_width, self.config
        f = self.plant_kernel
        d = self.disturbance
        rho = self.rho0.copy()
        rho_d = self.rho_d0.copy()
        integ = IntegralState.zeros_like(rho, cfg.integral_clamp)
        rec = SimulationRecord()
        t = 0.0
        x = grid.x

        stationary = self.reference == "stationary"
        if stationary:
            # rho_d never moves, so its feed-forward is A + alpha * B for fixed A, B
            rd_v = rho_d.values
            vt = circular_convolution(cfg.controller_kernel, rho_d).values
            ff_adv = lf_divergence(rd_v, vt, 0.0, h)
            ff_diff = lf_divergence(rd_v, np.zeros_like(rd_v), 1.0, h)
            vd_fixed = velocity_field(f, rho_d).values

        def plant_speed(rho_v, t):
            v = velocity_field(f, RingField(grid, rho_v)).values
            if not d.is_zero():
                v = v + d(x, t)
            return v

        def stage(rho_v, rhod_v, int_v, t, alpha, v=None):
            r = RingField(grid, rho_v)
            rd = RingField(grid, rhod_v)
            e = rd - r
            ff = RingField(grid, ff_adv + alpha * ff_diff) if stationary else None
            q = compute_q(e, r, rd, cfg, IntegralState(RingField(grid, int_v)), reference_source=ff)
            if v is None:
                v = plant_speed(rho_v, t)
            drho = -lf_divergence(rho_v, v, alpha, h) + q.values
            if stationary:
                drhod = np.zeros_like(rhod_v)
            else:
                drhod = -lf_divergence(rhod_v, velocity_field(f, rd).values, alpha, h)
            return drho, drhod, e.values, q

        def speeds(rho_v, rhod_v, t):
            v = plant_speed(rho_v, t)
            vd = vd_fixed if stationary else velocity_field(f, RingField(grid, rhod_v)).values
            return v, max(np.abs(v).max(), np.abs(vd).max())

        self._record(rec, t, rho, rho_d, 0.0)
        while True:
            v0, alpha = speeds(rho.values, rho_d.values, t)
            dt = self._dt_limit(alpha)
            if pending and t >= pending[0] - 1e-12:
                _, _, _, q = stage(rho.values, rho_d.values, integ.accumulated.values, t, alpha, v0)
                U = compute_U(project_zero_mean(q)[0], rho, cfg)
                rec.snapshots.append(Snapshot(t, x.copy(), rho.values.copy(), rho_d.values.copy(), U.values))
                pending.pop(0)
            if t >= t_final - 1e-12:
                break
            dt = min(dt, t_final - t)
            d.check_periodic(t)
            I0 = integ.accumulated.values
            k1 = stage(rho.values, rho_d.values, I0, t, alpha, v0)
            tm = t + 0.5 * dt
            k2 = stage(
                rho.values + 0.5 * dt * k1[0],
                rho_d.values + 0.5 * dt * k1[1],
                I0 + 0.5 * dt * k1[2],
                tm,
                alpha,
            )
            new_rho, clipped = clip_negative(rho.values + dt * k2[0], h)
            rec.clipped_mass += clipped
            rho = RingField(grid, new_rho)
            rho_d = RingField(grid, rho_d.values + dt * k2[1])
            acc = I0 + dt * k2[2]
            if integ.clamp is not None:
                acc = np.clip(acc, -integ.clamp, integ.clamp)
            integ = IntegralState(RingField(grid, acc), integ.clamp)
            t += dt
            if rec.clipped_mass > CLIP_ABORT_FRACTION * self.n_agents:
                raise SimulationAbortedError(
                    f"clipping removed {rec.clipped_mass:.3g} mass by t={t:.4g}"
                )
            self._record(rec, t, rho, rho_d, k2[3].integral())
        rec.final_rho, rec.final_rho_d = rho, rho_d
        return rec

    def _run_micro(self, t_final, pending) -> SimulationRecord:
        grid, cfg = self.grid, self.config
        f = self.plant_kernel
        d = self.disturbance
        agents = self.agents0
        rho_d = self.rho_d0.copy()
        integ = IntegralState.zeros_like(rho_d, cfg.integral_clamp)
        rec = SimulationRecord()
        t = 0.0
        h = grid.cell_width
        while True:
            rho = estimate_density(agents, grid, self.bandwidth)
            e = rho_d - rho
            ff = None
            if self.reference == "stationary":
                vt = circular_convolution(cfg.controller_kernel, rho_d)
                ff = ddx(rho_d * vt)
            q = compute_q(e, rho, rho_d, cfg, integ, reference_source=ff)
            q, q_res = project_zero_mean(q)
            self._record(rec, t, rho, rho_d, q_res)
            U = compute_U(q, rho, cfg)
            if pending and t >= pending[0] - 1e-12:
                rec.snapshots.append(Snapshot(t, grid.x.copy(), rho.values.copy(), rho_d.values.copy(), U.values))
                pending.pop(0)
            if t >= t_final - 1e-12:
                break
            u = sample_control(U, agents)
            if not d.is_zero():
                d.check_periodic(t)
                u = u + d(agents.positions, t)
            vint = interaction_velocity(agents, f)
            v = vint + u
            speed = float(np.abs(v).max())
            vd = 0.0
            if self.reference == "advected":
                vd = float(np.abs(velocity_field(f, rho_d).values).max())
            dt = min(self._dt_limit(max(speed, vd)), t_final - t)
            agents = step_agents(agents, f, u, dt, max_displacement=h, interaction=vint)
            if self.reference == "advected":
                rho_d = step_reference(rho_d, f, dt)
            if cfg.ki:
                integ = update_integral(integ, e, dt)
            t += dt
        rec.final_rho, rec.final_rho_d, rec.final_agents = rho, rho_d, agents
        return rec


@dataclass
class ConsistencyRecord:
    t: np.ndarray
    kl: np.ndarray
    final_kde: RingField
    final_rho: RingField


def micro_macro_consistency(
    agents0: AgentEnsemble,
    rho0: RingField,
    kernel: Kernel,
    t_final: float,
    bandwidth: Optional[float] = None,
    dt_max: float = 0.01,
) -> ConsistencyRecord:
    """Evolve agents and the density PDE side by side without control.

    Both are advanced with a shared step, the tighter of the PDE's CFL
    limit and half a cell of agent travel. ``kl[k]`` is
    ``KL(KDE of agents || rho)`` at ``t[k]``.
    """
    grid = rho0.grid
    h = grid.cell_width
    agents, rho = agents0, rho0.copy()
    t = 0.0
    ts, kls = [], []
    clipped = 0.0
    while True:
        kde = estimate_density(agents, grid, bandwidth)
        ts.append(t)
        kls.append(kl_divergence(kde, rho))
        if t >= t_final - 1e-12:
            break
        v = velocity_field(kernel, rho).values
        vint = interaction_velocity(agents, kernel)
        vmax = max(float(np.abs(v).max()), float(np.abs(vint).max()))
        dt = min(dt_max, t_final - t)
        if vmax > 0:
            dt = min(dt, CFL * h / vmax)
        alpha = float(np.abs(v).max())
        k1 = -lf_divergence(rho.values, v, alpha, h)
        mid = RingField(grid, rho.values + 0.5 * dt * k1)
        k2 = -lf_divergence(mid.values, velocity_field(kernel, mid).values, alpha, h)
        new, c = clip_negative(rho.values + dt * k2, h)
        clipped += c
        if clipped > CLIP_ABORT_FRACTION * agents.n:
            raise SimulationAbortedError(f"clipping removed {clipped:.3g} mass by t={t:.4g}")
        rho = RingField(grid, new)
        agents = step_agents(agents, kernel, 0.0, dt, max_displacement=h, interaction=vint)
        t += dt
    return ConsistencyRecord(np.asarray(ts), np.asarray(kls), kde, rho)
