"""Receding-horizon sampling planner: enumerate a command grid, roll each
candidate forward, filter by the barrier constraint and by immobilization,
and execute the cheapest surviving command.

Costs combine normalized control effort, terminal distance to goal, and
accumulated tilt; the barrier constraint is checked on the first transition
of every candidate (the one that will actually be executed) and re-checked
every replanning step.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError
from .terrain import DEFAULT_PATCH, Heightfield, PatchConfig, extract_patch, extract_patches
from .labeling import DEFAULT_U_MAX, DEFAULT_U_MIN
from .vehicle import (
    DEFAULT_GEOMETRY,
    DEFAULT_TRACTION,
    Control,
    RobotState,
    StepResult,
    TractionParams,
    Trajectory,
    VehicleGeometry,
    _step_many,
    step,
)


class CbfForm(enum.Enum):
    """Which discrete barrier-decrease inequality gates a candidate.

    PRODUCT matches the trained loss term: h_next * u_e + gamma * h_t >= 0.
    STRICT is the conventional decrease condition h_next - h_t >= -gamma * h_t.

    STRICT is the default: the trained control encoder can settle at very
    small magnitudes (the product term then degenerates to a go/stop test on
    sign(h_t) and stops discriminating between candidate commands), while the
    strict form always ranks candidates by the raw barrier value ahead.
    """

    PRODUCT = "product"
    STRICT = "strict"


class Outcome(enum.Enum):
    REACHED = "reached"
    PAUSED_INFEASIBLE = "paused_infeasible"
    IMMOBILIZED = "immobilized"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True)
class PlannerConfig:
    # Objective weights. The control-effort weight is deliberately small
    # relative to the goal weight: effort uses bound-normalized commands, and
    # anything larger pins the argmin at the slowest command on open ground.
    lambda1: float = 0.05
    lambda2: float = 1.0
    lambda3: float = 0.02
    w_x: float = 1.0
    w_y: float = 1.0
    w_r: float = 1.0
    w_p: float = 1.0
    horizon: int = 10
    goal_tol: float = 0.1
    u_min: Control = DEFAULT_U_MIN
    u_max: Control = DEFAULT_U_MAX
    v_samples: int = 11
    omega_samples: int = 11
    alpha_gamma: float = 0.5
    cbf_form: CbfForm = CbfForm.STRICT
    cbf_enabled: bool = True
    max_steps: int = 600

    def __post_init__(self):
        if self.horizon < 1:
            raise ValidationError("horizon must be >= 1")
        if self.goal_tol <= 0:
            raise ValidationError("goal_tol must be > 0")
        if min(self.lambda1, self.lambda2, self.lambda3,
               self.w_x, self.w_y, self.w_r, self.w_p) < 0:
            raise ValidationError("weights must be nonnegative")
        if self.v_samples < 1 or self.omega_samples < 1:
            raise ValidationError("need at least one sample per command axis")
        if self.u_min.v > self.u_max.v or self.u_min.omega > self.u_max.omega:
            raise ValidationError("u_min must not exceed u_max componentwise")
        if not 0.0 <= self.alpha_gamma < 1.0:
            raise ValidationError("alpha_gamma must lie in [0, 1)")
        if self.max_steps < 1:
            raise ValidationError("max_steps must be >= 1")


def control_grid(cfg: PlannerConfig) -> tuple[np.ndarray, np.ndarray]:
    """Candidate commands as aligned (v, omega) arrays, v-major order."""
    vs = np.linspace(cfg.u_min.v, cfg.u_max.v, cfg.v_samples)
    oms = np.linspace(cfg.u_min.omega, cfg.u_max.omega, cfg.omega_samples)
    vv, oo = np.meshgrid(vs, oms, indexing="ij")
    return vv.ravel(), oo.ravel()


def goal_cost(state: RobotState, goal: tuple[float, float], cfg: PlannerConfig) -> float:
    return cfg.w_x * abs(state.x - goal[0]) + cfg.w_y * abs(state.y - goal[1])


def stability_cost(state: RobotState, cfg: PlannerConfig) -> float:
    return cfg.w_r * abs(state.roll) + cfg.w_p * abs(state.pitch)


def control_effort(u: Control, cfg: PlannerConfig) -> float:
    """Euclidean norm of the command with each axis normalized by its bound."""
    vs = max(abs(cfg.u_min.v), abs(cfg.u_max.v)) or 1.0
    ws = max(abs(cfg.u_min.omega), abs(cfg.u_max.omega)) or 1.0
    return math.hypot(u.v / vs, u.omega / ws)


def _cbf_margin(h_t, h_next, u_e, cfg: PlannerConfig):
    if cfg.cbf_form is CbfForm.PRODUCT:
        return h_next * u_e + cfg.alpha_gamma * h_t
    return h_next - (1.0 - cfg.alpha_gamma) * h_t


def cbf_feasible(net, o_t, o_next, u, cfg: PlannerConfig) -> bool:
    """Non-strict barrier-decrease check for one transition."""
    h_t = net.forward_h(o_t)
    h_next = net.forward_h(o_next)
    u_arr = np.array([[u.v, u.omega]]) if isinstance(u, Control) else u
    u_e = net.encode_control(u_arr)
    u_e = float(u_e[0]) if np.ndim(u_e) else float(u_e)
    return bool(_cbf_margin(float(h_t), float(h_next), u_e, cfg) >= 0.0)


def plan_step(
    hf: Heightfield,
    net,
    state: RobotState,
    goal: tuple[float, float],
    cfg: PlannerConfig = PlannerConfig(),
    traction: TractionParams = DEFAULT_TRACTION,
    geom: VehicleGeometry = DEFAULT_GEOMETRY,
    patch_cfg: PatchConfig = DEFAULT_PATCH,
) -> Control | None:
    """Best in-bounds command by grid search, or None when no candidate
    survives the barrier/immobilization/boundary filters."""
    if cfg.cbf_enabled and net is None:
        raise ValidationError("cbf_enabled requires a barrier network")

    v_arr, om_arr = control_grid(cfg)
    k = v_arr.size

    if cfg.cbf_enabled:
        try:
            o_t = extract_patch(hf, state, patch_cfg)
        except DomainError:
            return None

    # First transition of every candidate, in lockstep.
    ones = np.ones(k)
    first = _step_many(
        hf, state.x * ones, state.y * ones, state.pitch * ones,
        state.yaw * ones, v_arr, om_arr, traction, geom,
    )
    alive = first["ok"] & ~first["immobilized"]

    if cfg.cbf_enabled and alive.any():
        idx = np.flatnonzero(alive)
        patches, p_ok = extract_patches(
            hf, first["x"][idx], first["y"][idx], first["z"][idx],
            first["yaw"][idx], patch_cfg,
        )
        alive[idx[~p_ok]] = False
        if p_ok.any():
            h_t = float(net.forward_h(o_t))
            h_next = net.forward_h(patches[p_ok])
            u_e = net.encode_control(
                np.column_stack([v_arr[idx[p_ok]], om_arr[idx[p_ok]]])
            )
            margins = _cbf_margin(h_t, h_next, u_e, cfg)
            alive[idx[p_ok]] &= margins >= 0.0

    if not alive.any():
        return None

    # Deepen the surviving rollouts, holding each candidate command fixed.
    idx = np.flatnonzero(alive)
    cx, cy = first["x"][idx], first["y"][idx]
    cpitch, croll = first["pitch"][idx], first["roll"][idx]
    cyaw = first["yaw"][idx]
    stab = cfg.w_r * np.abs(croll) + cfg.w_p * np.abs(cpitch)
    live = np.ones(idx.size, dtype=bool)
    for _ in range(cfg.horizon - 1):
        out = _step_many(hf, cx, cy, cpitch, cyaw, v_arr[idx], om_arr[idx],
                         traction, geom)
        live &= out["ok"] & ~out["immobilized"]
        if not live.any():
            break
        cx, cy = np.where(live, out["x"], cx), np.where(live, out["y"], cy)
        cpitch = np.where(live, out["pitch"], cpitch)
        croll = np.where(live, out["roll"], croll)
        cyaw = np.where(live, out["yaw"], cyaw)
        stab += np.where(live, cfg.w_r * np.abs(croll) + cfg.w_p * np.abs(cpitch), 0.0)
    if not live.any():
        return None

    vs = max(abs(cfg.u_min.v), abs(cfg.u_max.v)) or 1.0
    ws = max(abs(cfg.u_min.omega), abs(cfg.u_max.omega)) or 1.0
    best_key = None
    best_u = None
    for j in np.flatnonzero(live):
        g = idx[j]
        effort = math.hypot(v_arr[g] / vs, om_arr[g] / ws)
        gcost = cfg.w_x * abs(cx[j] - goal[0]) + cfg.w_y * abs(cy[j] - goal[1])
        cost = cfg.lambda1 * effort + cfg.lambda2 * gcost + cfg.lambda3 * stab[j]
        key = (cost, effort, abs(om_arr[g]), v_arr[g], om_arr[g])
        if best_key is None or key < best_key:
            best_key = key
            best_u = Control(float(v_arr[g]), float(om_arr[g]))
    return best_u


def navigate(
    hf: Heightfield,
    net,
    start: RobotState,
    goal: tuple[float, float],
    cfg: PlannerConfig = PlannerConfig(),
    traction: TractionParams = DEFAULT_TRACTION,
    geom: VehicleGeometry = DEFAULT_GEOMETRY,
    patch_cfg: PatchConfig = DEFAULT_PATCH,
    budget: int | None = None,
) -> tuple[Trajectory, Outcome]:
    """Receding-horizon loop: replan every step, execute the first command,
    stop on goal, infeasibility, immobilization, or budget."""
    if budget is None:
        budget = cfg.max_steps

    def h_of(s: RobotState) -> float:
        if net is None:
            return math.nan
        try:
            return float(net.forward_h(extract_patch(hf, s, patch_cfg)))
        except DomainError:
            return math.nan

    states = [start]
    controls: list[Control] = []
    h_values = [h_of(start)]
    state = start
    outcome = Outcome.BUDGET_EXHAUSTED
    for _ in range(budget):
        if math.hypot(state.x - goal[0], state.y - goal[1]) < cfg.goal_tol:
            outcome = Outcome.REACHED
            break
        u = plan_step(hf, net, state, goal, cfg, traction, geom, patch_cfg)
        if u is None:
            outcome = Outcome.PAUSED_INFEASIBLE
            break
        try:
            res = step(hf, state, u, traction, geom)
        except DomainError:
            outcome = Outcome.PAUSED_INFEASIBLE
            break
        states.append(res.next)
        controls.append(u)
        h_values.append(h_of(res.next))
        state = res.next
        if res.immobilized:
            outcome = Outcome.IMMOBILIZED
            break
    else:
        if math.hypot(state.x - goal[0], state.y - goal[1]) < cfg.goal_tol:
            outcome = Outcome.REACHED

    traj = Trajectory(
        states=states, controls=controls, dt=traction.dt,
        immobilized=outcome is Outcome.IMMOBILIZED,
        infeasible=outcome is Outcome.PAUSED_INFEASIBLE,
        h_values=h_values if net is not None else None,
    )
    return traj, outcome
