"""Analytic vehicle-terrain interaction: pose settling, single-step advance
with traction loss, and rollouts.

The model is deliberately simple: the chassis is a rigid plane fit through
four wheel contact points, forward motion follows a planar unicycle, and
uphill pitch scales traction down to a full stall. It exposes exactly the
failure modes the safety labels need (excess pitch, excess roll, hang-up,
stall) without simulating suspension or momentum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError
from .terrain import Heightfield, _bilinear


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    r = math.fmod(a + math.pi, 2.0 * math.pi)
    if r <= 0.0:
        r += 2.0 * math.pi
    return r - math.pi


@dataclass(frozen=True)
class RobotState:
    """Pose: position in meters, roll/pitch/yaw in radians, wrapped to (-pi, pi].

    Pitch is positive nose-up; roll is positive when the left side sits higher.
    """

    x: float
    y: float
    z: float
    roll: float
    pitch: float
    yaw: float

    def __post_init__(self):
        vals = (self.x, self.y, self.z, self.roll, self.pitch, self.yaw)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"non-finite state {vals}")
        object.__setattr__(self, "roll", wrap_angle(self.roll))
        object.__setattr__(self, "pitch", wrap_angle(self.pitch))
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))


@dataclass(frozen=True)
class Control:
    """Commanded translational velocity (m/s) and turn rate (rad/s)."""

    v: float
    omega: float

    def __post_init__(self):
        if not (math.isfinite(self.v) and math.isfinite(self.omega)):
            raise ValidationError(f"non-finite control ({self.v}, {self.omega})")

    def norm(self) -> float:
        return math.hypot(self.v, self.omega)


@dataclass(frozen=True)
class VehicleGeometry:
    length: float = 0.523
    width: float = 0.249
    height: float = 0.2
    wheelbase: float = 0.312
    clearance: float = 0.05

    def __post_init__(self):
        if min(self.length, self.width, self.height, self.wheelbase, self.clearance) <= 0:
            raise ValidationError("all geometry fields must be positive")
        if self.wheelbase >= self.length:
            raise ValidationError("wheelbase must be smaller than the body length")


@dataclass(frozen=True)
class TractionParams:
    slip_onset: float = 0.35  # uphill pitch where traction starts degrading
    stall_angle: float = 0.6  # uphill pitch of a full stall
    dt: float = 0.1

    def __post_init__(self):
        if not (0.0 < self.slip_onset < self.stall_angle < math.pi / 2):
            raise ValidationError(
                "need 0 < slip_onset < stall_angle < pi/2, got "
                f"({self.slip_onset}, {self.stall_angle})"
            )
        if self.dt <= 0:
            raise ValidationError("dt must be > 0")


DEFAULT_GEOMETRY = VehicleGeometry()
DEFAULT_TRACTION = TractionParams()


def _wheel_offsets(geom: VehicleGeometry) -> np.ndarray:
    """Robot-frame wheel contact points (forward, left), order FL FR RL RR."""
    a = geom.wheelbase / 2.0
    b = geom.width / 2.0
    return np.array([[a, b], [a, -b], [-a, b], [-a, -b]])


def _settle_many(hf: Heightfield, x, y, yaw, geom: VehicleGeometry):
    """Plane-fit settle for K poses at once.

    Returns (z, roll, pitch, max_residual, ok). ok is False where a wheel
    point leaves the field; those rows are zero-filled. The fit is the exact
    least-squares plane through the four wheel elevations (the wheel layout
    is symmetric, so the normal equations are diagonal).
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    yaw = np.asarray(yaw, float)
    off = _wheel_offsets(geom)  # (4, 2)
    c, s = np.cos(yaw), np.sin(yaw)
    wx = x[:, None] + off[None, :, 0] * c[:, None] - off[None, :, 1] * s[:, None]
    wy = y[:, None] + off[None, :, 0] * s[:, None] + off[None, :, 1] * c[:, None]
    h, inside = _bilinear(hf, wx.ravel(), wy.ravel())
    h = h.reshape(-1, 4)
    ok = inside.reshape(-1, 4).all(axis=1)

    wb, tw = geom.wheelbase, geom.width
    slope_fwd = (h[:, 0] + h[:, 1] - h[:, 2] - h[:, 3]) / (2.0 * wb)
    slope_lat = (h[:, 0] + h[:, 2] - h[:, 1] - h[:, 3]) / (2.0 * tw)
    center = h.mean(axis=1)
    fitted = (
        off[None, :, 0] * slope_fwd[:, None]
        + off[None, :, 1] * slope_lat[:, None]
        + center[:, None]
    )
    max_res = np.abs(h - fitted).max(axis=1)

    z = center + geom.clearance
    pitch = np.arctan(slope_fwd)
    roll = np.arctan(slope_lat)
    bad = ~ok
    for arr in (z, pitch, roll, max_res):
        arr[bad] = 0.0
    return z, roll, pitch, max_res, ok


def settle_pose(
    hf: Heightfield,
    x: float,
    y: float,
    yaw: float,
    geom: VehicleGeometry = DEFAULT_GEOMETRY,
) -> RobotState:
    """Rest the chassis on the terrain at (x, y, yaw).

    z is the plane height under the center plus the ground clearance; pitch
    and roll are the plane inclinations along and across the heading.
    """
    z, roll, pitch, _, ok = _settle_many(
        hf, np.asarray([x]), np.asarray([y]), np.asarray([yaw]), geom
    )
    if not ok[0]:
        raise DomainError(f"wheel contact point at ({x:.3f}, {y:.3f}) leaves the field")
    return RobotState(x=x, y=y, z=float(z[0]), roll=float(roll[0]),
                      pitch=float(pitch[0]), yaw=wrap_angle(yaw))


def slip_fraction(pitch: float, v: float, params: TractionParams) -> float:
    """Traction loss in [0, 1]; applies only when driving uphill."""
    if v == 0.0:
        return 0.0
    uphill = pitch if v > 0 else -pitch
    if uphill <= params.slip_onset:
        return 0.0
    return min(1.0, (uphill - params.slip_onset) / (params.stall_angle - params.slip_onset))


def _wrap_many(a: np.ndarray) -> np.ndarray:
    # Elementwise identical to wrap_angle.
    r = np.fmod(a + np.pi, 2.0 * np.pi)
    r = np.where(r <= 0.0, r + 2.0 * np.pi, r)
    return r - np.pi


def _step_many(hf: Heightfield, x, y, pitch, yaw, v, om,
               params: TractionParams, geom: VehicleGeometry):
    """Vectorized step for K poses/commands in lockstep.

    Returns a dict of arrays: next pose (x, y, z, roll, pitch, yaw), slip,
    immobilized, and ok (False where a wheel would leave the field). Stalled
    or hung-up entries keep their input (x, y, yaw); their z/roll/pitch
    outputs are not meaningful and callers must treat the pose as unchanged.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    pitch = np.asarray(pitch, float)
    yaw = np.asarray(yaw, float)
    v = np.asarray(v, float)
    om = np.asarray(om, float)

    uphill = np.where(v > 0, pitch, np.where(v < 0, -pitch, -np.inf))
    slip = np.clip(
        (uphill - params.slip_onset) / (params.stall_angle - params.slip_onset),
        0.0, 1.0,
    )
    stalled = slip >= 1.0

    yaw2 = _wrap_many(yaw + om * params.dt)
    d = v * (1.0 - slip) * params.dt
    x2 = np.where(stalled, x, x + d * np.cos(yaw2))
    y2 = np.where(stalled, y, y + d * np.sin(yaw2))
    z, roll2, pitch2, max_res, ok = _settle_many(hf, x2, y2, yaw2, geom)
    hung = ok & (max_res > geom.clearance)
    immobilized = stalled | hung
    x2 = np.where(hung, x, x2)
    y2 = np.where(hung, y, y2)
    # stalled entries never moved; report ok regardless of the fit there
    ok = ok | stalled
    return {
        "x": x2, "y": y2, "z": z, "roll": roll2, "pitch": pitch2,
        "yaw": np.where(immobilized, yaw, yaw2),
        "slip": slip, "immobilized": immobilized, "ok": ok,
    }


@dataclass(frozen=True)
class StepResult:
    next: RobotState
    immobilized: bool
    slip: float


def step(
    hf: Heightfield,
    state: RobotState,
    u: Control,
    params: TractionParams = DEFAULT_TRACTION,
    geom: VehicleGeometry = DEFAULT_GEOMETRY,
) -> StepResult:
    """Advance one step: turn, move along the heading scaled by traction,
    re-settle.

    The pose is unchanged when the vehicle stalls (slip = 1) or when the new
    pose hangs the chassis (plane-fit residual above the ground clearance).
    """
    out = _step_many(
        hf,
        np.asarray([state.x]), np.asarray([state.y]),
        np.asarray([state.pitch]), np.asarray([state.yaw]),
        np.asarray([u.v]), np.asarray([u.omega]),
        params, geom,
    )
    slip = float(out["slip"][0])
    if out["immobilized"][0]:
        return StepResult(next=state, immobilized=True, slip=slip)
    if not out["ok"][0]:
        raise DomainError(
            f"step to ({out['x'][0]:.3f}, {out['y'][0]:.3f}) leaves the field"
        )
    nxt = RobotState(x=float(out["x"][0]), y=float(out["y"][0]),
                     z=float(out["z"][0]), roll=float(out["roll"][0]),
                     pitch=float(out["pitch"][0]), yaw=float(out["yaw"][0]))
    return StepResult(next=nxt, immobilized=False, slip=slip)


@dataclass
class Trajectory:
    """A realized state/control sequence with outcome flags.

    |states| = |controls| + 1. ``immobilized`` / ``infeasible`` mark early
    termination (stall or hang-up / terrain boundary or no feasible control).
    h_values, when present, holds the barrier value at each state.
    """

    states: list[RobotState]
    controls: list[Control]
    dt: float
    immobilized: bool = False
    infeasible: bool = False
    h_values: list[float] | None = None

    def __post_init__(self):
        if len(self.states) != len(self.controls) + 1:
            raise ValidationError("need |states| = |controls| + 1")

    @property
    def elapsed(self) -> float:
        return len(self.controls) * self.dt


def rollout(
    hf: Heightfield,
    start: RobotState,
    controls,
    params: TractionParams = DEFAULT_TRACTION,
    geom: VehicleGeometry = DEFAULT_GEOMETRY,
) -> Trajectory:
    """Apply a control sequence, stopping early on stall/hang-up or when the
    vehicle would leave the field."""
    states = [start]
    applied = []
    immobilized = False
    infeasible = False
    for u in controls:
        try:
            res = step(hf, states[-1], u, params, geom)
        except DomainError:
            infeasible = True
            break
        states.append(res.next)
        applied.append(u)
        if res.immobilized:
            immobilized = True
            break
    return Trajectory(states=states, controls=applied, dt=params.dt,
                      immobilized=immobilized, infeasible=infeasible)
