"""Safety labels for robot-terrain transitions and balanced dataset generation.

A transition is unsafe when the resulting pose tips too far (pitch, then
roll, in that priority order) or when the commanded motion produced almost
no displacement (immobilization).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GenerationBudgetError, ValidationError
from .terrain import DEFAULT_PATCH, Heightfield, ObservationPatch, PatchConfig, extract_patch
from .vehicle import (
    DEFAULT_GEOMETRY,
    DEFAULT_TRACTION,
    Control,
    RobotState,
    TractionParams,
    VehicleGeometry,
    settle_pose,
    step,
)

# Default command bounds (v in m/s, omega in rad/s) shared with the planner.
# The velocity floor keeps every command an actual motion request, so the
# immobilization criterion stays meaningful.
DEFAULT_U_MIN = Control(0.2, -1.5)
DEFAULT_U_MAX = Control(1.0, 1.5)


class Reason(enum.IntEnum):
    NONE = 0
    PITCH = 1
    ROLL = 2
    IMMOBILIZED = 3


@dataclass(frozen=True)
class SafetyThresholds:
    """Unsafe-state criteria limits.

    delta_thresh defaults to 20% of the smallest commanded per-step
    displacement (0.2 * v_min * dt), so only near-total loss of motion
    counts as immobilization; u_thresh sits below any in-bounds command.
    """

    p_thresh: float = 0.45
    phi_thresh: float = 0.40
    delta_thresh: float = 0.2 * DEFAULT_U_MIN.v * DEFAULT_TRACTION.dt
    u_thresh: float = 0.1

    def __post_init__(self):
        if min(self.p_thresh, self.phi_thresh, self.delta_thresh, self.u_thresh) <= 0:
            raise ValidationError("all thresholds must be strictly positive")


@dataclass(frozen=True)
class SafetyLabel:
    safe: bool
    reason: Reason

    def __post_init__(self):
        if self.safe != (self.reason == Reason.NONE):
            raise ValidationError("safe label must carry reason NONE and vice versa")


SAFE = SafetyLabel(True, Reason.NONE)


def classify(
    prev: RobotState, next: RobotState, u: Control, th: SafetyThresholds
) -> SafetyLabel:
    """Label the transition prev -> next under command u.

    Priority: pitch, then roll, then immobilization (commanded motion with
    displacement below delta_thresh).
    """
    if abs(next.pitch) >= th.p_thresh:
        return SafetyLabel(False, Reason.PITCH)
    if abs(next.roll) >= th.phi_thresh:
        return SafetyLabel(False, Reason.ROLL)
    disp = math.sqrt(
        (next.x - prev.x) ** 2 + (next.y - prev.y) ** 2 + (next.z - prev.z) ** 2
    )
    if disp < th.delta_thresh and u.norm() > th.u_thresh:
        return SafetyLabel(False, Reason.IMMOBILIZED)
    return SAFE


@dataclass
class LabeledSample:
    """One training record: pre/post observation, the command, and the label."""

    o_t: ObservationPatch
    o_next: ObservationPatch
    u: Control
    label: SafetyLabel


def generate_dataset(
    terrains,
    n: int,
    th: SafetyThresholds,
    seed: int,
    *,
    u_min: Control = DEFAULT_U_MIN,
    u_max: Control = DEFAULT_U_MAX,
    traction: TractionParams = DEFAULT_TRACTION,
    geom: VehicleGeometry = DEFAULT_GEOMETRY,
    patch_cfg: PatchConfig = DEFAULT_PATCH,
    max_attempts: int | None = None,
) -> list[LabeledSample]:
    """Balanced labeled transitions from random single-step rollouts.

    Samples settled poses and in-bounds commands round-robin across the
    terrains (one seeded stream per terrain), steps once, classifies, and
    keeps rejection-sampling until exactly n/2 safe and n/2 unsafe records
    exist. Deterministic for a fixed (seed, terrains) pair.
    """
    terrains = list(terrains)
    if not terrains:
        raise ValidationError("need at least one terrain")
    if n <= 0 or n % 2 != 0:
        raise ValidationError(f"n must be positive and even, got {n}")
    if max_attempts is None:
        max_attempts = 200 * n

    # Keep every sample point (wheels, both patches, one step of motion)
    # inside the field regardless of yaw.
    margin = patch_cfg.reach + abs(u_max.v) * traction.dt + 0.5 * math.hypot(
        geom.wheelbase, geom.width
    )
    for hf in terrains:
        if hf.extent_x <= 2 * margin or hf.extent_y <= 2 * margin:
            raise ValidationError(
                f"terrain extent ({hf.extent_x:.2f}, {hf.extent_y:.2f}) too small "
                f"for sampling margin {margin:.2f}"
            )

    rngs = [np.random.default_rng([seed, i]) for i in range(len(terrains))]
    quota = n // 2
    safe_out: list[LabeledSample] = []
    unsafe_out: list[LabeledSample] = []

    attempts = 0
    while len(safe_out) < quota or len(unsafe_out) < quota:
        if attempts >= max_attempts:
            raise GenerationBudgetError(
                f"filled {len(safe_out)}/{quota} safe and {len(unsafe_out)}/{quota} "
                f"unsafe records in {attempts} attempts; the terrain set is too "
                "easy or too hard for the thresholds"
            )
        shard = attempts % len(terrains)
        hf = terrains[shard]
        rng = rngs[shard]
        attempts += 1

        ox, oy = hf.origin
        px = rng.uniform(ox + margin, ox + hf.extent_x - margin)
        py = rng.uniform(oy + margin, oy + hf.extent_y - margin)
        yaw = rng.uniform(-math.pi, math.pi)
        v = rng.uniform(u_min.v, u_max.v)
        om = rng.uniform(u_min.omega, u_max.omega)
        u = Control(v, om)

        try:
            prev = settle_pose(hf, px, py, yaw, geom)
        except DomainError:
            continue
        try:
            res = step(hf, prev, u, traction, geom)
            nxt = res.next
            label = classify(prev, nxt, u, th)
        except DomainError:
            # Settle failed mid-step: the pose is stuck where it was.
            nxt = prev
            label = SafetyLabel(False, Reason.IMMOBILIZED)

        bucket = safe_out if label.safe else unsafe_out
        if len(bucket) >= quota:
            continue
        try:
            o_t = extract_patch(hf, prev, patch_cfg)
            o_next = extract_patch(hf, nxt, patch_cfg)
        except DomainError:
            continue
        bucket.append(LabeledSample(o_t=o_t, o_next=o_next, u=u, label=label))

    return safe_out + unsafe_out


def split_dataset(
    dataset, fraction: float = 0.2, seed: int = 0
) -> tuple[list[LabeledSample], list[LabeledSample]]:
    """Stratified seeded train/validation split.

    The validation set takes round(len * fraction) samples from each class,
    so class balance is preserved within one sample per split.
    """
    if not 0.0 < fraction < 1.0:
        raise ValidationError(f"fraction must be in (0, 1), got {fraction}")
    dataset = list(dataset)
    rng = np.random.default_rng([seed])
    train: list[LabeledSample] = []
    val: list[LabeledSample] = []
    for want_safe in (True, False):
        idx = [i for i, s in enumerate(dataset) if s.label.safe == want_safe]
        perm = rng.permutation(len(idx))
        n_val = int(round(len(idx) * fraction))
        chosen = {idx[j] for j in perm[:n_val]}
        val.extend(dataset[i] for i in idx if i in chosen)
        train.extend(dataset[i] for i in idx if i not in chosen)
    return train, val
