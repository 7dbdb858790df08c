"""Benchmark orchestration: paired planner-variant trials over seeded
terrains, per-trial records, and aggregated metrics tables.

Both variants of a trial share the same terrain, start, and goal, so the
comparison isolates the barrier constraint. A trial succeeds when it reaches
the goal AND every executed transition classifies safe; reached-rate and
safe-rate are also reported separately.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .labeling import SafetyThresholds, classify
from .planner import Outcome, PlannerConfig, navigate
from .terrain import (
    DEFAULT_PATCH,
    Difficulty,
    Heightfield,
    PatchConfig,
    TerrainSpec,
    extract_patches,
    generate,
)
from .vehicle import (
    DEFAULT_GEOMETRY,
    DEFAULT_TRACTION,
    Control,
    RobotState,
    TractionParams,
    Trajectory,
    VehicleGeometry,
    settle_pose,
)

VARIANT_CBF = "cbf"
VARIANT_UNCONSTRAINED = "unconstrained"

# Failure codes partitioning non-success trials.
FAILURE_CODES = ("reached_unsafe", "paused_infeasible", "immobilized",
                 "budget_exhausted")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    difficulties: tuple[Difficulty, ...] = (Difficulty.LOW, Difficulty.MEDIUM,
                                            Difficulty.HIGH)
    trials: int = 10
    variants: tuple[str, ...] = (VARIANT_CBF, VARIANT_UNCONSTRAINED)
    extent: tuple[float, float] = (6.0, 14.0)
    resolution: float = 0.05
    step_budget: int = 400
    min_separation_frac: float = 0.6
    start_goal_attempts: int = 1000

    def __post_init__(self):
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")
        if not self.variants:
            raise ValidationError("need at least one variant")
        for v in self.variants:
            if v not in (VARIANT_CBF, VARIANT_UNCONSTRAINED):
                raise ValidationError(f"unknown variant {v!r}")
        if isinstance(self.difficulties, (str, Difficulty)):
            raise ValidationError("difficulties must be a sequence")


@dataclass
class TrialRecord:
    variant: str
    difficulty: str
    trial: int
    outcome: str
    all_safe: bool
    steps: int
    dt: float
    abs_roll: np.ndarray
    abs_pitch: np.ndarray

    @property
    def success(self) -> bool:
        return self.outcome == Outcome.REACHED.value and self.all_safe

    @property
    def elapsed(self) -> float:
        return self.steps * self.dt


@dataclass
class MetricsRow:
    variant: str
    difficulty: str
    trials: int
    success_rate: float
    reached_rate: float
    safe_rate: float
    time_mean: float
    time_std: float
    roll_mean: float
    roll_std: float
    pitch_mean: float
    pitch_std: float
    failures: dict
    sampling_failures: int = 0


def transitions_all_safe(traj: Trajectory, th: SafetyThresholds) -> bool:
    return all(
        classify(a, b, u, th).safe
        for a, b, u in zip(traj.states, traj.states[1:], traj.controls)
    )


def record_from_trajectory(variant, difficulty, trial, traj: Trajectory,
                           outcome_value: str, th: SafetyThresholds) -> TrialRecord:
    return TrialRecord(
        variant=variant, difficulty=difficulty, trial=trial,
        outcome=outcome_value, all_safe=transitions_all_safe(traj, th),
        steps=len(traj.controls), dt=traj.dt,
        abs_roll=np.abs([s.roll for s in traj.states]),
        abs_pitch=np.abs([s.pitch for s in traj.states]),
    )


def sample_start_goal(
    hf: Heightfield,
    rng: np.random.Generator,
    th: SafetyThresholds,
    min_separation: float,
    attempts: int = 1000,
    geom: VehicleGeometry = DEFAULT_GEOMETRY,
    patch_cfg: PatchConfig = DEFAULT_PATCH,
):
    """Settled, safety-classified start pose and goal point with the required
    separation, or None after the attempt budget."""
    margin = patch_cfg.reach + 0.5 * math.hypot(geom.wheelbase, geom.width) + 0.1
    ox, oy = hf.origin
    w, l = hf.extent_x, hf.extent_y
    if w <= 2 * margin or l <= 2 * margin + 2 * 0.6:
        raise ValidationError("terrain too small for start/goal sampling")
    for _ in range(attempts):
        sx = rng.uniform(ox + margin, ox + w - margin)
        sy = rng.uniform(oy + margin, oy + margin + 0.6)
        gx = rng.uniform(ox + margin, ox + w - margin)
        gy = rng.uniform(oy + l - margin - 0.6, oy + l - margin)
        if math.hypot(gx - sx, gy - sy) < min_separation:
            continue
        yaw = math.atan2(gy - sy, gx - sx)
        try:
            start = settle_pose(hf, sx, sy, yaw, geom)
            goal_pose = settle_pose(hf, gx, gy, yaw, geom)
        except Exception:
            continue
        still = Control(0.0, 0.0)
        if not classify(start, start, still, th).safe:
            continue
        if not classify(goal_pose, goal_pose, still, th).safe:
            continue
        _, ok = extract_patches(hf, np.asarray([sx]), np.asarray([sy]),
                                np.asarray([start.z]), np.asarray([yaw]), patch_cfg)
        if not ok[0]:
            continue
        return start, (gx, gy)
    return None


def run_benchmark(
    cfg: ExperimentConfig,
    net=None,
    planner_cfg: PlannerConfig = PlannerConfig(),
    th: SafetyThresholds = SafetyThresholds(),
    traction: TractionParams = DEFAULT_TRACTION,
    geom: VehicleGeometry = DEFAULT_GEOMETRY,
    patch_cfg: PatchConfig = DEFAULT_PATCH,
    out_dir=None,
) -> tuple[list[MetricsRow], list[TrialRecord]]:
    """Run every (difficulty, trial, variant) cell and aggregate.

    Deterministic for a fixed config: terrain and start/goal derive from
    (seed, difficulty, trial) only, shared across variants.
    """
    if VARIANT_CBF in cfg.variants and net is None:
        raise ValidationError("the cbf variant needs a trained network")
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        (out_path / "trajectories").mkdir(parents=True, exist_ok=True)

    records: list[TrialRecord] = []
    sampling_failures: dict[tuple[str, str], int] = {}
    for d_idx, diff in enumerate(cfg.difficulties):
        diff = Difficulty(diff)
        for trial in range(cfg.trials):
            spec = TerrainSpec(
                seed=int(np.random.default_rng([cfg.seed, d_idx, trial]).integers(2**31)),
                difficulty=diff, extent=cfg.extent, resolution=cfg.resolution,
            )
            hf = generate(spec)
            rng = np.random.default_rng([cfg.seed, d_idx, trial, 7])
            pair = sample_start_goal(
                hf, rng, th, cfg.min_separation_frac * cfg.extent[1],
                cfg.start_goal_attempts, geom, patch_cfg,
            )
            if pair is None:
                for variant in cfg.variants:
                    key = (variant, diff.value)
                    sampling_failures[key] = sampling_failures.get(key, 0) + 1
                continue
            start, goal = pair
            for variant in cfg.variants:
                pc = replace(planner_cfg, cbf_enabled=(variant == VARIANT_CBF))
                traj, outcome = navigate(hf, net, start, goal, pc, traction,
                                         geom, patch_cfg, budget=cfg.step_budget)
                rec = record_from_trajectory(variant, diff.value, trial, traj,
                                             outcome.value, th)
                records.append(rec)
                if out_path is not None:
                    from .io import save_trajectory_csv

                    save_trajectory_csv(
                        traj,
                        out_path / "trajectories" /
                        f"{variant}_{diff.value}_{trial:03d}.csv",
                    )

    rows = aggregate_metrics(records, cfg, sampling_failures)
    if out_path is not None:
        from .io import write_manifest

        save_metrics_csv(rows, out_path / "metrics.csv")
        save_records_csv(records, out_path / "outcomes.csv")
        write_manifest(out_path / "manifest.txt", _manifest_entries(
            cfg, planner_cfg, th, traction, geom))
    return rows, records


def aggregate_metrics(records, cfg: ExperimentConfig,
                      sampling_failures: dict | None = None) -> list[MetricsRow]:
    """Pure reduction of trial records to one row per (variant, difficulty).

    Traversal-time stats cover successful trials only; |roll| / |pitch|
    stats pool every recorded state across the cell's trials.
    """
    sampling_failures = sampling_failures or {}
    rows = []
    for variant in cfg.variants:
        for diff in cfg.difficulties:
            diff = Difficulty(diff)
            cell = [r for r in records
                    if r.variant == variant and r.difficulty == diff.value]
            if not cell and (variant, diff.value) not in sampling_failures:
                continue
            n = len(cell)
            succ = [r for r in cell if r.success]
            times = np.array([r.elapsed for r in succ])
            roll = (np.concatenate([r.abs_roll for r in cell])
                    if cell else np.array([]))
            pitch = (np.concatenate([r.abs_pitch for r in cell])
                     if cell else np.array([]))
            failures = {code: 0 for code in FAILURE_CODES}
            for r in cell:
                if r.success:
                    continue
                code = ("reached_unsafe"
                        if r.outcome == Outcome.REACHED.value else r.outcome)
                failures[code] += 1
            rows.append(MetricsRow(
                variant=variant,
                difficulty=diff.value,
                trials=n,
                success_rate=len(succ) / n if n else math.nan,
                reached_rate=(sum(r.outcome == Outcome.REACHED.value
                                  for r in cell) / n if n else math.nan),
                safe_rate=sum(r.all_safe for r in cell) / n if n else math.nan,
                time_mean=float(times.mean()) if times.size else math.nan,
                time_std=float(times.std()) if times.size else math.nan,
                roll_mean=float(roll.mean()) if roll.size else math.nan,
                roll_std=float(roll.std()) if roll.size else math.nan,
                pitch_mean=float(pitch.mean()) if pitch.size else math.nan,
                pitch_std=float(pitch.std()) if pitch.size else math.nan,
                failures=failures,
                sampling_failures=sampling_failures.get((variant, diff.value), 0),
            ))
    return rows


METRICS_COLUMNS = [
    "variant", "difficulty", "trials", "success_rate", "reached_rate",
    "safe_rate", "time_mean", "time_std", "roll_mean", "roll_std",
    "pitch_mean", "pitch_std",
    *(f"n_{code}" for code in FAILURE_CODES),
    "sampling_failures",
]


def save_metrics_csv(rows, path):
    fmt = lambda x: "%.17g" % x
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRICS_COLUMNS)
        for r in rows:
            w.writerow([
                r.variant, r.difficulty, r.trials,
                fmt(r.success_rate), fmt(r.reached_rate), fmt(r.safe_rate),
                fmt(r.time_mean), fmt(r.time_std),
                fmt(r.roll_mean), fmt(r.roll_std),
                fmt(r.pitch_mean), fmt(r.pitch_std),
                *(r.failures[code] for code in FAILURE_CODES),
                r.sampling_failures,
            ])


RECORD_COLUMNS = ["variant", "difficulty", "trial", "outcome", "all_safe", "steps", "dt"]


def save_records_csv(records, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([r.variant, r.difficulty, r.trial, r.outcome,
                        int(r.all_safe), r.steps, "%.17g" % r.dt])


def _manifest_entries(cfg, planner_cfg, th, traction, geom) -> dict:
    return {
        "seed": cfg.seed,
        "difficulties": ",".join(Difficulty(d).value for d in cfg.difficulties),
        "trials": cfg.trials,
        "variants": ",".join(cfg.variants),
        "extent": f"{cfg.extent[0]}x{cfg.extent[1]}",
        "resolution": cfg.resolution,
        "step_budget": cfg.step_budget,
        "min_separation_frac": cfg.min_separation_frac,
        "p_thresh": th.p_thresh,
        "phi_thresh": th.phi_thresh,
        "delta_thresh": th.delta_thresh,
        "u_thresh": th.u_thresh,
        "lambda1": planner_cfg.lambda1,
        "lambda2": planner_cfg.lambda2,
        "lambda3": planner_cfg.lambda3,
        "horizon": planner_cfg.horizon,
        "goal_tol": planner_cfg.goal_tol,
        "alpha_gamma": planner_cfg.alpha_gamma,
        "cbf_form": planner_cfg.cbf_form.value,
        "u_min": f"{planner_cfg.u_min.v},{planner_cfg.u_min.omega}",
        "u_max": f"{planner_cfg.u_max.v},{planner_cfg.u_max.omega}",
        "slip_onset": traction.slip_onset,
        "stall_angle": traction.stall_angle,
        "dt": traction.dt,
        "clearance": geom.clearance,
    }
