"""Safe navigation for wheeled robots on rough 2.5D terrain: synthetic
elevation maps, an analytic vehicle model, traversability safety labels, a
learned barrier certificate, and a barrier-constrained sampling planner."""

from .terrain import (
    Difficulty,
    Heightfield,
    ObservationPatch,
    PatchConfig,
    TerrainSpec,
    extract_patch,
    extract_patches,
    generate,
)
from .vehicle import (
    Control,
    RobotState,
    StepResult,
    TractionParams,
    Trajectory,
    VehicleGeometry,
    rollout,
    settle_pose,
    step,
)
from .labeling import (
    LabeledSample,
    Reason,
    SafetyLabel,
    SafetyThresholds,
    classify,
    generate_dataset,
    split_dataset,
)
from .autodiff import AdamState, Tensor, adam_step, conv2d, dense, relu, softplus
from .barrier import (
    BarrierNetwork,
    CertificateReport,
    LossConfig,
    NetworkConfig,
    TrainConfig,
    barrier_loss,
    evaluate_certificate,
    train,
)
from .planner import CbfForm, Outcome, PlannerConfig, cbf_feasible, navigate, plan_step
from .experiments import ExperimentConfig, MetricsRow, TrialRecord, run_benchmark
from .render import render

__version__ = "0.1.0"
