"""The headline behavior: a barrier-constrained planner refuses to cross an
untraversable band and pauses in a safe state, while the unconstrained
baseline drives through it and tips past the safety thresholds.

Needs the model from demo 03 (run that first).

Run from the repo root:  python3 demos/04_constrained_planning.py
"""

import math
from pathlib import Path

import numpy as np

from roughnav import (
    Control,
    Heightfield,
    PlannerConfig,
    SafetyThresholds,
    classify,
    navigate,
    render,
    settle_pose,
)
from roughnav.io import load_network, save_trajectory_csv

here = Path(__file__).parent
model_path = here / "demo_model.nn1"
if not model_path.exists():
    raise SystemExit("run demos/03_train_barrier.py first to produce demo_model.nn1")
net, _ = load_network(model_path)

# A flat corridor with a steep ridge band across it: crossing the band
# forces pitch past the unsafe threshold, but it is not steep enough to
# stall the vehicle outright.
res, width, length = 0.05, 2.4, 9.0
cols, rows = int(width / res) + 1, int(length / res) + 1
ys = (np.arange(rows) * res)[:, None]
band = 0.30 * np.exp(-((ys - 4.0) ** 2) / (2 * 0.30**2))
hf = Heightfield(cols=cols, rows=rows, resolution=res, origin=(0.0, 0.0),
                 heights=np.broadcast_to(band, (rows, cols)).astype(np.float32).copy())

th = SafetyThresholds()
start = settle_pose(hf, 1.2, 1.5, math.pi / 2)
goal = (1.2, 6.5)


def describe(tag, traj, outcome):
    unsafe = sum(
        not classify(a, b, u, th).safe
        for a, b, u in zip(traj.states, traj.states[1:], traj.controls)
    )
    peak = max(abs(s.pitch) for s in traj.states)
    print(f"{tag:14s} outcome={outcome.value:18s} steps={len(traj.controls):3d} "
          f"unsafe transitions={unsafe} peak |pitch|={peak:.2f} rad "
          f"final y={traj.states[-1].y:.2f}")
    return traj


traj_cbf = describe("constrained", *navigate(hf, net, start, goal, PlannerConfig()))
traj_unc = describe("unconstrained", *navigate(hf, net, start, goal,
                                               PlannerConfig(cbf_enabled=False)))

save_trajectory_csv(traj_cbf, here / "demo_traj_constrained.csv")
save_trajectory_csv(traj_unc, here / "demo_traj_unconstrained.csv")
render(hf, traj_cbf, net, path=here / "demo_planning.ppm", mask_stride=6)
print(f"\nwrote trajectories and demo_planning.ppm under {here}")
