"""Drive the analytic vehicle model over a slope and label the transitions.

Run from the repo root:  python3 demos/02_vehicle_and_labels.py
"""

import math

import numpy as np

from roughnav import (
    Control,
    Heightfield,
    SafetyThresholds,
    classify,
    rollout,
    settle_pose,
    step,
)


def plane(gx, gy, extent=10.0, res=0.05):
    n = int(round(extent / res)) + 1
    xs = np.arange(n) * res
    xx, yy = np.meshgrid(xs, xs)
    return Heightfield(cols=n, rows=n, resolution=res, origin=(0.0, 0.0),
                       heights=(gx * xx + gy * yy).astype(np.float32))


th = SafetyThresholds()

# Settling on an incline: pitch follows the grade when heading uphill,
# roll when driving across it.
grade = 0.3
hf = plane(math.tan(grade), 0.0)
uphill = settle_pose(hf, 5.0, 5.0, 0.0)
across = settle_pose(hf, 5.0, 5.0, math.pi / 2)
print(f"grade {grade:.2f} rad: uphill pitch {uphill.pitch:+.3f}, "
      f"across roll {across.roll:+.3f}")

# Traction degrades with uphill pitch; past the stall angle the vehicle
# stops moving entirely.
for g in (0.2, 0.475, 0.7):
    hf_g = plane(math.tan(g), 0.0)
    s = settle_pose(hf_g, 5.0, 5.0, 0.0)
    r = step(hf_g, s, Control(1.0, 0.0))
    moved = math.hypot(r.next.x - s.x, r.next.y - s.y)
    print(f"pitch {g:.3f}: slip {r.slip:.2f}, moved {moved * 100:.1f} cm, "
          f"immobilized={r.immobilized}")

# The three unsafe-transition criteria, shown on hand-built states.
flat = plane(0.0, 0.0)
s0 = settle_pose(flat, 5.0, 5.0, 0.0)
traj = rollout(flat, s0, [Control(1.0, 0.3)] * 5)
for a, b, u in zip(traj.states, traj.states[1:], traj.controls):
    label = classify(a, b, u, th)
    print(f"x={a.x:.2f} -> {b.x:.2f}: safe={label.safe} ({label.reason.name})")

steep = plane(math.tan(0.7), 0.0)
s = settle_pose(steep, 5.0, 5.0, 0.0)
r = step(steep, s, Control(1.0, 0.0))
print("stalled uphill transition:", classify(s, r.next, Control(1.0, 0.0), th))
