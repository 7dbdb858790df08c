"""Synthesize terrain at each difficulty, query elevations, and pull
robot-centric observation patches.

Run from the repo root:  python3 demos/01_terrain_and_patches.py
Writes PPM previews next to this script.
"""

from pathlib import Path

import numpy as np

from roughnav import (
    Difficulty,
    TerrainSpec,
    extract_patch,
    generate,
    render,
    settle_pose,
)
from roughnav.terrain import gradient_p95

out_dir = Path(__file__).parent

for difficulty in Difficulty:
    spec = TerrainSpec(seed=7, difficulty=difficulty, extent=(8.0, 8.0))
    hf = generate(spec)
    print(f"{difficulty.value:6s}: {hf.cols}x{hf.rows} cells, "
          f"height range [{hf.heights.min():+.3f}, {hf.heights.max():+.3f}] m, "
          f"p95 |gradient| {gradient_p95(hf):.3f}")
    render(hf, path=out_dir / f"terrain_{difficulty.value}.ppm")

hf = generate(TerrainSpec(seed=7, difficulty=Difficulty.HIGH, extent=(8.0, 8.0)))

# Continuous elevation queries interpolate between grid nodes.
for x, y in ((4.0, 4.0), (4.025, 4.0), (4.05, 4.0)):
    print(f"elevation at ({x:.3f}, {y:.3f}) = {hf.elevation_at(x, y):+.4f} m")

# A patch is the network's whole world: a 100x40 window of relative heights
# covering 2.0 m ahead and 0.8 m across, rotated with the robot's heading.
pose = settle_pose(hf, 4.0, 3.0, np.pi / 2)
patch = extract_patch(hf, pose)
print(f"\npatch at ({pose.x}, {pose.y}) heading +y:")
print(f"  shape {patch.values.shape}, range "
      f"[{patch.values.min():+.3f}, {patch.values.max():+.3f}] m relative to the robot")
