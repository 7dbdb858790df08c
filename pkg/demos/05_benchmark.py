"""A small paired benchmark: both planner variants on the same seeded
terrains, metrics aggregated per difficulty. Scaled down to a few trials;
the acceptance suite runs 30 high-difficulty trials.

Needs the model from demo 03 (run that first).

Run from the repo root:  python3 demos/05_benchmark.py
"""

from pathlib import Path

from roughnav import Difficulty, ExperimentConfig, run_benchmark
from roughnav.io import load_network

here = Path(__file__).parent
model_path = here / "demo_model.nn1"
if not model_path.exists():
    raise SystemExit("run demos/03_train_barrier.py first to produce demo_model.nn1")
net, _ = load_network(model_path)

cfg = ExperimentConfig(
    seed=202,
    difficulties=(Difficulty.LOW, Difficulty.HIGH),
    trials=3,
    extent=(8.0, 14.0),
    step_budget=400,
)
out = here / "demo_benchmark"
rows, records = run_benchmark(cfg, net, out_dir=out)

print(f"{'variant':14s} {'difficulty':10s} {'success':>8s} {'reached':>8s} "
      f"{'safe':>6s} {'time':>6s} {'|roll|':>7s} {'|pitch|':>8s}")
for r in rows:
    print(f"{r.variant:14s} {r.difficulty:10s} {r.success_rate:8.2f} "
          f"{r.reached_rate:8.2f} {r.safe_rate:6.2f} {r.time_mean:6.1f} "
          f"{r.roll_mean:7.3f} {r.pitch_mean:8.3f}")

print(f"\nmetrics, outcomes, manifest, and per-trial trajectories in {out}/")
