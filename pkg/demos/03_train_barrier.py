"""Generate a labeled dataset, train the barrier network, and inspect the
certificate. Scaled down (1000 samples, 30 epochs) to finish in about a
minute; the full configuration is 4000 samples and 150 epochs.

Run from the repo root:  python3 demos/03_train_barrier.py
"""

from collections import Counter
from pathlib import Path

from roughnav import (
    Difficulty,
    SafetyThresholds,
    TerrainSpec,
    TrainConfig,
    evaluate_certificate,
    generate,
    generate_dataset,
    split_dataset,
    train,
)
from roughnav.io import save_network

th = SafetyThresholds()
terrains = [
    generate(TerrainSpec(seed=s, difficulty=d, extent=(10.0, 10.0)))
    for d, s in ((Difficulty.LOW, 11), (Difficulty.MEDIUM, 21), (Difficulty.HIGH, 31))
]

dataset = generate_dataset(terrains, 1000, th, seed=7)
print("label mix:", dict(Counter(s.label.reason.name for s in dataset)))

train_set, val_set = split_dataset(dataset, 0.2, seed=0)
net, history = train(train_set, val_set, TrainConfig(epochs=30, batch_size=64, seed=0))

for e in history[::10] + [history[-1]]:
    print(f"epoch {e.epoch:3d}: loss {e.loss:8.2f} "
          f"(terms {e.term1:6.2f} / {e.term2:6.2f} / {e.term3:6.2f})  "
          f"val acc {e.val_accuracy:.3f}")

report = evaluate_certificate(net, val_set)
print(f"\ncertificate on validation:")
print(f"  P(h >= 0 | safe)      = {report.safe_rate:.3f}")
print(f"  P(h < 0  | unsafe)    = {report.unsafe_rate:.3f}")
print(f"  decrease condition    = {report.decrease_rate:.3f}")

out = Path(__file__).parent / "demo_model.nn1"
save_network(net, out)
print(f"\nsaved {out}")
