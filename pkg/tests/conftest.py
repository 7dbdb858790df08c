import time

import pytest

from roughnav.barrier import TrainConfig, train
from roughnav.labeling import SafetyThresholds, generate_dataset, split_dataset
from roughnav.terrain import Difficulty, TerrainSpec, generate

# The standard experiment setup shared by training-dependent tests: six
# 10 m x 10 m terrains (two per difficulty), a 4000-sample balanced dataset,
# an 80/20 stratified split, all seed-pinned.
STANDARD_TERRAIN_SEEDS = {
    Difficulty.LOW: (11, 12),
    Difficulty.MEDIUM: (21, 22),
    Difficulty.HIGH: (31, 32),
}
STANDARD_DATASET_SEED = 7
STANDARD_SPLIT_SEED = 0
STANDARD_TRAIN_SEED = 0


@pytest.fixture(scope="session")
def standard_thresholds():
    return SafetyThresholds()


@pytest.fixture(scope="session")
def standard_terrains():
    return [
        generate(TerrainSpec(seed=s, difficulty=d, extent=(10.0, 10.0)))
        for d, seeds in STANDARD_TERRAIN_SEEDS.items()
        for s in seeds
    ]


@pytest.fixture(scope="session")
def standard_dataset(standard_terrains, standard_thresholds):
    return generate_dataset(standard_terrains, 4000, standard_thresholds,
                            seed=STANDARD_DATASET_SEED)


@pytest.fixture(scope="session")
def standard_split(standard_dataset):
    return split_dataset(standard_dataset, 0.2, seed=STANDARD_SPLIT_SEED)


@pytest.fixture(scope="session")
def trained_model(standard_split):
    """The 150-epoch training run; returns (net, history, wall seconds)."""
    train_set, val_set = standard_split
    t0 = time.perf_counter()
    net, history = train(train_set, val_set,
                         TrainConfig(epochs=150, batch_size=64, seed=STANDARD_TRAIN_SEED))
    elapsed = time.perf_counter() - t0
    return net, history, elapsed


# -- acceptance reporting -----------------------------------------------------

_acceptance_lines: list[str] = []


def record_acceptance(num: int, name: str, passed: bool, detail: str = ""):
    status = "PASS" if passed else "FAIL"
    suffix = f" ({detail})" if detail else ""
    _acceptance_lines.append(f"[acceptance {num}] {name}: {status}{suffix}")


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines):
            terminalreporter.write_line(line)
