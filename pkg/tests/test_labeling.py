import math

import numpy as np
import pytest

from roughnav.errors import GenerationBudgetError, ValidationError
from roughnav.labeling import (
    LabeledSample,
    Reason,
    SafetyLabel,
    SafetyThresholds,
    classify,
    generate_dataset,
    split_dataset,
)
from roughnav.terrain import Difficulty, TerrainSpec, generate
from roughnav.vehicle import Control, RobotState

TH = SafetyThresholds()


def state(x=0.0, y=0.0, z=0.05, roll=0.0, pitch=0.0, yaw=0.0):
    return RobotState(x=x, y=y, z=z, roll=roll, pitch=pitch, yaw=yaw)


class TestClassify:
    def test_pitch_over_threshold_is_unsafe(self):
        lbl = classify(state(), state(pitch=TH.p_thresh + 0.01), Control(0.5, 0), TH)
        assert not lbl.safe and lbl.reason == Reason.PITCH

    def test_clean_moving_transition_is_safe(self):
        lbl = classify(state(), state(x=0.09, roll=0.1, pitch=0.1), Control(0.9, 0), TH)
        assert lbl.safe and lbl.reason == Reason.NONE

    def test_immobilized_when_commanded_but_stationary(self):
        th = SafetyThresholds(p_thresh=0.45, phi_thresh=0.40,
                              delta_thresh=0.01, u_thresh=0.2)
        lbl = classify(state(), state(x=0.001), Control(1.0, 0.0), th)
        assert not lbl.safe and lbl.reason == Reason.IMMOBILIZED

    def test_priority_pitch_over_roll_over_immobilized(self):
        nxt = state(pitch=0.5, roll=0.5)
        assert classify(state(), nxt, Control(1.0, 0), TH).reason == Reason.PITCH
        nxt = state(roll=0.5)
        assert classify(state(), nxt, Control(1.0, 0), TH).reason == Reason.ROLL

    def test_threshold_monotonicity(self):
        # Raising p_thresh never converts a safe label to unsafe(pitch).
        rng = np.random.default_rng(3)
        for _ in range(100):
            nxt = state(x=rng.uniform(0, 0.1), pitch=rng.uniform(-0.8, 0.8),
                        roll=rng.uniform(-0.8, 0.8))
            u = Control(rng.uniform(0.2, 1.0), rng.uniform(-1.5, 1.5))
            lo = classify(state(), nxt, u, SafetyThresholds(p_thresh=0.3))
            hi = classify(state(), nxt, u, SafetyThresholds(p_thresh=0.6))
            if lo.safe:
                assert hi.reason != Reason.PITCH

    def test_zero_control_never_immobilized(self):
        lbl = classify(state(), state(), Control(0.0, 0.0), TH)
        assert lbl.safe

    def test_label_consistency_enforced(self):
        with pytest.raises(ValidationError):
            SafetyLabel(True, Reason.PITCH)


@pytest.fixture(scope="module")
def small_terrains():
    return [
        generate(TerrainSpec(seed=31, difficulty=Difficulty.LOW, extent=(8.0, 8.0))),
        generate(TerrainSpec(seed=32, difficulty=Difficulty.HIGH, extent=(8.0, 8.0))),
    ]


class TestGenerateDataset:
    def test_exact_balance(self, small_terrains):
        ds = generate_dataset(small_terrains, 100, TH, seed=5)
        safe = sum(1 for s in ds if s.label.safe)
        assert safe == 50 and len(ds) - safe == 50

    def test_deterministic(self, small_terrains):
        a = generate_dataset(small_terrains, 60, TH, seed=9)
        b = generate_dataset(small_terrains, 60, TH, seed=9)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.o_t.values, sb.o_t.values)
            assert np.array_equal(sa.o_next.values, sb.o_next.values)
            assert sa.u == sb.u and sa.label == sb.label

    def test_labels_reproduce_from_stored_transition(self, small_terrains):
        ds = generate_dataset(small_terrains, 60, TH, seed=11)
        for s in ds:
            relabel = classify(s.o_t.anchor, s.o_next.anchor, s.u, TH)
            assert relabel == s.label

    def test_patches_finite(self, small_terrains):
        ds = generate_dataset(small_terrains, 40, TH, seed=13)
        for s in ds:
            assert np.isfinite(s.o_t.values).all()
            assert np.isfinite(s.o_next.values).all()

    def test_budget_diagnostic_on_hazard_free_terrain(self):
        flat = generate(TerrainSpec(seed=1, difficulty=Difficulty.LOW,
                                    extent=(8.0, 8.0), amplitude=0.0))
        with pytest.raises(GenerationBudgetError, match="unsafe"):
            generate_dataset([flat], 10, TH, seed=1, max_attempts=500)

    def test_odd_n_rejected(self, small_terrains):
        with pytest.raises(ValidationError):
            generate_dataset(small_terrains, 41, TH, seed=1)


class TestSplit:
    def _fake_dataset(self, n_safe, n_unsafe):
        patch = np.zeros((100, 40), dtype=np.float32)
        from roughnav.terrain import ObservationPatch

        out = []
        for i in range(n_safe + n_unsafe):
            safe = i < n_safe
            lbl = SafetyLabel(safe, Reason.NONE if safe else Reason.PITCH)
            out.append(LabeledSample(
                o_t=ObservationPatch(patch + i), o_next=ObservationPatch(patch),
                u=Control(0.5, 0.0), label=lbl,
            ))
        return out

    def test_sizes_80_20(self):
        ds = self._fake_dataset(200, 200)
        train, val = split_dataset(ds, 0.2, seed=3)
        assert len(train) == 320 and len(val) == 80

    def test_stratified_balance(self):
        ds = self._fake_dataset(200, 200)
        train, val = split_dataset(ds, 0.2, seed=3)
        assert sum(1 for s in val if s.label.safe) == 40
        assert sum(1 for s in train if s.label.safe) == 160

    def test_union_is_original_multiset(self):
        ds = self._fake_dataset(50, 50)
        train, val = split_dataset(ds, 0.2, seed=7)
        key = lambda s: float(s.o_t.values[0, 0])
        assert sorted(map(key, train + val)) == sorted(map(key, ds))

    def test_bad_fraction(self):
        with pytest.raises(ValidationError):
            split_dataset(self._fake_dataset(4, 4), 1.0, seed=0)
