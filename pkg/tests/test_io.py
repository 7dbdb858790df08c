import numpy as np
import pytest

from roughnav import io as rio
from roughnav.barrier import BarrierNetwork, NetworkConfig
from roughnav.errors import FormatError
from roughnav.labeling import SafetyThresholds, generate_dataset
from roughnav.terrain import Difficulty, TerrainSpec, generate
from roughnav.vehicle import Control, RobotState, Trajectory

TH = SafetyThresholds()


@pytest.fixture(scope="module")
def hf():
    return generate(TerrainSpec(seed=51, difficulty=Difficulty.MEDIUM,
                                extent=(8.0, 8.0)))


@pytest.fixture(scope="module")
def dataset(hf):
    high = generate(TerrainSpec(seed=52, difficulty=Difficulty.HIGH,
                                extent=(8.0, 8.0)))
    return generate_dataset([hf, high], 20, TH, seed=3)


class TestHeightfieldFormat:
    def test_round_trip_bit_identical(self, hf):
        blob = rio.heightfield_to_bytes(hf)
        back = rio.heightfield_from_bytes(blob)
        assert back.heights.tobytes() == hf.heights.tobytes()
        assert back.origin == hf.origin
        assert rio.heightfield_to_bytes(back) == blob

    def test_file_round_trip(self, hf, tmp_path):
        p = tmp_path / "t.hf1"
        rio.save_heightfield(hf, p)
        back = rio.load_heightfield(p)
        assert np.array_equal(back.heights, hf.heights)

    def test_corrupt_magic_is_format_error(self, hf):
        blob = bytearray(rio.heightfield_to_bytes(hf))
        blob[0] = ord("X")
        with pytest.raises(FormatError, match="offset 0"):
            rio.heightfield_from_bytes(bytes(blob))

    def test_truncation_names_offset(self, hf):
        blob = rio.heightfield_to_bytes(hf)
        with pytest.raises(FormatError, match="offset"):
            rio.heightfield_from_bytes(blob[: len(blob) // 2])


class TestDatasetFormat:
    def test_round_trip_bit_identical(self, dataset):
        blob = rio.dataset_to_bytes(dataset, TH)
        back, th = rio.dataset_from_bytes(blob)
        assert th == TH
        assert len(back) == len(dataset)
        assert rio.dataset_to_bytes(back, th) == blob
        for a, b in zip(dataset, back):
            assert np.array_equal(a.o_t.values, b.o_t.values)
            assert np.array_equal(a.o_next.values, b.o_next.values)
            assert a.u == b.u and a.label == b.label

    def test_corrupt_magic(self, dataset):
        blob = b"XXXX" + rio.dataset_to_bytes(dataset, TH)[4:]
        with pytest.raises(FormatError, match="magic"):
            rio.dataset_from_bytes(blob)

    def test_hash_stable(self, dataset):
        assert rio.dataset_hash(dataset, TH) == rio.dataset_hash(dataset, TH)


class TestNetworkFormat:
    def test_round_trip_identical_outputs(self, tmp_path):
        net = BarrierNetwork(seed=17)
        p = tmp_path / "m.nn1"
        rio.save_network(net, p, train_config={"epochs": 1}, dataset_digest="ab")
        back, manifest = rio.load_network(p)
        assert manifest["dataset_hash"] == "ab"
        rng = np.random.default_rng(0)
        patches = rng.uniform(-0.3, 0.3, (100, 100, 40)).astype(np.float32)
        assert np.array_equal(net.forward_h(patches), back.forward_h(patches))
        us = np.column_stack([rng.uniform(0, 1, 50), rng.uniform(-1.5, 1.5, 50)])
        assert np.array_equal(net.encode_control(us), back.encode_control(us))

    def test_round_trip_bytes_exact(self):
        net = BarrierNetwork(NetworkConfig(conv_channels=(4, 8), dense_widths=(16,)),
                             seed=3)
        blob = rio.network_to_bytes(net)
        back, _ = rio.network_from_bytes(blob)
        assert rio.network_to_bytes(back) == blob

    def test_corrupt_magic(self):
        blob = rio.network_to_bytes(BarrierNetwork(seed=1))
        with pytest.raises(FormatError, match="magic"):
            rio.network_from_bytes(b"ZZZZ" + blob[4:])


class TestTrajectoryCsv:
    def _traj(self):
        states = [
            RobotState(x=0.1 * i, y=0.01 * i**2, z=0.05, roll=0.01 * i,
                       pitch=-0.02 * i, yaw=0.1 * i)
            for i in range(5)
        ]
        controls = [Control(0.5 + 0.1 * i, -0.2 * i) for i in range(4)]
        return Trajectory(states=states, controls=controls, dt=0.1, immobilized=True)

    def test_round_trip_value_exact(self, tmp_path):
        traj = self._traj()
        p = tmp_path / "t.csv"
        rio.save_trajectory_csv(traj, p)
        back = rio.load_trajectory_csv(p)
        assert back.states == traj.states
        assert back.controls == traj.controls
        assert back.immobilized == traj.immobilized
        assert back.dt == traj.dt

    def test_bad_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(FormatError):
            rio.load_trajectory_csv(p)


class TestManifest:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "m.txt"
        rio.write_manifest(p, {"seed": 3, "difficulty": "high", "lr": 0.001})
        back = rio.read_manifest(p)
        assert back == {"seed": "3", "difficulty": "high", "lr": "0.001"}
