"""Binary and CSV persistence.

Formats (all little-endian):

HF1  terrain    magic "HF1\\0", u32 cols, u32 rows, f32 resolution,
                f64 origin_x, f64 origin_y, rows*cols f32 heights row-major.
DS1  dataset    magic "DS1\\0", u32 count, 4x f64 thresholds
                (p, phi, delta, u), then per record: 4000 f32 o_t,
                4000 f32 o_next, f64 v, f64 omega, u8 reason code.
NN1  network    magic "NN1\\0", u32 manifest length, UTF-8 JSON manifest
                (layer names/shapes, network config, training config,
                dataset hash), then f64 parameter buffers in manifest order.

Trajectories and metrics tables are CSV with floats printed at %.17g, so a
load(save(x)) round trip is value-exact.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .labeling import LabeledSample, Reason, SafetyLabel, SafetyThresholds
from .terrain import PATCH_COLS, PATCH_ROWS, Heightfield, ObservationPatch
from .vehicle import Control, RobotState, Trajectory

_HF_MAGIC = b"HF1\x00"
_DS_MAGIC = b"DS1\x00"
_NN_MAGIC = b"NN1\x00"
_PATCH_N = PATCH_ROWS * PATCH_COLS


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def _read_exact(buf, n: int, what: str) -> bytes:
    off = buf.tell()
    data = buf.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file: wanted {n} bytes for {what} at offset {off}")
    return data


def _check_magic(buf, magic: bytes):
    got = _read_exact(buf, 4, "magic")
    if got != magic:
        raise FormatError(f"bad magic {got!r} at offset 0, expected {magic!r}")


# -- HF1 ---------------------------------------------------------------------

def heightfield_to_bytes(hf: Heightfield) -> bytes:
    head = _HF_MAGIC + struct.pack("<IIf", hf.cols, hf.rows, hf.resolution)
    origin = struct.pack("<dd", hf.origin[0], hf.origin[1])
    body = hf.heights.astype("<f4").tobytes()
    return head + origin + body


def heightfield_from_bytes(data: bytes) -> Heightfield:
    buf = _io.BytesIO(data)
    _check_magic(buf, _HF_MAGIC)
    cols, rows, res = struct.unpack("<IIf", _read_exact(buf, 12, "header"))
    ox, oy = struct.unpack("<dd", _read_exact(buf, 16, "origin"))
    heights = np.frombuffer(
        _read_exact(buf, rows * cols * 4, "heights"), dtype="<f4"
    ).reshape(rows, cols)
    if buf.read(1):
        raise FormatError(f"trailing bytes at offset {buf.tell() - 1}")
    return Heightfield(cols=cols, rows=rows, resolution=float(res),
                       origin=(ox, oy), heights=heights.copy())


def save_heightfield(hf: Heightfield, path):
    Path(path).write_bytes(heightfield_to_bytes(hf))


def load_heightfield(path) -> Heightfield:
    return heightfield_from_bytes(Path(path).read_bytes())


# -- DS1 ---------------------------------------------------------------------

def dataset_to_bytes(samples, thresholds: SafetyThresholds) -> bytes:
    samples = list(samples)
    out = bytearray()
    out += _DS_MAGIC
    out += struct.pack("<I", len(samples))
    out += struct.pack("<dddd", thresholds.p_thresh, thresholds.phi_thresh,
                       thresholds.delta_thresh, thresholds.u_thresh)
    for s in samples:
        out += s.o_t.values.astype("<f4").tobytes()
        out += s.o_next.values.astype("<f4").tobytes()
        out += struct.pack("<dd", s.u.v, s.u.omega)
        out += struct.pack("<B", int(s.label.reason))
    return bytes(out)


def dataset_from_bytes(data: bytes) -> tuple[list[LabeledSample], SafetyThresholds]:
    buf = _io.BytesIO(data)
    _check_magic(buf, _DS_MAGIC)
    (count,) = struct.unpack("<I", _read_exact(buf, 4, "count"))
    th = SafetyThresholds(*struct.unpack("<dddd", _read_exact(buf, 32, "thresholds")))
    samples = []
    for i in range(count):
        o_t = np.frombuffer(
            _read_exact(buf, _PATCH_N * 4, f"record {i} o_t"), dtype="<f4"
        ).reshape(PATCH_ROWS, PATCH_COLS)
        o_next = np.frombuffer(
            _read_exact(buf, _PATCH_N * 4, f"record {i} o_next"), dtype="<f4"
        ).reshape(PATCH_ROWS, PATCH_COLS)
        v, om = struct.unpack("<dd", _read_exact(buf, 16, f"record {i} control"))
        (code,) = struct.unpack("<B", _read_exact(buf, 1, f"record {i} label"))
        try:
            reason = Reason(code)
        except ValueError:
            raise FormatError(f"unknown reason code {code} in record {i}") from None
        samples.append(LabeledSample(
            o_t=ObservationPatch(o_t.copy()),
            o_next=ObservationPatch(o_next.copy()),
            u=Control(v, om),
            label=SafetyLabel(reason == Reason.NONE, reason),
        ))
    if buf.read(1):
        raise FormatError(f"trailing bytes at offset {buf.tell() - 1}")
    return samples, th


def save_dataset(samples, thresholds: SafetyThresholds, path):
    Path(path).write_bytes(dataset_to_bytes(samples, thresholds))


def load_dataset(path) -> tuple[list[LabeledSample], SafetyThresholds]:
    return dataset_from_bytes(Path(path).read_bytes())


def dataset_hash(samples, thresholds: SafetyThresholds) -> str:
    return hashlib.sha256(dataset_to_bytes(samples, thresholds)).hexdigest()


# -- NN1 ---------------------------------------------------------------------

def network_to_bytes(net, train_config: dict | None = None,
                     dataset_digest: str | None = None) -> bytes:
    from .barrier import BarrierNetwork  # local import to avoid a cycle

    assert isinstance(net, BarrierNetwork)
    state = net.state()
    manifest = {
        "format": "NN1",
        "layers": [{"name": k, "shape": list(v.shape)} for k, v in state],
        "network_config": {
            "patch_rows": net.cfg.patch_rows,
            "patch_cols": net.cfg.patch_cols,
            "conv_channels": list(net.cfg.conv_channels),
            "kernel_size": net.cfg.kernel_size,
            "conv_stride": net.cfg.conv_stride,
            "dense_widths": list(net.cfg.dense_widths),
            "encoder_hidden": net.cfg.encoder_hidden,
        },
        "train_config": train_config or {},
        "dataset_hash": dataset_digest,
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    out = bytearray()
    out += _NN_MAGIC
    out += struct.pack("<I", len(blob))
    out += blob
    for _, arr in state:
        out += arr.astype("<f8").tobytes()
    return bytes(out)


def network_from_bytes(data: bytes):
    from .barrier import BarrierNetwork, NetworkConfig

    buf = _io.BytesIO(data)
    _check_magic(buf, _NN_MAGIC)
    (mlen,) = struct.unpack("<I", _read_exact(buf, 4, "manifest length"))
    try:
        manifest = json.loads(_read_exact(buf, mlen, "manifest").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"unreadable manifest at offset 8: {e}") from None
    nc = manifest["network_config"]
    cfg = NetworkConfig(
        patch_rows=nc["patch_rows"], patch_cols=nc["patch_cols"],
        conv_channels=tuple(nc["conv_channels"]), kernel_size=nc["kernel_size"],
        conv_stride=nc["conv_stride"], dense_widths=tuple(nc["dense_widths"]),
        encoder_hidden=nc["encoder_hidden"],
    )
    net = BarrierNetwork(cfg, seed=0)
    state = []
    for layer in manifest["layers"]:
        shape = tuple(layer["shape"])
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(
            _read_exact(buf, n * 8, f"layer {layer['name']}"), dtype="<f8"
        ).reshape(shape)
        state.append((layer["name"], arr.copy()))
    if buf.read(1):
        raise FormatError(f"trailing bytes at offset {buf.tell() - 1}")
    net.load_state(state)
    return net, manifest


def save_network(net, path, train_config: dict | None = None,
                 dataset_digest: str | None = None):
    Path(path).write_bytes(network_to_bytes(net, train_config, dataset_digest))


def load_network(path):
    return network_from_bytes(Path(path).read_bytes())


# -- trajectory CSV ------------------------------------------------------------

TRAJECTORY_COLUMNS = ["t", "x", "y", "z", "roll", "pitch", "yaw", "v", "omega",
                      "immobilized"]


def save_trajectory_csv(traj: Trajectory, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRAJECTORY_COLUMNS)
        for i, s in enumerate(traj.states):
            if i < len(traj.controls):
                v, om = traj.controls[i].v, traj.controls[i].omega
            else:
                v, om = 0.0, 0.0
            last = i == len(traj.states) - 1
            w.writerow([
                _fmt(i * traj.dt), _fmt(s.x), _fmt(s.y), _fmt(s.z),
                _fmt(s.roll), _fmt(s.pitch), _fmt(s.yaw), _fmt(v), _fmt(om),
                int(last and traj.immobilized),
            ])


def load_trajectory_csv(path, dt: float = 0.1) -> Trajectory:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != TRAJECTORY_COLUMNS:
        raise FormatError(f"unexpected trajectory header in {path}")
    states, controls = [], []
    immobilized = False
    body = rows[1:]
    for i, row in enumerate(body):
        t, x, y, z, roll, pitch, yaw, v, om, imm = row
        states.append(RobotState(x=float(x), y=float(y), z=float(z),
                                 roll=float(roll), pitch=float(pitch),
                                 yaw=float(yaw)))
        if i < len(body) - 1:
            controls.append(Control(float(v), float(om)))
        else:
            immobilized = bool(int(imm))
    if len(body) >= 2:
        dt = float(body[1][0]) - float(body[0][0])
    return Trajectory(states=states, controls=controls, dt=dt,
                      immobilized=immobilized)


# -- key=value manifest ----------------------------------------------------------

def write_manifest(path, entries: dict):
    lines = [f"{k}={entries[k]}" for k in sorted(entries)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict:
    out = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"line {ln}: expected key=value, got {line!r}")
        k, _, v = line.partition("=")
        out[k.strip()] = v.strip()
    return out
