"""Learned traversability barrier: an elevation-patch network whose scalar
output's sign certifies safety, a positive control encoder, the three-term
margin loss that trains them, and certificate-quality evaluation.

The loss drives h >= eps2 on patches from safe transitions, h <= -eps1 on
patches from unsafe ones, and for safe transitions additionally
h(o_next) * u_e + gamma * h(o_t) >= eps3, tying the one-step evolution of h
to the (encoded, strictly positive) command that produced it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import (
    AdamState,
    Tensor,
    adam_step,
    conv2d,
    dense,
    narrow,
    relu,
    softplus,
    tsum,
    _conv_fwd,
    _dense_fwd,
)
from .errors import TrainingDivergedError, ValidationError
from .labeling import LabeledSample
from .terrain import PATCH_COLS, PATCH_ROWS, ObservationPatch
from .vehicle import Control


@dataclass(frozen=True)
class NetworkConfig:
    """Layer sizes; defaults are the standard desk-scale architecture.

    Widths are sized so the full 150-epoch training run finishes in a few
    minutes on one float64 CPU core; the structure (three stride-2 3x3 conv
    layers, two hidden dense layers, a two-layer softplus control encoder)
    is fixed.
    """

    patch_rows: int = PATCH_ROWS
    patch_cols: int = PATCH_COLS
    conv_channels: tuple[int, ...] = (6, 12, 12)
    kernel_size: int = 3
    conv_stride: int = 2
    dense_widths: tuple[int, ...] = (48, 24)
    encoder_hidden: int = 16


@dataclass(frozen=True)
class LossConfig:
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 0.5
    eps1: float = 0.1
    eps2: float = 0.1
    eps3: float = 0.01
    alpha_gamma: float = 0.5

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3) < 0:
            raise ValidationError("term weights must be nonnegative")
        if min(self.eps1, self.eps2, self.eps3) < 0:
            raise ValidationError("margins must be nonnegative")
        if not 0.0 <= self.alpha_gamma < 1.0:
            raise ValidationError("alpha_gamma must lie in [0, 1)")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")


class BarrierNetwork:
    """Conv + dense barrier head over the elevation patch plus a softplus
    control encoder. Parameters live in a fixed-order name -> Tensor map."""

    def __init__(self, cfg: NetworkConfig = NetworkConfig(), seed: int = 0):
        self.cfg = cfg
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng([seed, 0xBA])

        def init(name, shape, fan_in):
            bound = 1.0 / math.sqrt(fan_in)
            self.params[name] = Tensor(
                rng.uniform(-bound, bound, size=shape), requires_grad=True
            )

        k, s = cfg.kernel_size, cfg.conv_stride
        h, w = cfg.patch_rows, cfg.patch_cols
        c_in = 1
        for i, c_out in enumerate(cfg.conv_channels):
            fan = c_in * k * k
            init(f"conv{i}.w", (c_out, c_in, k, k), fan)
            init(f"conv{i}.b", (c_out,), fan)
            h = (h - k) // s + 1
            w = (w - k) // s + 1
            if h < 1 or w < 1:
                raise ValidationError(
                    f"patch {cfg.patch_rows}x{cfg.patch_cols} too small for "
                    f"{len(cfg.conv_channels)} stride-{s} conv layers"
                )
            c_in = c_out
        self._flat_dim = c_in * h * w
        f_in = self._flat_dim
        for j, width in enumerate(cfg.dense_widths):
            init(f"fc{j}.w", (f_in, width), f_in)
            init(f"fc{j}.b", (width,), f_in)
            f_in = width
        init("head.w", (f_in, 1), f_in)
        init("head.b", (1,), f_in)
        init("enc0.w", (2, cfg.encoder_hidden), 2)
        init("enc0.b", (cfg.encoder_hidden,), 2)
        init("enc1.w", (cfg.encoder_hidden, 1), cfg.encoder_hidden)
        init("enc1.b", (1,), cfg.encoder_hidden)

    @property
    def param_list(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state(self) -> list[tuple[str, np.ndarray]]:
        """Parameter snapshot in fixed order."""
        return [(k, v.data.copy()) for k, v in self.params.items()]

    def load_state(self, state):
        for name, arr in state:
            if name not in self.params:
                raise ValidationError(f"unknown parameter {name!r}")
            if self.params[name].data.shape != arr.shape:
                raise ValidationError(
                    f"parameter {name!r}: shape {arr.shape} != "
                    f"{self.params[name].data.shape}"
                )
            self.params[name].data = np.array(arr, dtype=np.float64)

    # -- input normalization -------------------------------------------
    def _patch_batch(self, patch) -> tuple[np.ndarray, bool]:
        if isinstance(patch, ObservationPatch):
            patch = patch.values
        x = np.asarray(patch, dtype=np.float64)
        r, c = self.cfg.patch_rows, self.cfg.patch_cols
        if x.shape == (r, c):
            return x[None, None], True
        if x.ndim == 3 and x.shape[1:] == (r, c):
            return x[:, None], False
        if x.ndim == 4 and x.shape[1:] == (1, r, c):
            return x, False
        raise ValidationError(f"patch shape {x.shape} incompatible with ({r}, {c})")

    @staticmethod
    def _control_batch(u) -> tuple[np.ndarray, bool]:
        if isinstance(u, Control):
            return np.array([[u.v, u.omega]], dtype=np.float64), True
        arr = np.asarray(u, dtype=np.float64)
        if arr.shape == (2,):
            return arr[None], True
        if arr.ndim == 2 and arr.shape[1] == 2:
            return arr, False
        raise ValidationError(f"control shape {arr.shape} incompatible with (N, 2)")

    # -- graph-recording forward (training) ------------------------------
    def h_tensor(self, x: Tensor) -> Tensor:
        """Barrier values for a [N, 1, R, C] input, on the tape."""
        n = x.data.shape[0]
        h = x
        for i in range(len(self.cfg.conv_channels)):
            h = relu(conv2d(h, self.params[f"conv{i}.w"], self.params[f"conv{i}.b"],
                            stride=self.cfg.conv_stride, padding=0))
        h = h.reshape(n, self._flat_dim)
        for j in range(len(self.cfg.dense_widths)):
            h = relu(dense(h, self.params[f"fc{j}.w"], self.params[f"fc{j}.b"]))
        h = dense(h, self.params["head.w"], self.params["head.b"])
        return h.reshape(n)

    def ue_tensor(self, u: Tensor) -> Tensor:
        """Encoded controls for a [N, 2] input, on the tape; strictly positive."""
        e = relu(dense(u, self.params["enc0.w"], self.params["enc0.b"]))
        e = dense(e, self.params["enc1.w"], self.params["enc1.b"])
        return softplus(e).reshape(u.data.shape[0])

    # -- inference forward (no graph; same kernels as the tensor ops) ----
    def _h_arrays(self, x: np.ndarray) -> np.ndarray:
        h = x
        for i in range(len(self.cfg.conv_channels)):
            h, _ = _conv_fwd(h, self.params[f"conv{i}.w"].data,
                             self.params[f"conv{i}.b"].data,
                             self.cfg.conv_stride, 0)
            h = np.maximum(h, 0.0)
        h = h.reshape(h.shape[0], self._flat_dim)
        for j in range(len(self.cfg.dense_widths)):
            h = np.maximum(
                _dense_fwd(h, self.params[f"fc{j}.w"].data, self.params[f"fc{j}.b"].data),
                0.0,
            )
        return _dense_fwd(h, self.params["head.w"].data, self.params["head.b"].data)[:, 0]

    def forward_h(self, patch):
        """Barrier value(s) for a patch or batch of patches; sign is the verdict."""
        x, squeeze = self._patch_batch(patch)
        out = self._h_arrays(x)
        return float(out[0]) if squeeze else out

    def encode_control(self, u):
        """Strictly positive encoding of command(s)."""
        arr, squeeze = self._control_batch(u)
        e = np.maximum(_dense_fwd(arr, self.params["enc0.w"].data,
                                  self.params["enc0.b"].data), 0.0)
        e = _dense_fwd(e, self.params["enc1.w"].data, self.params["enc1.b"].data)
        out = np.logaddexp(0.0, e[:, 0])
        return float(out[0]) if squeeze else out


# -- loss -------------------------------------------------------------------

def _stack_samples(batch) -> dict[str, np.ndarray]:
    o_t = np.stack([s.o_t.values for s in batch]).astype(np.float64)[:, None]
    o_next = np.stack([s.o_next.values for s in batch]).astype(np.float64)[:, None]
    u = np.array([[s.u.v, s.u.omega] for s in batch], dtype=np.float64)
    safe = np.array([s.label.safe for s in batch], dtype=bool)
    return {"o_t": o_t, "o_next": o_next, "u": u, "safe": safe}


def _loss_from_arrays(net: BarrierNetwork, arrays, idx, cfg: LossConfig):
    """Loss over dataset rows idx. Returns (loss tensor, t1, t2, t3 floats).

    The pre-step patches of both classes go through one stacked forward
    (unsafe rows first); the slices feed their respective terms.
    """
    safe = arrays["safe"][idx]
    unsafe_idx = idx[~safe]
    safe_idx = idx[safe]
    k_u = unsafe_idx.size

    zero = Tensor(0.0)
    t1 = t2 = t3 = zero
    cat = np.concatenate([unsafe_idx, safe_idx])
    h_all = net.h_tensor(Tensor(arrays["o_t"][cat]))
    if k_u:
        t1 = tsum(relu(narrow(h_all, 0, k_u) + cfg.eps1))
    if safe_idx.size:
        h_s = narrow(h_all, k_u, safe_idx.size)
        h_n = net.h_tensor(Tensor(arrays["o_next"][safe_idx]))
        u_e = net.ue_tensor(Tensor(arrays["u"][safe_idx]))
        t2 = tsum(relu(cfg.eps2 - h_s))
        t3 = tsum(relu(cfg.eps3 - (h_n * u_e + cfg.alpha_gamma * h_s)))
    loss = cfg.c1 * t1 + cfg.c2 * t2 + cfg.c3 * t3
    return loss, t1.item(), t2.item(), t3.item()


def barrier_loss(net: BarrierNetwork, batch, cfg: LossConfig = LossConfig()) -> Tensor:
    """Differentiable three-term margin loss over a labeled batch."""
    batch = list(batch)
    if not batch:
        raise ValidationError("loss needs a nonempty batch")
    arrays = _stack_samples(batch)
    loss, _, _, _ = _loss_from_arrays(net, arrays, np.arange(len(batch)), cfg)
    return loss


# -- training ----------------------------------------------------------------

@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    term1: float
    term2: float
    term3: float
    val_accuracy: float


def _accuracy(net: BarrierNetwork, o_t: np.ndarray, safe: np.ndarray, chunk=128) -> float:
    correct = 0
    for i in range(0, len(safe), chunk):
        h = net._h_arrays(o_t[i : i + chunk])
        correct += int(np.sum((h >= 0.0) == safe[i : i + chunk]))
    return correct / len(safe)


def train(
    train_set,
    val_set,
    cfg: TrainConfig = TrainConfig(),
    loss_cfg: LossConfig = LossConfig(),
    net_cfg: NetworkConfig = NetworkConfig(),
) -> tuple[BarrierNetwork, list[EpochStats]]:
    """Seeded mini-batch training; returns the parameters that scored the
    best validation sign-accuracy, plus the per-epoch history."""
    train_set, val_set = list(train_set), list(val_set)
    if not train_set or not val_set:
        raise ValidationError("train and validation sets must be nonempty")

    net = BarrierNetwork(net_cfg, seed=cfg.seed)
    arrays = _stack_samples(train_set)
    val_arrays = _stack_samples(val_set)
    rng = np.random.default_rng([cfg.seed, 1])
    adam = AdamState(lr=cfg.learning_rate)
    params = net.param_list

    history: list[EpochStats] = []
    best_acc = -1.0
    best_state = net.state()
    n = len(train_set)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        ep = np.zeros(4)
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            net.zero_grad()
            loss, t1, t2, t3 = _loss_from_arrays(net, arrays, idx, loss_cfg)
            for name, value in (("term1", t1), ("term2", t2), ("term3", t3)):
                if not math.isfinite(value):
                    raise TrainingDivergedError(
                        f"{name} became non-finite at epoch {epoch}"
                    )
            loss.backward()
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data)
                     for p in params]
            adam_step(params, grads, adam)
            ep += (loss.item(), t1, t2, t3)
        val_acc = _accuracy(net, val_arrays["o_t"], val_arrays["safe"])
        history.append(EpochStats(epoch, ep[0], ep[1], ep[2], ep[3], val_acc))
        if val_acc >= best_acc:
            best_acc = val_acc
            best_state = net.state()
    net.load_state(best_state)
    return net, history


# -- certificate evaluation ---------------------------------------------------

@dataclass
class CertificateReport:
    """How well the trained barrier separates the labeled data.

    Rates: P(h >= 0 | safe), P(h < 0 | unsafe), and the decrease condition
    P(h(o_next) * u_e + gamma * h(o_t) >= 0 | safe). Histograms are
    (counts, bin_edges) pairs over the corresponding margins.
    """

    safe_rate: float
    unsafe_rate: float
    decrease_rate: float
    safe_h_hist: tuple[np.ndarray, np.ndarray]
    unsafe_h_hist: tuple[np.ndarray, np.ndarray]
    decrease_margin_hist: tuple[np.ndarray, np.ndarray]


def evaluate_certificate(net, dataset, loss_cfg: LossConfig = LossConfig(),
                         chunk: int = 512) -> CertificateReport:
    dataset = list(dataset)
    if not dataset:
        raise ValidationError("evaluate_certificate needs a nonempty dataset")
    safe_mask = np.array([s.label.safe for s in dataset], dtype=bool)
    h_t = np.empty(len(dataset))
    h_n = np.empty(len(dataset))
    u_e = np.empty(len(dataset))
    for lo in range(0, len(dataset), chunk):
        part = dataset[lo : lo + chunk]
        o_t = np.stack([s.o_t.values for s in part]).astype(np.float64)[:, None]
        o_n = np.stack([s.o_next.values for s in part]).astype(np.float64)[:, None]
        us = np.array([[s.u.v, s.u.omega] for s in part], dtype=np.float64)
        h_t[lo : lo + len(part)] = net.forward_h(o_t)
        h_n[lo : lo + len(part)] = net.forward_h(o_n)
        u_e[lo : lo + len(part)] = net.encode_control(us)

    h_safe = h_t[safe_mask]
    h_unsafe = h_t[~safe_mask]
    decrease = h_n[safe_mask] * u_e[safe_mask] + loss_cfg.alpha_gamma * h_safe
    safe_rate = float(np.mean(h_safe >= 0.0)) if h_safe.size else 1.0
    unsafe_rate = float(np.mean(h_unsafe < 0.0)) if h_unsafe.size else 1.0
    decrease_rate = float(np.mean(decrease >= 0.0)) if decrease.size else 1.0
    return CertificateReport(
        safe_rate=safe_rate,
        unsafe_rate=unsafe_rate,
        decrease_rate=decrease_rate,
        safe_h_hist=np.histogram(h_safe, bins=20),
        unsafe_h_hist=np.histogram(h_unsafe, bins=20),
        decrease_margin_hist=np.histogram(decrease, bins=20),
    )
