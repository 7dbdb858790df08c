"""Independent reference implementations used by the test suite.

Everything here is deliberately naive (plain loops, plain floats) and kept
separate from the library code paths it checks.
"""

import math

import numpy as np


def naive_conv2d(x, w, b, stride, pad):
    """Quadruple-loop cross-correlation over [N, C, H, W]."""
    n, c, h, wd = x.shape
    co, ci, kh, kw = w.shape
    assert c == ci
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, co, oh, ow))
    for ni in range(n):
        for o in range(co):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for cc in range(c):
                        for ki in range(kh):
                            for kj in range(kw):
                                acc += (
                                    w[o, cc, ki, kj]
                                    * xp[ni, cc, i * stride + ki, j * stride + kj]
                                )
                    out[ni, o, i, j] = acc + (b[o] if b is not None else 0.0)
    return out


def fd_grad(f, tensor, h=1e-6):
    """Central finite differences of a scalar-valued callable wrt tensor.data."""
    g = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gf[i] = (fp - fm) / (2 * h)
    return g


def hand_h_single_conv(net, patch):
    """Plain-loop forward of a one-conv-layer barrier network."""
    cfg = net.cfg
    assert len(cfg.conv_channels) == 1 and len(cfg.dense_widths) == 1
    x = np.asarray(patch, dtype=np.float64)
    w = net.params["conv0.w"].data
    b = net.params["conv0.b"].data
    k, s = cfg.kernel_size, cfg.conv_stride
    oh = (cfg.patch_rows - k) // s + 1
    ow = (cfg.patch_cols - k) // s + 1
    conv = np.zeros((w.shape[0], oh, ow))
    for o in range(w.shape[0]):
        for i in range(oh):
            for j in range(ow):
                acc = b[o]
                for ki in range(k):
                    for kj in range(k):
                        acc += w[o, 0, ki, kj] * x[i * s + ki, j * s + kj]
                conv[o, i, j] = max(acc, 0.0)
    flat = conv.reshape(-1)
    hidden = np.maximum(flat @ net.params["fc0.w"].data + net.params["fc0.b"].data, 0.0)
    return float(hidden @ net.params["head.w"].data[:, 0] + net.params["head.b"].data[0])


def hand_encode(net, v, omega):
    """Plain-float forward of the control encoder."""
    e = np.maximum(
        np.array([v, omega]) @ net.params["enc0.w"].data + net.params["enc0.b"].data,
        0.0,
    )
    z = float(e @ net.params["enc1.w"].data[:, 0] + net.params["enc1.b"].data[0])
    return math.log1p(math.exp(-abs(z))) + max(z, 0.0)


def hand_adam_sequence(grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8, theta0=0.0):
    """Scalar Adam recurrence evaluated with plain floats."""
    theta, m, v = theta0, 0.0, 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        theta -= lr * mhat / (math.sqrt(vhat) + eps)
        out.append(theta)
    return out
