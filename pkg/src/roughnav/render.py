"""Terrain/trajectory rendering to binary PPM (P6) images.

Pixel (row, col) maps to world (origin_x + col*res, origin_y + row*res);
row 0 is written first, so the world origin sits at the image's top-left.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .errors import DomainError
from .terrain import DEFAULT_PATCH, Heightfield, PatchConfig, extract_patches
from .vehicle import DEFAULT_GEOMETRY, Trajectory, VehicleGeometry, _settle_many

_TRAJ_COLOR = np.array([220, 40, 40], dtype=np.int16)
_SAFE_TINT = np.array([0, 60, 0], dtype=np.int16)
_UNSAFE_TINT = np.array([70, -30, -30], dtype=np.int16)


def world_to_pixel(hf: Heightfield, x: float, y: float) -> tuple[int, int]:
    """Nearest pixel (row, col) for a world point."""
    col = int(round((x - hf.origin[0]) / hf.resolution))
    row = int(round((y - hf.origin[1]) / hf.resolution))
    if not (0 <= col < hf.cols and 0 <= row < hf.rows):
        raise DomainError(f"point ({x}, {y}) maps outside the image")
    return row, col


def render(
    hf: Heightfield,
    trajectory: Trajectory | None = None,
    net=None,
    path=None,
    mask_stride: int = 5,
    patch_cfg: PatchConfig = DEFAULT_PATCH,
    geom: VehicleGeometry = DEFAULT_GEOMETRY,
) -> np.ndarray:
    """Grayscale elevation with optional trajectory and barrier-sign overlays.

    Returns the RGB array (rows, cols, 3); writes a binary PPM when path is
    given. The barrier mask tints cells green where h >= 0 and red where
    h < 0, evaluated at stride over cells whose patch footprint fits.
    """
    h = hf.heights.astype(np.float64)
    lo, hi = float(h.min()), float(h.max())
    if hi > lo:
        gray = np.round((h - lo) / (hi - lo) * 255.0).astype(np.int16)
    else:
        gray = np.full(h.shape, 128, dtype=np.int16)
    img = np.repeat(gray[:, :, None], 3, axis=2)

    if net is not None:
        img = _overlay_mask(img, hf, net, mask_stride, patch_cfg, geom)

    if trajectory is not None:
        for s in trajectory.states:
            r, c = world_to_pixel(hf, s.x, s.y)
            img[max(0, r - 1): r + 2, max(0, c - 1): c + 2] = _TRAJ_COLOR

    img = np.clip(img, 0, 255).astype(np.uint8)
    if path is not None:
        header = f"P6\n{hf.cols} {hf.rows}\n255\n".encode("ascii")
        Path(path).write_bytes(header + img.tobytes())
    return img


def _overlay_mask(img, hf, net, stride, patch_cfg, geom):
    rows = np.arange(0, hf.rows, stride)
    cols = np.arange(0, hf.cols, stride)
    cc, rr = np.meshgrid(cols, rows)
    xs = hf.origin[0] + cc.ravel() * hf.resolution
    ys = hf.origin[1] + rr.ravel() * hf.resolution
    yaw = np.zeros_like(xs)
    z, _, _, _, ok = _settle_many(hf, xs, ys, yaw, geom)
    vals, p_ok = extract_patches(hf, xs, ys, z, yaw, patch_cfg)
    ok &= p_ok
    if ok.any():
        hvals = np.asarray(net.forward_h(vals[ok]), dtype=np.float64).reshape(-1)
        safe = hvals >= 0.0
        rs, cs = rr.ravel()[ok], cc.ravel()[ok]
        half = max(1, stride // 2)
        for r, c, s in zip(rs, cs, safe):
            tint = _SAFE_TINT if s else _UNSAFE_TINT
            img[max(0, r - half): r + half + 1,
                max(0, c - half): c + half + 1] += tint
    return img
