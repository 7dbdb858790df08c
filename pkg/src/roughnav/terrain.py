"""Synthetic 2.5D elevation terrain: generation, interpolated queries, and
robot-centric observation patches.

World frame: x runs along grid columns, y along grid rows, heights in meters.
``heights[row, col]`` is the elevation at
``(origin_x + col * resolution, origin_y + row * resolution)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import DomainError, ValidationError

if TYPE_CHECKING:
    from .vehicle import RobotState

# Observation patch pixel dimensions (rows along heading, cols lateral).
PATCH_ROWS = 100
PATCH_COLS = 40

DEFAULT_MAX_HEIGHT = 0.6


class Difficulty(enum.Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


# Per-difficulty synthesis parameters, version-pinned so a TerrainSpec is a
# complete recipe. Terrain is a gentle rolling base shared by all levels plus
# sparse steep hazard bumps whose density/steepness grow with difficulty:
# hard fields stay threadable (hazards are discrete obstacles, not blanket
# roughness), matching a reconfigurable rock testbed.
# Fields: (base bumps per m^2, base amplitude m, base sigma range m,
#          hazard bumps per m^2, hazard amplitude m, hazard sigma range m,
#          ridge count, trench count).
_DIFFICULTY_PARAMS = {
    Difficulty.LOW: (0.6, 0.06, (0.35, 0.70), 0.0, 0.0, (0.25, 0.45), 0, 0),
    Difficulty.MEDIUM: (0.6, 0.06, (0.35, 0.70), 0.06, 0.20, (0.25, 0.45), 1, 1),
    Difficulty.HIGH: (0.6, 0.06, (0.35, 0.70), 0.12, 0.28, (0.22, 0.40), 2, 1),
}
_DIFFICULTY_CODE = {Difficulty.LOW: 0, Difficulty.MEDIUM: 1, Difficulty.HIGH: 2}


@dataclass(frozen=True)
class TerrainSpec:
    """Recipe for a deterministic synthetic terrain.

    amplitude / feature_density, when given, multiply every feature
    amplitude / both feature densities of the difficulty preset (so
    amplitude=0 yields a flat field).
    """

    seed: int
    difficulty: Difficulty = Difficulty.MEDIUM
    extent: tuple[float, float] = (3.1, 5.0)  # width (x) by length (y), meters
    resolution: float = 0.05
    max_height: float = DEFAULT_MAX_HEIGHT
    amplitude: float | None = None
    feature_density: float | None = None

    def __post_init__(self):
        if self.extent[0] <= 0 or self.extent[1] <= 0:
            raise ValidationError(f"extent must be positive, got {self.extent}")
        if self.resolution <= 0:
            raise ValidationError(f"resolution must be > 0, got {self.resolution}")
        if self.max_height <= 0:
            raise ValidationError("max_height must be > 0")
        if isinstance(self.difficulty, str):
            object.__setattr__(self, "difficulty", Difficulty(self.difficulty))


@dataclass
class Heightfield:
    """Gridded 2.5D elevation map (row-major float32 heights)."""

    cols: int
    rows: int
    resolution: float
    origin: tuple[float, float]
    heights: np.ndarray

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValidationError("resolution must be > 0")
        if self.cols < 2 or self.rows < 2:
            raise ValidationError("grid must be at least 2x2")
        self.heights = np.ascontiguousarray(self.heights, dtype=np.float32)
        if self.heights.shape != (self.rows, self.cols):
            raise ValidationError(
                f"heights shape {self.heights.shape} != (rows, cols) = "
                f"{(self.rows, self.cols)}"
            )
        if not np.isfinite(self.heights).all():
            raise ValidationError("heights contain non-finite values")

    @property
    def extent_x(self) -> float:
        return (self.cols - 1) * self.resolution

    @property
    def extent_y(self) -> float:
        return (self.rows - 1) * self.resolution

    def contains(self, x: float, y: float) -> bool:
        ox, oy = self.origin
        return (ox <= x <= ox + self.extent_x) and (oy <= y <= oy + self.extent_y)

    def elevation_at(self, x: float, y: float) -> float:
        """Bilinear interpolation of the four surrounding cells."""
        v, ok = _bilinear(self, np.asarray([x], float), np.asarray([y], float))
        if not ok[0]:
            raise DomainError(
                f"query ({x}, {y}) outside terrain extent "
                f"[{self.origin[0]}, {self.origin[0] + self.extent_x}] x "
                f"[{self.origin[1]}, {self.origin[1] + self.extent_y}]"
            )
        return float(v[0])


def _bilinear(hf: Heightfield, xq: np.ndarray, yq: np.ndarray):
    """Vectorized bilinear interpolation.

    Returns (values, inside) where values are float64 and inside marks queries
    within the grid extent. Out-of-extent entries hold 0.0.
    """
    ox, oy = hf.origin
    gx = (xq - ox) / hf.resolution
    gy = (yq - oy) / hf.resolution
    inside = (gx >= 0) & (gx <= hf.cols - 1) & (gy >= 0) & (gy <= hf.rows - 1)
    gx = np.where(inside, gx, 0.0)
    gy = np.where(inside, gy, 0.0)
    # Clamp the base cell so queries on the far edge read the last cell with
    # fractional coordinate exactly 1 (keeps edge values exact).
    i0 = np.minimum(gx.astype(np.int64), hf.cols - 2)
    j0 = np.minimum(gy.astype(np.int64), hf.rows - 2)
    tx = gx - i0
    ty = gy - j0
    h = hf.heights
    h00 = h[j0, i0].astype(np.float64)
    h01 = h[j0, i0 + 1].astype(np.float64)
    h10 = h[j0 + 1, i0].astype(np.float64)
    h11 = h[j0 + 1, i0 + 1].astype(np.float64)
    top = h00 * (1.0 - tx) + h01 * tx
    bot = h10 * (1.0 - tx) + h11 * tx
    return top * (1.0 - ty) + bot * ty, inside


def generate(spec: TerrainSpec) -> Heightfield:
    """Deterministic terrain synthesis from a TerrainSpec.

    A rolling base of gentle seeded Gaussian bumps, sparse steep hazard
    bumps, and (on harder settings) ridge and trench segments; hazard
    density and amplitude grow with difficulty, so gradient statistics scale
    monotonically. Heights are clipped to +-max_height.
    """
    width, length = spec.extent
    cols = int(round(width / spec.resolution)) + 1
    rows = int(round(length / spec.resolution)) + 1
    if cols < 2 or rows < 2:
        raise ValidationError("extent too small for the requested resolution")

    (base_density, base_amp, base_sigma, hazard_density, hazard_amp,
     hazard_sigma, n_ridges, n_trenches) = _DIFFICULTY_PARAMS[spec.difficulty]
    amp_scale = 1.0 if spec.amplitude is None else spec.amplitude
    density_scale = 1.0 if spec.feature_density is None else spec.feature_density

    rng = np.random.default_rng([spec.seed, _DIFFICULTY_CODE[spec.difficulty]])
    xs = np.arange(cols, dtype=np.float64) * spec.resolution
    ys = np.arange(rows, dtype=np.float64) * spec.resolution
    gx, gy = np.meshgrid(xs, ys)
    heights = np.zeros((rows, cols), dtype=np.float64)

    area = width * length

    def add_bumps(density, amp, sigma_range, dip_prob):
        n = max(0, int(round(density * density_scale * area)))
        if not n or amp == 0.0:
            # keep the stream position independent of the amplitude override
            if n:
                rng.uniform(size=(n, 2))
                rng.uniform(size=n)
                rng.uniform(size=n)
                rng.random(n)
            return
        centers = rng.uniform([0.0, 0.0], [width, length], size=(n, 2))
        sigmas = rng.uniform(sigma_range[0], sigma_range[1], size=n)
        scales = rng.uniform(0.6, 1.4, size=n)
        signs = np.where(rng.random(n) < dip_prob, -0.5, 1.0)
        for k in range(n):
            d2 = (gx - centers[k, 0]) ** 2 + (gy - centers[k, 1]) ** 2
            heights[...] += (amp_scale * amp * scales[k] * signs[k]
                             * np.exp(-d2 / (2.0 * sigmas[k] ** 2)))

    add_bumps(base_density, base_amp, base_sigma, dip_prob=0.4)
    add_bumps(hazard_density, hazard_amp, hazard_sigma, dip_prob=0.0)

    ridge_amp = hazard_amp if hazard_amp > 0 else base_amp
    for kind, count in (("ridge", n_ridges), ("trench", n_trenches)):
        for _ in range(count):
            px, py = rng.uniform([0.0, 0.0], [width, length])
            theta = rng.uniform(0.0, math.pi)
            if kind == "ridge":
                half_width = rng.uniform(0.10, 0.25)
                a = 1.2 * ridge_amp * rng.uniform(0.8, 1.2)
            else:
                half_width = rng.uniform(0.08, 0.18)
                a = -1.0 * ridge_amp * rng.uniform(0.8, 1.2)
            seg_len = rng.uniform(0.25, 0.5) * min(width, length)
            dx, dy = gx - px, gy - py
            perp = -math.sin(theta) * dx + math.cos(theta) * dy
            along = math.cos(theta) * dx + math.sin(theta) * dy
            over = np.maximum(np.abs(along) - seg_len / 2.0, 0.0)
            heights += (amp_scale * a * np.exp(-(perp**2) / (2.0 * half_width**2))
                        * np.exp(-(over**2) / (2.0 * 0.2**2)))

    np.clip(heights, -spec.max_height, spec.max_height, out=heights)
    return Heightfield(
        cols=cols,
        rows=rows,
        resolution=spec.resolution,
        origin=(0.0, 0.0),
        heights=heights.astype(np.float32),
    )


@dataclass(frozen=True)
class PatchConfig:
    """Physical footprint of the observation patch (pixel dims are fixed).

    The footprint lies ahead of the robot: rows run front-to-back from
    ``length`` meters ahead down to the robot position, columns left-to-right
    across ``width`` meters centered on the heading line.
    """

    length: float = 2.0
    width: float = 0.8

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValidationError("patch footprint must be positive")

    @property
    def reach(self) -> float:
        """Max distance from anchor to any sample point, any yaw."""
        return math.hypot(self.length, self.width / 2.0)


DEFAULT_PATCH = PatchConfig()


@dataclass
class ObservationPatch:
    """Robot-frame relative elevation patch: terrain height minus robot z."""

    values: np.ndarray
    anchor: "RobotState | None" = None

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.shape != (PATCH_ROWS, PATCH_COLS):
            raise ValidationError(
                f"patch shape {self.values.shape} != ({PATCH_ROWS}, {PATCH_COLS})"
            )
        if not np.isfinite(self.values).all():
            raise ValidationError("patch contains non-finite values")


def _patch_lattice(cfg: PatchConfig) -> np.ndarray:
    """Robot-frame sample points, shape (PATCH_ROWS, PATCH_COLS, 2).

    [..., 0] is the forward offset (row 0 farthest ahead), [..., 1] the
    lateral offset (col 0 leftmost, left positive). Points sit at cell
    centers of the footprint grid.
    """
    df = cfg.length / PATCH_ROWS
    dl = cfg.width / PATCH_COLS
    fwd = cfg.length - (np.arange(PATCH_ROWS, dtype=np.float64) + 0.5) * df
    lat = cfg.width / 2.0 - (np.arange(PATCH_COLS, dtype=np.float64) + 0.5) * dl
    out = np.empty((PATCH_ROWS, PATCH_COLS, 2))
    out[..., 0] = fwd[:, None]
    out[..., 1] = lat[None, :]
    return out


def extract_patches(
    hf: Heightfield,
    x: np.ndarray,
    y: np.ndarray,
    z: np.ndarray,
    yaw: np.ndarray,
    cfg: PatchConfig = DEFAULT_PATCH,
):
    """Batch patch sampling for K anchor poses.

    Returns (values, ok): values float32 of shape (K, PATCH_ROWS, PATCH_COLS)
    and a boolean mask marking anchors whose full footprint lies inside the
    field. Rows of values with ok=False are zero.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    z = np.asarray(z, float)
    yaw = np.asarray(yaw, float)
    k = x.shape[0]
    lattice = _patch_lattice(cfg)  # (R, C, 2)
    c, s = np.cos(yaw), np.sin(yaw)
    f = lattice[..., 0].ravel()  # (R*C,)
    l = lattice[..., 1].ravel()
    # world = pos + f * (cos, sin) + l * (-sin, cos)
    wx = x[:, None] + f[None, :] * c[:, None] - l[None, :] * s[:, None]
    wy = y[:, None] + f[None, :] * s[:, None] + l[None, :] * c[:, None]
    vals, inside = _bilinear(hf, wx.ravel(), wy.ravel())
    vals = vals.reshape(k, PATCH_ROWS, PATCH_COLS)
    ok = inside.reshape(k, -1).all(axis=1)
    rel = vals - z[:, None, None]
    rel[~ok] = 0.0
    return rel.astype(np.float32), ok


def extract_patch(
    hf: Heightfield, state: "RobotState", cfg: PatchConfig = DEFAULT_PATCH
) -> ObservationPatch:
    """Observation patch at a robot pose; errors if the footprint exits the field."""
    vals, ok = extract_patches(
        hf,
        np.asarray([state.x]),
        np.asarray([state.y]),
        np.asarray([state.z]),
        np.asarray([state.yaw]),
        cfg,
    )
    if not ok[0]:
        raise DomainError(
            f"patch footprint at ({state.x:.3f}, {state.y:.3f}, yaw={state.yaw:.3f}) "
            "exits the terrain extent"
        )
    return ObservationPatch(values=vals[0], anchor=state)


def gradient_p95(hf: Heightfield) -> float:
    """95th percentile of the local gradient magnitude (rise over run)."""
    dy, dx = np.gradient(hf.heights.astype(np.float64), hf.resolution)
    return float(np.percentile(np.hypot(dx, dy), 95.0))
