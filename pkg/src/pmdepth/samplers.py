"""Synthetic scenes and pluggable per-patch sample sources.

Scenes are piecewise-planar depth maps built from axis-aligned rectangles.
The synthetic sampler turns a ground-truth scene into a per-patch sample
set: each sample is the true patch plus a planar perturbation (offset and
tilt) and i.i.d. pixel noise.

Monocular ambiguity is modeled regionally, the way it shows up in real
predictors (a whole wall or floor section reads as two plausible depths):
the image is tiled into square cells, each cell is ambiguity-bearing with
probability ``p_amb``, and an ambiguity-bearing cell carries one fixed
competing hypothesis — a coherent whole-patch displacement of magnitude
``amb_shift`` in a direction fixed per cell.  Inside such a cell a
fraction ``amb_weight`` of every patch's samples follow the competing
hypothesis (``amb_weight > 0.5`` makes the sampler confidently wrong
there, which is exactly the failure mode guided measurement and diverse
modes exist to repair), while the rest stay near the truth.

Randomness is counter-based: the stream for (patch, sample) is keyed by
(seed, patch index, sample index), and the cell state by (seed, cell
index), so any single patch's samples can be regenerated in isolation
without touching any other patch's streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pmdepth.core import DepthMap, PatchGrid, crop

__all__ = [
    "RectPlane",
    "SceneSpec",
    "SamplerConfig",
    "SampleSet",
    "render_scene",
    "random_scene",
    "synthesize_samples",
    "synthesize_patch",
]

_DEPTH_FLOOR = 1e-3
_PHILOX_SALT = 0x9E3779B97F4A7C15
_CELL_SALT = 0xC0FFEE
_SCENE_SALT = 0x5CE9E5


@dataclass(frozen=True)
class RectPlane:
    """Axis-aligned rectangle carrying a planar depth patch.

    Depth inside the rectangle is ``depth + slope_y * dy + slope_x * dx``
    with (dy, dx) measured from the rectangle's top-left corner.
    """

    top: int
    left: int
    height: int
    width: int
    depth: float
    slope_y: float = 0.0
    slope_x: float = 0.0

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("rectangle must be at least 1 x 1")


@dataclass(frozen=True)
class SceneSpec:
    """Recipe for a piecewise-planar scene."""

    height: int
    width: int
    depth_range: tuple[float, float]
    seed: int
    layout: list[RectPlane]

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("scene dimensions must be positive")
        lo, hi = self.depth_range
        if not (0 < lo < hi):
            raise ValueError(f"depth range must satisfy 0 < lo < hi, got {self.depth_range}")
        if not self.layout:
            raise ValueError("scene layout must contain at least one rectangle")
        object.__setattr__(self, "depth_range", (float(lo), float(hi)))
        object.__setattr__(self, "layout", list(self.layout))


@dataclass(frozen=True)
class SamplerConfig:
    """Controls for the synthetic per-patch sampler.

    sigma          i.i.d. pixel noise scale (meters)
    offset_scale   planar offset perturbation scale (meters)
    tilt_scale     planar tilt perturbation scale (meters / pixel)
    p_amb          probability a cell is ambiguity-bearing
    amb_shift      magnitude of the cell's competing displacement (meters)
    amb_jitter     spread around the competing displacement (meters)
    amb_weight     fraction of samples following the competing hypothesis
                   inside an ambiguity-bearing cell
    amb_cell       coherence cell size in pixels
    """

    sigma: float = 0.05
    offset_scale: float = 0.05
    tilt_scale: float = 0.005
    p_amb: float = 0.0
    amb_shift: float = 0.5
    amb_jitter: float = 0.05
    amb_weight: float = 0.7
    amb_cell: int = 16
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma", "offset_scale", "tilt_scale", "amb_shift", "amb_jitter"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.p_amb <= 1.0:
            raise ValueError("p_amb must lie in [0, 1]")
        if not 0.0 <= self.amb_weight <= 1.0:
            raise ValueError("amb_weight must lie in [0, 1]")
        if self.amb_cell < 1:
            raise ValueError("amb_cell must be >= 1")

    @classmethod
    def mild(cls, seed: int = 0) -> "SamplerConfig":
        """Unimodal perturbations only; good for sanity and fusion tests."""
        return cls(seed=seed)

    @classmethod
    def ambiguous(cls, seed: int = 0) -> "SamplerConfig":
        """Bimodal preset: roughly 30% of 16 px cells carry a coherent
        +/- 0.5 m competing hypothesis that attracts 70% of each affected
        patch's samples, so central estimates go confidently wrong there
        while a correct minority mode survives."""
        return cls(
            sigma=0.02,
            offset_scale=0.05,
            tilt_scale=0.002,
            p_amb=0.3,
            amb_shift=0.5,
            amb_jitter=0.05,
            amb_weight=0.7,
            amb_cell=16,
            seed=seed,
        )


@dataclass(frozen=True)
class SampleSet:
    """Per-patch depth samples: tensor [patch_row, patch_col, sample, ky, kx]."""

    samples: np.ndarray
    grid: PatchGrid

    def __post_init__(self):
        vals = np.asarray(self.samples)
        expected_prefix = (self.grid.rows, self.grid.cols)
        if vals.ndim != 5 or vals.shape[:2] != expected_prefix or vals.shape[3:] != (
            self.grid.patch,
            self.grid.patch,
        ):
            raise ValueError(
                f"sample tensor shape {vals.shape} does not match grid "
                f"{self.grid.rows} x {self.grid.cols} patches of size {self.grid.patch}"
            )
        if vals.dtype != np.float32:
            vals = vals.astype(np.float32)
        if not np.all(np.isfinite(vals)):
            raise ValueError("sample tensor contains non-finite values")
        if vals.size and vals.min() <= 0:
            raise ValueError("sample depths must be > 0")
        vals = np.array(vals, copy=True)
        vals.flags.writeable = False
        object.__setattr__(self, "samples", vals)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[2]


def render_scene(spec: SceneSpec) -> DepthMap:
    """Paint the layout rectangles in order and clamp to the depth range."""
    lo, hi = spec.depth_range
    canvas = np.full((spec.height, spec.width), 0.5 * (lo + hi), dtype=np.float64)
    for rect in spec.layout:
        y0 = max(0, rect.top)
        x0 = max(0, rect.left)
        y1 = min(spec.height, rect.top + rect.height)
        x1 = min(spec.width, rect.left + rect.width)
        if y0 >= y1 or x0 >= x1:
            continue
        yy, xx = np.meshgrid(np.arange(y0, y1), np.arange(x0, x1), indexing="ij")
        canvas[y0:y1, x0:x1] = (
            rect.depth
            + rect.slope_y * (yy - rect.top)
            + rect.slope_x * (xx - rect.left)
        )
    return DepthMap(np.clip(canvas, lo, hi))


def random_scene(
    height: int,
    width: int,
    seed: int,
    n_rects: int = 4,
    depth_range: tuple[float, float] = (1.0, 4.0),
) -> SceneSpec:
    """Deterministic random piecewise-planar scene for test suites."""
    rng = np.random.default_rng([_SCENE_SALT, seed])
    lo, hi = depth_range
    span = hi - lo
    slope_cap = span / (2.0 * max(height, width))
    layout = [
        RectPlane(
            top=0,
            left=0,
            height=height,
            width=width,
            depth=float(rng.uniform(lo + 0.25 * span, hi - 0.25 * span)),
            slope_y=float(rng.uniform(-slope_cap, slope_cap)),
            slope_x=float(rng.uniform(-slope_cap, slope_cap)),
        )
    ]
    for _ in range(n_rects):
        rh = int(rng.integers(max(2, height // 4), max(3, 3 * height // 4)))
        rw = int(rng.integers(max(2, width // 4), max(3, 3 * width // 4)))
        layout.append(
            RectPlane(
                top=int(rng.integers(0, max(1, height - rh + 1))),
                left=int(rng.integers(0, max(1, width - rw + 1))),
                height=rh,
                width=rw,
                depth=float(rng.uniform(lo + 0.1 * span, hi - 0.1 * span)),
                slope_y=float(rng.uniform(-slope_cap, slope_cap)),
                slope_x=float(rng.uniform(-slope_cap, slope_cap)),
            )
        )
    return SceneSpec(height=height, width=width, depth_range=depth_range, seed=seed, layout=layout)


def _stream(seed: int, patch_index: int, sample_index: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, patch, sample) only."""
    bits = np.random.Philox(
        key=[seed & 0xFFFFFFFFFFFFFFFF, _PHILOX_SALT],
        counter=[0, 0, patch_index, sample_index],
    )
    return np.random.Generator(bits)


def _cell_sign(cfg: SamplerConfig, origin_y: int, origin_x: int) -> float | None:
    """Competing-hypothesis direction of the cell holding a patch origin,
    or None when the cell is not ambiguity-bearing.  Keyed by (seed, cell
    index) alone, so it is recomputable for one patch in isolation."""
    if cfg.p_amb <= 0.0:
        return None
    bits = np.random.Philox(
        key=[cfg.seed & 0xFFFFFFFFFFFFFFFF, _CELL_SALT],
        counter=[0, 0, origin_y // cfg.amb_cell, origin_x // cfg.amb_cell],
    )
    u = np.random.Generator(bits).random(2)
    if u[0] >= cfg.p_amb:
        return None
    return 1.0 if u[1] < 0.5 else -1.0


def _one_sample(
    gt_patch64: np.ndarray,
    dy: np.ndarray,
    dx: np.ndarray,
    rng: np.random.Generator,
    cfg: SamplerConfig,
    amb_sign: float | None,
) -> np.ndarray:
    u = rng.random()
    nrm = rng.standard_normal(3)
    noise = rng.standard_normal(gt_patch64.shape)
    if amb_sign is not None and u < cfg.amb_weight:
        offset = amb_sign * cfg.amb_shift + nrm[0] * cfg.amb_jitter
    else:
        offset = nrm[0] * cfg.offset_scale
    plane = offset + nrm[1] * cfg.tilt_scale * dy + nrm[2] * cfg.tilt_scale * dx
    vals = gt_patch64 + plane + cfg.sigma * noise
    return np.maximum(vals, _DEPTH_FLOOR)


def _patch_deltas(patch: int) -> tuple[np.ndarray, np.ndarray]:
    center = (patch - 1) / 2.0
    dy, dx = np.meshgrid(
        np.arange(patch) - center, np.arange(patch) - center, indexing="ij"
    )
    return dy, dx


def synthesize_patch(
    gt: DepthMap, grid: PatchGrid, index, n_samples: int, cfg: SamplerConfig
) -> np.ndarray:
    """Samples for a single patch, shape [n_samples, K, K] float32."""
    r, c = index
    gt_patch = crop(gt, grid, (r, c)).astype(np.float64)
    dy, dx = _patch_deltas(grid.patch)
    flat = r * grid.cols + c
    sign = _cell_sign(cfg, *grid.origin(r, c))
    out = np.empty((n_samples, grid.patch, grid.patch), dtype=np.float32)
    for s in range(n_samples):
        out[s] = _one_sample(gt_patch, dy, dx, _stream(cfg.seed, flat, s), cfg, sign)
    return out


def synthesize_samples(
    gt: DepthMap, grid: PatchGrid, n_samples: int, cfg: SamplerConfig
) -> SampleSet:
    """Draw the full per-patch sample tensor for a ground-truth scene."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if (gt.height, gt.width) != (grid.height, grid.width):
        raise ValueError(
            f"scene shape {gt.shape} does not match grid {grid.height} x {grid.width}"
        )
    dy, dx = _patch_deltas(grid.patch)
    tensor = np.empty(
        (grid.rows, grid.cols, n_samples, grid.patch, grid.patch), dtype=np.float32
    )
    for r in range(grid.rows):
        for c in range(grid.cols):
            gt_patch = crop(gt, grid, (r, c)).astype(np.float64)
            flat = r * grid.cols + c
            sign = _cell_sign(cfg, *grid.origin(r, c))
            for s in range(n_samples):
                tensor[r, c, s] = _one_sample(
                    gt_patch, dy, dx, _stream(cfg.seed, flat, s), cfg, sign
                )
    return SampleSet(tensor, grid)
