"""Depth map containers and overlapping-patch geometry.

A depth map is decomposed into K x K patches laid out on a regular grid
with a fixed stride.  Cropping extracts one patch window; overlap
averaging is the adjoint-style reconstruction that assigns every pixel
the uniform mean of all patch values covering it, which is the exact
least-squares minimizer of sum_i ||P_i Z - x_i||^2 over Z.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PatchGrid",
    "DepthMap",
    "BinaryMask",
    "SparseMeasurements",
    "make_patch_grid",
    "crop",
    "overlap_average",
    "coverage_counts",
]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PatchGrid:
    """Geometry of overlapping K x K patches at a fixed stride."""

    height: int
    width: int
    patch: int
    stride: int
    rows: int
    cols: int

    @property
    def n_patches(self) -> int:
        return self.rows * self.cols

    def origin(self, r: int, c: int) -> tuple[int, int]:
        """Top-left pixel of patch (r, c)."""
        return r * self.stride, c * self.stride

    def covering(self, y: int, x: int) -> list[tuple[int, int]]:
        """All patch indices (r, c) whose window contains pixel (y, x)."""
        rr = _axis_cover_range(y, self.patch, self.stride, self.rows)
        cc = _axis_cover_range(x, self.patch, self.stride, self.cols)
        return [(r, c) for r in rr for c in cc]


def _axis_cover_range(pos: int, patch: int, stride: int, count: int) -> range:
    lo = max(0, -(-(pos - patch + 1) // stride))  # ceil division
    hi = min(count - 1, pos // stride)
    return range(lo, hi + 1)


def make_patch_grid(height: int, width: int, patch: int, stride: int) -> PatchGrid:
    """Validate dimensions and build the patch grid.

    Every dimension must satisfy (dim - patch) % stride == 0 so the patch
    windows tile the image exactly; misaligned dimensions raise rather
    than being padded or cropped.
    """
    if patch < 1:
        raise ValueError(f"patch size must be >= 1, got {patch}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if stride > patch:
        raise ValueError(
            f"stride {stride} exceeds patch size {patch}; windows must "
            f"overlap or abut so every pixel is covered"
        )
    for name, dim in (("height", height), ("width", width)):
        if dim < patch:
            raise ValueError(
                f"{name} {dim} is smaller than patch size {patch}"
            )
        if (dim - patch) % stride != 0:
            raise ValueError(
                f"{name} {dim} misaligned: ({dim} - {patch}) is not a "
                f"multiple of stride {stride}"
            )
    rows = (height - patch) // stride + 1
    cols = (width - patch) // stride + 1
    return PatchGrid(height, width, patch, stride, rows, cols)


@dataclass(frozen=True)
class DepthMap:
    """H x W depth values in meters, with an optional validity mask.

    Values are stored as float32 (the on-disk precision) and frozen after
    construction.
    """

    values: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float32, copy=True)
        if vals.ndim != 2:
            raise ValueError(f"depth map must be 2-d, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("depth map contains non-finite values")
        object.__setattr__(self, "values", _frozen(vals))
        if self.valid is not None:
            mask = np.array(self.valid, copy=True).astype(bool)
            if mask.shape != vals.shape:
                raise ValueError(
                    f"validity mask shape {mask.shape} != depth shape {vals.shape}"
                )
            object.__setattr__(self, "valid", _frozen(mask))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class BinaryMask:
    """H x W mask of {0, 1} values (1 = selected pixel)."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, copy=True)
        if vals.ndim != 2:
            raise ValueError(f"mask must be 2-d, got shape {vals.shape}")
        as_u8 = vals.astype(np.uint8)
        if not np.array_equal(as_u8, vals) or as_u8.max(initial=0) > 1:
            raise ValueError("mask values must be 0 or 1")
        object.__setattr__(self, "values", _frozen(as_u8))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @classmethod
    def zeros(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=np.uint8))

    @classmethod
    def ones(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.ones((height, width), dtype=np.uint8))


@dataclass(frozen=True)
class SparseMeasurements:
    """Point depth measurements at integer pixel coordinates.

    ``pattern`` records whether the coordinates form a complete axis-aligned
    lattice (``regular-grid``, at least 2 distinct rows and columns) or an
    arbitrary scatter (``random-points``).
    """

    rows: np.ndarray
    cols: np.ndarray
    depths: np.ndarray
    shape: tuple[int, int]
    pattern: str = field(default="")

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.int64, copy=True)
        cols = np.array(self.cols, dtype=np.int64, copy=True)
        depths = np.array(self.depths, dtype=np.float64, copy=True)
        if not (rows.ndim == cols.ndim == depths.ndim == 1):
            raise ValueError("measurement arrays must be 1-d")
        if not (len(rows) == len(cols) == len(depths)):
            raise ValueError("measurement arrays must have equal length")
        h, w = self.shape
        if len(rows) and (
            rows.min() < 0 or rows.max() >= h or cols.min() < 0 or cols.max() >= w
        ):
            raise ValueError("measurement coordinates out of bounds")
        if len(np.unique(rows * w + cols)) != len(rows):
            raise ValueError("duplicate measurement coordinates")
        if len(depths) and (not np.all(np.isfinite(depths)) or depths.min() <= 0):
            raise ValueError("measurement depths must be finite and > 0")
        object.__setattr__(self, "rows", _frozen(rows))
        object.__setattr__(self, "cols", _frozen(cols))
        object.__setattr__(self, "depths", _frozen(depths))
        pattern = self.pattern or self._detect_pattern()
        if pattern not in ("random-points", "regular-grid"):
            raise ValueError(f"unknown measurement pattern {pattern!r}")
        if pattern == "regular-grid" and not self._is_lattice():
            raise ValueError(
                "regular-grid pattern requires a complete axis-aligned lattice"
            )
        object.__setattr__(self, "pattern", pattern)

    def _is_lattice(self) -> bool:
        ur, uc = np.unique(self.rows), np.unique(self.cols)
        if len(ur) < 2 or len(uc) < 2:
            return False
        if len(ur) * len(uc) != len(self.rows):
            return False
        want = {(r, c) for r in ur for c in uc}
        have = set(zip(self.rows.tolist(), self.cols.tolist()))
        return want == have

    def _detect_pattern(self) -> str:
        return "regular-grid" if self._is_lattice() else "random-points"

    def __len__(self) -> int:
        return len(self.rows)

    @classmethod
    def from_arrays(cls, rows, cols, depths, shape, pattern: str = ""):
        return cls(np.asarray(rows), np.asarray(cols), np.asarray(depths), tuple(shape), pattern)


def crop(depth, grid: PatchGrid, index) -> np.ndarray:
    """Extract the K x K window of patch ``index`` (row, col) as a copy."""
    values = depth.values if isinstance(depth, (DepthMap, BinaryMask)) else np.asarray(depth)
    r, c = index
    if not (0 <= r < grid.rows and 0 <= c < grid.cols):
        raise IndexError(
            f"patch index ({r}, {c}) outside grid {grid.rows} x {grid.cols}"
        )
    y0, x0 = grid.origin(r, c)
    return values[y0 : y0 + grid.patch, x0 : x0 + grid.patch].copy()


def crops_tensor(values: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """All patch windows as a [rows, cols, K, K] view (no copy)."""
    win = np.lib.stride_tricks.sliding_window_view(values, (grid.patch, grid.patch))
    return win[:: grid.stride, :: grid.stride]


def accumulate_patches(patch_values: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Scatter-add patch windows back onto the image plane (float64)."""
    patch_values = np.asarray(patch_values)
    expected = (grid.rows, grid.cols, grid.patch, grid.patch)
    if patch_values.shape != expected:
        raise ValueError(
            f"patch tensor shape {patch_values.shape} != grid layout {expected}"
        )
    acc = np.zeros((grid.height, grid.width), dtype=np.float64)
    k, s = grid.patch, grid.stride
    for r in range(grid.rows):
        y0 = r * s
        for c in range(grid.cols):
            x0 = c * s
            acc[y0 : y0 + k, x0 : x0 + k] += patch_values[r, c]
    return acc


def coverage_counts(grid: PatchGrid) -> np.ndarray:
    """Number of patches covering each pixel (always >= 1)."""
    counts = np.zeros((grid.height, grid.width), dtype=np.int64)
    k, s = grid.patch, grid.stride
    for r in range(grid.rows):
        for c in range(grid.cols):
            counts[r * s : r * s + k, c * s : c * s + k] += 1
    return counts


def overlap_average_raw(patch_values: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Per-pixel mean of covering patch values, in float64."""
    return accumulate_patches(patch_values, grid) / coverage_counts(grid)


def overlap_average(patch_values: np.ndarray, grid: PatchGrid) -> DepthMap:
    """Reconstruct a depth map as the uniform per-pixel mean of all patch
    values covering each pixel — the least-squares optimal merge of the
    patch constraints."""
    return DepthMap(overlap_average_raw(patch_values, grid))
