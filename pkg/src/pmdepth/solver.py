"""Alternating MAP inference over per-patch sample sets.

The MAP estimate minimizes, jointly over the depth map Z and one sample
per patch,

    sum_i ||P_i Z - x_i||^2  +  sum_i C_i(x_i)  +  C_G(Z)

by coordinate descent: a selection half-step picks each patch's best
sample given Z (independent argmins), and a global half-step rebuilds Z
as the overlap average of the selected samples, followed by gradient
steps on the global cost when one is present.  With no global cost both
half-steps are exact minimizations, so the objective trace is
non-increasing and the loop terminates on a finite selection space.

Cost models plug in two optional capabilities: a per-patch cost table
over samples (computed once, scaled by the weight) and a global cost with
a pseudo-gradient.  The pseudo-gradient of the sparse measurement cost is
implemented literally as weight * residual, without the factor 2 from
differentiating the quadratic; the 2 is absorbed into the product of the
step size and the weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from pmdepth.core import (
    BinaryMask,
    DepthMap,
    PatchGrid,
    SparseMeasurements,
    crops_tensor,
    overlap_average_raw,
)
from pmdepth.density import mean_depth_raw, patch_sqdists
from pmdepth.samplers import SampleSet

__all__ = [
    "LambdaRamp",
    "CostModel",
    "SolverOptions",
    "SolveReport",
    "precompute_patch_costs",
    "select_samples",
    "update_global",
    "map_infer",
    "make_sparse_cost",
    "make_uncrop_cost",
    "make_diversity_cost",
    "SPARSE_COST_MODES",
]

SPARSE_COST_MODES = ("nearest-neighbor", "bilinear-grid", "exact-adjoint")

DEFAULT_SPARSE_WEIGHT = 1.0
DEFAULT_UNCROP_WEIGHT = 150.0
DEFAULT_DIVERSITY_WEIGHT = 10.0


@dataclass(frozen=True)
class LambdaRamp:
    """Linear schedule for the cost weight across outer iterations."""

    start: float
    end: float
    iters: int

    def value(self, t: int) -> float:
        if self.iters <= 0 or t >= self.iters:
            return self.end
        return self.start + (self.end - self.start) * (t / self.iters)

    def settled(self, t: int) -> bool:
        return self.start == self.end or t >= self.iters


@dataclass(frozen=True)
class CostModel:
    """Pluggable cost: optional per-patch table and/or global term.

    The capability callables are unit-weighted; evaluation scales them by
    ``lam`` (or by the ramped weight inside the solver loop).
    """

    lam: float
    unit_patch_cost: Callable[[SampleSet], np.ndarray] | None = None
    unit_global_value: Callable[[np.ndarray], float] | None = None
    unit_global_grad: Callable[[np.ndarray], np.ndarray] | None = None
    ramp: LambdaRamp | None = None
    kind: str = field(default="custom")

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"cost weight must be >= 0, got {self.lam}")
        if self.unit_patch_cost is None and self.unit_global_value is None:
            raise ValueError("cost model needs at least one capability")
        if (self.unit_global_value is None) != (self.unit_global_grad is None):
            raise ValueError("global cost needs both a value and a gradient")

    @property
    def has_patch_cost(self) -> bool:
        return self.unit_patch_cost is not None

    @property
    def has_global_cost(self) -> bool:
        return self.unit_global_value is not None

    def weight_at(self, t: int) -> float:
        return self.ramp.value(t) if self.ramp is not None else self.lam

    def weight_settled(self, t: int) -> bool:
        return self.ramp is None or self.ramp.settled(t)

    def patch_costs(self, ss: SampleSet, lam: float | None = None) -> np.ndarray:
        if not self.has_patch_cost:
            raise ValueError("cost model has no per-patch capability")
        w = self.lam if lam is None else lam
        return w * self.unit_patch_cost(ss)

    def global_value(self, z: np.ndarray, lam: float | None = None) -> float:
        if not self.has_global_cost:
            raise ValueError("cost model has no global capability")
        w = self.lam if lam is None else lam
        return w * self.unit_global_value(np.asarray(z, dtype=np.float64))

    def global_gradient(self, z: np.ndarray, lam: float | None = None) -> np.ndarray:
        if not self.has_global_cost:
            raise ValueError("cost model has no global capability")
        w = self.lam if lam is None else lam
        return w * self.unit_global_grad(np.asarray(z, dtype=np.float64))


@dataclass(frozen=True)
class SolverOptions:
    """Outer-loop controls.  Convergence means the selection vector is
    unchanged between consecutive outer iterations."""

    max_iters: int = 50
    gamma: float = 0.5
    grad_steps: int = 5

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if self.grad_steps < 1:
            raise ValueError("grad_steps must be >= 1")


@dataclass(frozen=True)
class SolveReport:
    """Outcome of one MAP solve: final map, iteration count, objective
    value after every half-step, convergence flag, and final selection."""

    depth: DepthMap
    iterations: int
    trace: tuple
    converged: bool
    selection: np.ndarray
    objective: float


def precompute_patch_costs(cost: CostModel, ss: SampleSet) -> np.ndarray:
    """Per-patch cost table: table[r, c, s] = C_i(x_i^s), weight included."""
    return cost.patch_costs(ss)


def select_samples(depth, ss: SampleSet, table: np.ndarray | None = None) -> np.ndarray:
    """Per patch, the index of the sample minimizing squared distance to
    the patch window plus its table cost; ties go to the lowest index."""
    d2 = patch_sqdists(depth, ss)
    if table is not None:
        table = np.asarray(table)
        if table.shape != d2.shape:
            raise ValueError(
                f"cost table shape {table.shape} does not match {d2.shape}"
            )
        d2 = d2 + table
    return d2.argmin(axis=2)


def _gather_selected(ss: SampleSet, sel: np.ndarray) -> np.ndarray:
    picked = np.take_along_axis(ss.samples, sel[:, :, None, None, None], axis=2)
    return picked[:, :, 0].astype(np.float64)


def _descend(z: np.ndarray, cost: CostModel | None, opts: SolverOptions, lam: float) -> np.ndarray:
    if cost is None or not cost.has_global_cost:
        return z
    for _ in range(opts.grad_steps):
        z = z - opts.gamma * lam * cost.unit_global_grad(z)
    return z


def update_global(
    sel: np.ndarray,
    ss: SampleSet,
    grid: PatchGrid,
    cost: CostModel | None,
    opts: SolverOptions,
) -> DepthMap:
    """Overlap-average the selected samples, then apply the configured
    number of global-cost gradient steps."""
    z = overlap_average_raw(_gather_selected(ss, sel), grid)
    z = _descend(z, cost, opts, cost.lam if cost is not None else 0.0)
    return DepthMap(z)


def map_infer(
    ss: SampleSet,
    cost: CostModel | None = None,
    opts: SolverOptions | None = None,
    init_selection: np.ndarray | None = None,
) -> SolveReport:
    """Run the alternating solver from the mean-depth initialization (or
    from a caller-provided initial selection) and report the trajectory.

    Non-convergence within ``max_iters`` is reported via the flag, never
    raised.  When the cost carries a weight ramp, convergence is not
    declared until the ramp has settled, since the objective itself is
    still changing before that.
    """
    opts = opts or SolverOptions()
    grid = ss.grid
    has_patch = cost is not None and cost.has_patch_cost
    has_global = cost is not None and cost.has_global_cost
    unit_table = cost.unit_patch_cost(ss) if has_patch else None

    prev_sel = None
    if init_selection is None:
        z = mean_depth_raw(ss)
    else:
        prev_sel = np.asarray(init_selection, dtype=np.int64)
        if prev_sel.shape != (grid.rows, grid.cols):
            raise ValueError(
                f"initial selection shape {prev_sel.shape} != grid "
                f"{(grid.rows, grid.cols)}"
            )
        if prev_sel.min() < 0 or prev_sel.max() >= ss.n_samples:
            raise ValueError("initial selection indices out of range")
        z = overlap_average_raw(_gather_selected(ss, prev_sel), grid)
        z = _descend(z, cost, opts, cost.weight_at(0) if cost else 0.0)

    d2 = patch_sqdists(z, ss)
    trace: list[float] = []
    iterations = 0
    converged = False
    sel = prev_sel if prev_sel is not None else np.zeros((grid.rows, grid.cols), np.int64)

    def objective(d2_cur, sel_cur, z_cur, lam):
        total = float(np.take_along_axis(d2_cur, sel_cur[:, :, None], axis=2).sum())
        if has_patch:
            total += float(
                lam * np.take_along_axis(unit_table, sel_cur[:, :, None], axis=2).sum()
            )
        if has_global:
            total += cost.global_value(z_cur, lam)
        return total

    for t in range(opts.max_iters):
        lam_t = cost.weight_at(t) if cost is not None else 0.0
        totals = d2 + lam_t * unit_table if has_patch else d2
        sel = totals.argmin(axis=2)
        trace.append(objective(d2, sel, z, lam_t))
        if (
            prev_sel is not None
            and np.array_equal(sel, prev_sel)
            and (cost is None or cost.weight_settled(t))
        ):
            converged = True
            break
        z = overlap_average_raw(_gather_selected(ss, sel), grid)
        z = _descend(z, cost, opts, lam_t)
        d2 = patch_sqdists(z, ss)
        trace.append(objective(d2, sel, z, lam_t))
        prev_sel = sel
        iterations += 1

    return SolveReport(
        depth=DepthMap(z),
        iterations=iterations,
        trace=tuple(trace),
        converged=converged,
        selection=sel,
        objective=trace[-1],
    )


# --------------------------------------------------------------------------
# cost constructions
# --------------------------------------------------------------------------


def make_sparse_cost(
    meas: SparseMeasurements, mode: str, lam: float = DEFAULT_SPARSE_WEIGHT
) -> CostModel:
    """Global cost lam * ||Z at measured pixels - depths||^2.

    The pseudo-gradient spreads measurement residuals over the image
    according to ``mode``:

    * ``nearest-neighbor`` — every pixel takes the residual of its nearest
      measurement (Euclidean; equidistant pixels go to the lowest
      measurement index), for arbitrarily scattered points;
    * ``bilinear-grid`` — residuals live on a complete measurement
      lattice and are bilinearly interpolated (clamped beyond the hull);
    * ``exact-adjoint`` — residuals land only on the measured pixels, the
      true adjoint of the sampling operation (up to the omitted factor 2).
    """
    if mode not in SPARSE_COST_MODES:
        raise ValueError(f"unknown sparse cost mode {mode!r}; use one of {SPARSE_COST_MODES}")
    if len(meas) == 0:
        raise ValueError("sparse cost requires at least one measurement")
    if mode == "bilinear-grid" and meas.pattern != "regular-grid":
        raise ValueError(
            "bilinear-grid mode requires measurements on a complete regular lattice"
        )
    h, w = meas.shape
    rows, cols, depths = meas.rows, meas.cols, meas.depths

    def residuals(z: np.ndarray) -> np.ndarray:
        return z[rows, cols] - depths

    def value(z: np.ndarray) -> float:
        r = residuals(z)
        return float((r * r).sum())

    if mode == "nearest-neighbor":
        dy2 = (np.arange(h)[:, None] - rows[None, :]) ** 2
        dx2 = (np.arange(w)[:, None] - cols[None, :]) ** 2
        assign = (dy2[:, None, :] + dx2[None, :, :]).argmin(axis=2)

        def grad(z: np.ndarray) -> np.ndarray:
            return residuals(z)[assign]

    elif mode == "bilinear-grid":
        ur = np.unique(rows)
        uc = np.unique(cols)
        lattice_index = np.empty((len(ur), len(uc)), dtype=np.int64)
        ri = np.searchsorted(ur, rows)
        ci = np.searchsorted(uc, cols)
        lattice_index[ri, ci] = np.arange(len(meas))

        ys = np.clip(np.arange(h, dtype=np.float64), ur[0], ur[-1])
        xs = np.clip(np.arange(w, dtype=np.float64), uc[0], uc[-1])
        iy = np.clip(np.searchsorted(ur, ys, side="right") - 1, 0, len(ur) - 2)
        ix = np.clip(np.searchsorted(uc, xs, side="right") - 1, 0, len(uc) - 2)
        fy = (ys - ur[iy]) / (ur[iy + 1] - ur[iy])
        fx = (xs - uc[ix]) / (uc[ix + 1] - uc[ix])

        def grad(z: np.ndarray) -> np.ndarray:
            lat = residuals(z)[lattice_index]
            top = lat[np.ix_(iy, ix)] * (1 - fx) + lat[np.ix_(iy, ix + 1)] * fx
            bot = lat[np.ix_(iy + 1, ix)] * (1 - fx) + lat[np.ix_(iy + 1, ix + 1)] * fx
            return top * (1 - fy)[:, None] + bot * fy[:, None]

    else:  # exact-adjoint

        def grad(z: np.ndarray) -> np.ndarray:
            out = np.zeros((h, w), dtype=np.float64)
            out[rows, cols] = residuals(z)
            return out

    return CostModel(
        lam=lam,
        unit_global_value=value,
        unit_global_grad=grad,
        kind=f"sparse:{mode}",
    )


def make_uncrop_cost(
    dense: DepthMap, mask: BinaryMask, lam: float = DEFAULT_UNCROP_WEIGHT
) -> CostModel:
    """Per-patch cost lam * ||mask_window * (x - dense_window)||^2 tying
    samples to a dense prior inside the masked region."""
    if dense.shape != mask.shape:
        raise ValueError(
            f"dense prior shape {dense.shape} != mask shape {mask.shape}"
        )
    f64 = dense.values.astype(np.float64)
    w64 = mask.values.astype(np.float64)

    def table(ss: SampleSet) -> np.ndarray:
        grid = ss.grid
        if (grid.height, grid.width) != dense.shape:
            raise ValueError(
                f"sample grid {grid.height} x {grid.width} does not match "
                f"prior shape {dense.shape}"
            )
        fwin = crops_tensor(f64, grid)
        wwin = crops_tensor(w64, grid)
        out = np.empty((grid.rows, grid.cols, ss.n_samples), dtype=np.float64)
        for r in range(grid.rows):
            d = wwin[r][:, None] * (ss.samples[r].astype(np.float64) - fwin[r][:, None])
            out[r] = (d * d).sum(axis=(2, 3))
        return out

    return CostModel(lam=lam, unit_patch_cost=table, kind="uncrop")


def make_diversity_cost(
    prev: list[DepthMap],
    masks: list[BinaryMask | None] | None = None,
    lam: float = DEFAULT_DIVERSITY_WEIGHT,
    ramp: LambdaRamp | None = None,
) -> CostModel:
    """Per-patch repulsion from previous estimates:
    -(lam / m) * sum over previous modes of ||W * (window - x)||^2.

    ``masks`` (aligned with ``prev``) focus the repulsion on annotated
    regions; a None entry means an all-ones mask, which reproduces the
    unmasked form bit-for-bit.
    """
    if not prev:
        raise ValueError("diversity cost requires at least one previous estimate")
    if masks is not None and len(masks) != len(prev):
        raise ValueError(
            f"got {len(masks)} masks for {len(prev)} previous estimates"
        )
    shape = prev[0].shape
    for dm in prev:
        if dm.shape != shape:
            raise ValueError("previous estimates must share one shape")
    mask_arrays = []
    for i in range(len(prev)):
        m = masks[i] if masks is not None else None
        if m is None:
            mask_arrays.append(np.ones(shape, dtype=np.float64))
        else:
            if m.shape != shape:
                raise ValueError("mask shape does not match estimates")
            mask_arrays.append(m.values.astype(np.float64))
    z64s = [dm.values.astype(np.float64) for dm in prev]
    m_count = len(prev)

    def table(ss: SampleSet) -> np.ndarray:
        grid = ss.grid
        if (grid.height, grid.width) != shape:
            raise ValueError(
                f"sample grid {grid.height} x {grid.width} does not match "
                f"estimate shape {shape}"
            )
        acc = np.zeros((grid.rows, grid.cols, ss.n_samples), dtype=np.float64)
        for z64, w64 in zip(z64s, mask_arrays):
            zwin = crops_tensor(z64, grid)
            wwin = crops_tensor(w64, grid)
            for r in range(grid.rows):
                d = wwin[r][:, None] * (zwin[r][:, None] - ss.samples[r].astype(np.float64))
                acc[r] += (d * d).sum(axis=(2, 3))
        return -acc / m_count

    return CostModel(lam=lam, unit_patch_cost=table, ramp=ramp, kind="diversity")
