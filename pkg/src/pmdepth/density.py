"""Density evaluation over per-patch sample sets.

The depth distribution is a product of per-patch kernel-density factors:
each patch contributes the average of Gaussian kernels centered on its
samples.  This module evaluates that density (in log space, exactly or
under the max approximation), and derives per-pixel moments and
rank-ordered composites from the sample tensor.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from pmdepth.core import (
    DepthMap,
    accumulate_patches,
    coverage_counts,
    crops_tensor,
    overlap_average,
    overlap_average_raw,
)
from pmdepth.samplers import SampleSet

__all__ = [
    "patch_potential",
    "log_density",
    "log_density_maxapprox",
    "mean_depth",
    "variance_map",
    "rank_composite",
    "patch_sqdists",
]

DEFAULT_BANDWIDTH = 1.0


def _check_bandwidth(h: float) -> float:
    if not h > 0:
        raise ValueError(f"kernel bandwidth must be > 0, got {h}")
    return float(h)


def _depth_values(depth) -> np.ndarray:
    values = depth.values if isinstance(depth, DepthMap) else np.asarray(depth)
    return values.astype(np.float64, copy=False)


def patch_sqdists(values, ss: SampleSet) -> np.ndarray:
    """Squared L2 distance from each patch window of ``values`` to each of
    its samples; shape [rows, cols, n_samples], float64.

    Works one patch-row at a time to bound the size of the difference
    tensor.
    """
    values = _depth_values(values)
    grid = ss.grid
    if values.shape != (grid.height, grid.width):
        raise ValueError(
            f"depth shape {values.shape} does not match grid "
            f"{grid.height} x {grid.width}"
        )
    crops = crops_tensor(values, grid)
    out = np.empty((grid.rows, grid.cols, ss.n_samples), dtype=np.float64)
    for r in range(grid.rows):
        diff = crops[r][:, None, :, :] - ss.samples[r].astype(np.float64)
        out[r] = (diff * diff).sum(axis=(2, 3))
    return out


def patch_potential(z_patch, samples, h: float = DEFAULT_BANDWIDTH) -> float:
    """Kernel-density value of one patch: mean of Gaussian kernels
    exp(-||z - x_s||^2 / 2h^2) over the patch's samples.

    Evaluated with a max-exponent shift so widely separated samples do not
    underflow the sum.
    """
    h = _check_bandwidth(h)
    z = np.asarray(z_patch, dtype=np.float64)
    xs = np.asarray(samples, dtype=np.float64)
    if xs.ndim != z.ndim + 1 or xs.shape[1:] != z.shape:
        raise ValueError(
            f"samples shape {xs.shape} does not broadcast over patch {z.shape}"
        )
    d2 = ((xs - z) ** 2).reshape(xs.shape[0], -1).sum(axis=1)
    e = -d2 / (2.0 * h * h)
    m = e.max()
    return float(np.exp(m) * np.exp(e - m).mean())


def log_density(depth, ss: SampleSet, h: float = DEFAULT_BANDWIDTH) -> float:
    """Log of the (unnormalized) patch-product density at a depth map:
    sum over patches of log-sum-exp of the per-sample kernel exponents."""
    h = _check_bandwidth(h)
    e = -patch_sqdists(depth, ss) / (2.0 * h * h)
    return float(logsumexp(e, axis=-1).sum())


def log_density_maxapprox(depth, ss: SampleSet, h: float = DEFAULT_BANDWIDTH) -> float:
    """Max approximation: each patch contributes only its best sample's
    kernel exponent.  Always a lower bound on :func:`log_density`; the gap
    is at most n_patches * log(n_samples)."""
    h = _check_bandwidth(h)
    e = -patch_sqdists(depth, ss) / (2.0 * h * h)
    return float(e.max(axis=-1).sum())


def mean_depth_raw(ss: SampleSet) -> np.ndarray:
    """Per-pixel mean over all covering (patch, sample) contributions, float64."""
    per_patch_mean = ss.samples.astype(np.float64).mean(axis=2)
    return overlap_average_raw(per_patch_mean, ss.grid)


def mean_depth(ss: SampleSet) -> DepthMap:
    """Pure monocular point estimate: the distribution's per-pixel mean."""
    return DepthMap(mean_depth_raw(ss))


def variance_map(ss: SampleSet) -> np.ndarray:
    """Per-pixel population variance across all covering (patch, sample)
    contributions (an ambiguity map; no bandwidth term is added).

    Computed in two passes (mean, then squared deviations) so the result
    is non-negative by construction and exactly zero where all
    contributions agree.
    """
    grid = ss.grid
    mu = mean_depth_raw(ss)
    windows = crops_tensor(mu, grid)
    dev2 = np.empty((grid.rows, grid.cols, grid.patch, grid.patch), dtype=np.float64)
    for r in range(grid.rows):
        d = ss.samples[r].astype(np.float64) - windows[r][:, None, :, :]
        dev2[r] = (d * d).sum(axis=1)
    counts = coverage_counts(grid) * ss.n_samples
    return accumulate_patches(dev2, grid) / counts


def rank_composite(ss: SampleSet, gt: DepthMap, rank: int) -> DepthMap:
    """Overlap-average of each patch's rank-th best sample.

    Samples are ordered per patch by rms distance to the true patch
    (ascending, ties resolved to the lowest sample index), so rank 0 is an
    oracle pick and rank n_samples - 1 an adversarial one.
    """
    if not 0 <= rank < ss.n_samples:
        raise ValueError(
            f"rank {rank} outside [0, {ss.n_samples}) for this sample set"
        )
    grid = ss.grid
    gt_windows = crops_tensor(_depth_values(gt), grid)
    picks = np.empty((grid.rows, grid.cols, grid.patch, grid.patch), dtype=np.float64)
    for r in range(grid.rows):
        d = ss.samples[r].astype(np.float64) - gt_windows[r][:, None, :, :]
        rms = np.sqrt((d * d).mean(axis=(2, 3)))
        order = np.argsort(rms, axis=-1, kind="stable")
        sel = order[:, rank]
        picks[r] = ss.samples[r, np.arange(grid.cols), sel].astype(np.float64)
    return overlap_average(picks, grid)
