"""Tests for synthetic scene rendering and per-patch sample synthesis."""

import numpy as np
import pytest

from pmdepth.core import crop, crops_tensor, make_patch_grid, overlap_average_raw
from pmdepth.samplers import (
    RectPlane,
    SamplerConfig,
    SceneSpec,
    random_scene,
    render_scene,
    synthesize_patch,
    synthesize_samples,
)


def make_step_scene():
    # left half at 1.0, right half at 3.0
    return SceneSpec(
        height=6,
        width=8,
        depth_range=(0.5, 5.0),
        seed=0,
        layout=[
            RectPlane(top=0, left=0, height=6, width=4, depth=1.0),
            RectPlane(top=0, left=4, height=6, width=4, depth=3.0),
        ],
    )


def test_render_step_edge():
    gt = render_scene(make_step_scene())
    assert np.all(gt.values[:, :4] == 1.0)
    assert np.all(gt.values[:, 4:] == 3.0)


def test_render_deterministic():
    spec = make_step_scene()
    a = render_scene(spec)
    b = render_scene(spec)
    np.testing.assert_array_equal(a.values, b.values)


def test_render_respects_depth_range():
    spec = SceneSpec(
        height=4,
        width=4,
        depth_range=(1.0, 2.0),
        seed=0,
        layout=[RectPlane(0, 0, 4, 4, depth=10.0, slope_x=3.0)],
    )
    gt = render_scene(spec)
    assert gt.values.min() >= 1.0
    assert gt.values.max() <= 2.0


def test_render_paint_order_and_tilt():
    spec = SceneSpec(
        height=3,
        width=3,
        depth_range=(0.5, 9.0),
        seed=0,
        layout=[
            RectPlane(0, 0, 3, 3, depth=2.0),
            RectPlane(1, 1, 1, 2, depth=4.0, slope_x=0.5),
        ],
    )
    gt = render_scene(spec)
    assert gt.values[0, 0] == 2.0
    assert gt.values[1, 1] == 4.0
    assert gt.values[1, 2] == pytest.approx(4.5)


def test_render_empty_layout_rejected():
    with pytest.raises(ValueError):
        SceneSpec(height=4, width=4, depth_range=(1.0, 2.0), seed=0, layout=[])


def test_random_scene_deterministic():
    a = render_scene(random_scene(9, 9, seed=5))
    b = render_scene(random_scene(9, 9, seed=5))
    np.testing.assert_array_equal(a.values, b.values)
    c = render_scene(random_scene(9, 9, seed=6))
    assert not np.array_equal(a.values, c.values)


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(sigma=-1.0)
    with pytest.raises(ValueError):
        SamplerConfig(p_amb=1.5)


def test_samples_shape_and_positivity():
    gt = render_scene(make_step_scene())
    grid = make_patch_grid(6, 8, 3, 1)
    ss = synthesize_samples(gt, grid, 4, SamplerConfig(seed=1))
    assert ss.samples.shape == (grid.rows, grid.cols, 4, 3, 3)
    assert ss.samples.dtype == np.float32
    assert np.all(np.isfinite(ss.samples))
    assert ss.samples.min() > 0


def test_noiseless_samples_equal_crops_exactly():
    gt = render_scene(make_step_scene())
    grid = make_patch_grid(6, 8, 3, 1)
    cfg = SamplerConfig(sigma=0.0, offset_scale=0.0, tilt_scale=0.0, p_amb=0.0, seed=3)
    ss = synthesize_samples(gt, grid, 3, cfg)
    for r in range(grid.rows):
        for c in range(grid.cols):
            want = crop(gt, grid, (r, c))
            for s in range(3):
                np.testing.assert_array_equal(ss.samples[r, c, s], want)


def test_offset_only_samples_are_constant_shifts():
    gt = render_scene(make_step_scene())
    grid = make_patch_grid(6, 8, 3, 1)
    cfg = SamplerConfig(sigma=0.0, offset_scale=0.2, tilt_scale=0.0, p_amb=0.0, seed=3)
    ss = synthesize_samples(gt, grid, 5, cfg)
    for r, c in [(0, 0), (1, 3), (3, 5)]:
        want = crop(gt, grid, (r, c)).astype(np.float64)
        for s in range(5):
            diff = ss.samples[r, c, s].astype(np.float64) - want
            assert np.ptp(diff) < 1e-5  # constant up to float32 rounding


def test_mean_approaches_gt_for_small_noise():
    gt = render_scene(make_step_scene())
    grid = make_patch_grid(6, 8, 3, 1)
    cfg = SamplerConfig(
        sigma=1e-4, offset_scale=1e-4, tilt_scale=1e-6, p_amb=0.0, seed=9
    )
    ss = synthesize_samples(gt, grid, 16, cfg)
    # per-pixel mean over all covering (patch, sample) contributions equals
    # the overlap average of per-patch sample means
    mean = overlap_average_raw(ss.samples.mean(axis=2), grid)
    assert np.abs(mean - gt.values).max() < 1e-3


def test_patch_streams_keyed_independently():
    gt = render_scene(make_step_scene())
    grid = make_patch_grid(6, 8, 3, 1)
    cfg = SamplerConfig(seed=11, p_amb=0.3)
    full = synthesize_samples(gt, grid, 6, cfg)
    # regenerating one patch in isolation reproduces its slice
    lone = synthesize_patch(gt, grid, (1, 2), 6, cfg)
    np.testing.assert_array_equal(full.samples[1, 2], lone)
    # growing S leaves existing samples untouched
    bigger = synthesize_samples(gt, grid, 9, cfg)
    np.testing.assert_array_equal(bigger.samples[:, :, :6], full.samples)


def test_synthesis_deterministic_and_seed_sensitive():
    gt = render_scene(make_step_scene())
    grid = make_patch_grid(6, 8, 3, 1)
    a = synthesize_samples(gt, grid, 4, SamplerConfig(seed=2))
    b = synthesize_samples(gt, grid, 4, SamplerConfig(seed=2))
    np.testing.assert_array_equal(a.samples, b.samples)
    c = synthesize_samples(gt, grid, 4, SamplerConfig(seed=3))
    assert not np.array_equal(a.samples, c.samples)


def test_sample_spread_monotone_in_sigma():
    gt = render_scene(make_step_scene())
    grid = make_patch_grid(6, 8, 3, 1)
    spreads = []
    for sigma in (0.01, 0.05, 0.1):
        cfg = SamplerConfig(
            sigma=sigma, offset_scale=0.0, tilt_scale=0.0, p_amb=0.0, seed=4
        )
        ss = synthesize_samples(gt, grid, 8, cfg)
        centered = ss.samples.astype(np.float64) - ss.samples.mean(
            axis=2, keepdims=True
        )
        spreads.append((centered**2).mean())
    assert spreads[0] < spreads[1] < spreads[2]


def test_ambiguity_displaces_whole_patch_coherently_per_cell():
    gt = render_scene(make_step_scene())
    grid = make_patch_grid(6, 8, 3, 1)
    cfg = SamplerConfig(
        sigma=0.0, offset_scale=0.0, tilt_scale=0.0, p_amb=1.0,
        amb_shift=0.5, amb_jitter=0.0, amb_weight=1.0, amb_cell=3, seed=0,
    )
    ss = synthesize_samples(gt, grid, 8, cfg)
    cell_shifts = {}
    for r in range(grid.rows):
        for c in range(grid.cols):
            want = crop(gt, grid, (r, c)).astype(np.float64)
            patch_shifts = set()
            for s in range(8):
                diff = ss.samples[r, c, s].astype(np.float64) - want
                assert np.ptp(diff) < 1e-5  # coherent whole-patch displacement
                patch_shifts.add(round(float(diff.mean()), 3))
            # one fixed competing hypothesis per patch, not per sample
            assert len(patch_shifts) == 1
            oy, ox = grid.origin(r, c)
            cell = (oy // 3, ox // 3)
            cell_shifts.setdefault(cell, set()).update(patch_shifts)
    # patches sharing a cell share the displacement direction...
    assert all(len(s) == 1 for s in cell_shifts.values())
    # ...magnitudes are the configured shift, and both directions occur
    assert set().union(*cell_shifts.values()) == {0.5, -0.5}


def test_ambiguity_weight_splits_samples_between_hypotheses():
    gt = render_scene(make_step_scene())
    grid = make_patch_grid(6, 8, 3, 1)
    cfg = SamplerConfig(
        sigma=0.0, offset_scale=0.0, tilt_scale=0.0, p_amb=1.0,
        amb_shift=0.5, amb_jitter=0.0, amb_weight=0.7, amb_cell=16, seed=0,
    )
    ss = synthesize_samples(gt, grid, 200, cfg)
    want = crop(gt, grid, (0, 0)).astype(np.float64)
    shifts = np.array(
        [float((ss.samples[0, 0, s] - want).mean()) for s in range(200)]
    )
    displaced = np.abs(np.abs(shifts) - 0.5) < 1e-6
    truthful = np.abs(shifts) < 1e-6
    assert displaced.sum() + truthful.sum() == 200
    # majority follows the competing hypothesis, a truthful minority survives
    assert 0.55 < displaced.mean() < 0.85
    assert truthful.sum() > 0
