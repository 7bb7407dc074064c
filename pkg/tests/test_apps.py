"""Tests for the application drivers: sparse completion, un-cropping,
diverse modes, simulated users, guided placement, and ordinal queries."""

import math
from dataclasses import replace

import numpy as np
import pytest

from pmdepth.apps import (
    AnnotationResult,
    ModeSet,
    OrdinalQuery,
    OrdinalVerdict,
    complete_sparse,
    generate_modes,
    guided_points,
    line_mask,
    ordinal_from_map,
    ordinal_vote,
    simulate_annotation,
    simulate_selection,
    uncrop,
    window_mask,
)
from pmdepth.core import (
    BinaryMask,
    DepthMap,
    SparseMeasurements,
    make_patch_grid,
)
from pmdepth.density import mean_depth, variance_map
from pmdepth.samplers import (
    SamplerConfig,
    SampleSet,
    random_scene,
    render_scene,
    synthesize_samples,
)
from pmdepth.solver import (
    SolverOptions,
    make_sparse_cost,
    make_uncrop_cost,
    map_infer,
)


def rms(a, b):
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.sqrt((d * d).mean()))


def make_instance(seed=0, h=13, w=13, k=5, s=2, n=6, cfg=None):
    gt = render_scene(random_scene(h, w, seed=seed, n_rects=3))
    grid = make_patch_grid(h, w, k, s)
    cfg = cfg or SamplerConfig.ambiguous(seed)
    ss = synthesize_samples(gt, grid, n, cfg)
    return gt, grid, ss


def noiseless_cfg(seed=0):
    return SamplerConfig(sigma=0.0, offset_scale=0.0, tilt_scale=0.0, seed=seed)


def one_patch_samples(stacks):
    """SampleSet for a single K x K patch from a list of K x K arrays."""
    arr = np.stack([np.asarray(s, dtype=np.float32) for s in stacks])
    k = arr.shape[-1]
    grid = make_patch_grid(k, k, k, 1)
    return SampleSet(arr[None, None], grid)


# ---------------------------------------------------------------- masks


def test_line_mask_default_center_row():
    m = line_mask((5, 4))
    assert m.values[2].sum() == 4
    assert m.values.sum() == 4
    m6 = line_mask((6, 3), row=0)
    assert m6.values[0].sum() == 3 and m6.values.sum() == 3
    with pytest.raises(ValueError):
        line_mask((5, 4), row=5)


def test_window_mask():
    m = window_mask((6, 7), top=1, left=2, height=3, width=4)
    assert m.values.sum() == 12
    assert m.values[1:4, 2:6].all()
    with pytest.raises(ValueError):
        window_mask((6, 7), top=4, left=0, height=3, width=2)
    with pytest.raises(ValueError):
        window_mask((6, 7), top=0, left=0, height=0, width=2)


# ------------------------------------------------------- complete_sparse


def test_complete_sparse_empty_is_pure_map():
    _, _, ss = make_instance(seed=1)
    empty = SparseMeasurements.from_arrays([], [], [], (13, 13))
    got = complete_sparse(ss, empty)
    want = map_infer(ss)
    assert np.array_equal(got.depth.values, want.depth.values)
    assert got.iterations == want.iterations


def test_complete_sparse_dispatches_on_pattern():
    gt, _, ss = make_instance(seed=2)
    coords = [0, 4, 8, 12]
    rr, cc = np.meshgrid(coords, coords, indexing="ij")
    lattice = SparseMeasurements.from_arrays(
        rr.ravel(), cc.ravel(), gt.values[rr.ravel(), cc.ravel()], (13, 13)
    )
    assert lattice.pattern == "regular-grid"
    got = complete_sparse(ss, lattice, lam=2.0)
    want = map_infer(ss, make_sparse_cost(lattice, "bilinear-grid", lam=2.0))
    assert np.array_equal(got.depth.values, want.depth.values)

    scatter = SparseMeasurements.from_arrays(
        [1, 7, 12], [3, 9, 0], gt.values[[1, 7, 12], [3, 9, 0]], (13, 13)
    )
    assert scatter.pattern == "random-points"
    got2 = complete_sparse(ss, scatter, lam=2.0)
    want2 = map_infer(ss, make_sparse_cost(scatter, "nearest-neighbor", lam=2.0))
    assert np.array_equal(got2.depth.values, want2.depth.values)


def test_complete_sparse_noiseless_fixed_point():
    gt, _, ss = make_instance(seed=3, cfg=noiseless_cfg(3))
    meas = SparseMeasurements.from_arrays(
        [0, 6, 12], [0, 6, 12], gt.values[[0, 6, 12], [0, 6, 12]], (13, 13)
    )
    rep = complete_sparse(ss, meas)
    assert rms(rep.depth.values, gt.values) <= 1e-6


def test_upsampling_consistency_smoke():
    # Exact lattice measurements must rescue estimates that have gone
    # coherently wrong, so force every cell to carry a competing mode.
    for seed in (0, 1, 2):
        cfg = replace(
            SamplerConfig.ambiguous(seed=seed), p_amb=1.0, amb_cell=6
        )
        gt, _, ss = make_instance(seed=seed, cfg=cfg)
        coords = [0, 4, 8, 12]
        rr, cc = np.meshgrid(coords, coords, indexing="ij")
        lattice = SparseMeasurements.from_arrays(
            rr.ravel(), cc.ravel(), gt.values[rr.ravel(), cc.ravel()], (13, 13)
        )
        pure = map_infer(ss)
        fused = complete_sparse(ss, lattice)
        assert rms(fused.depth.values, gt.values) < rms(pure.depth.values, gt.values)


# ---------------------------------------------------------------- uncrop


def test_uncrop_empty_mask_rejected():
    _, _, ss = make_instance(seed=4)
    prior = mean_depth(ss)
    with pytest.raises(ValueError):
        uncrop(ss, prior, BinaryMask.zeros(13, 13))


def test_uncrop_full_mask_noiseless_recovers_gt():
    gt, _, ss = make_instance(seed=5, cfg=noiseless_cfg(5))
    rep = uncrop(ss, gt, BinaryMask.ones(13, 13))
    assert rms(rep.depth.values, gt.values) <= 1e-6


def test_uncrop_matches_explicit_cost():
    gt, _, ss = make_instance(seed=6)
    mask = line_mask((13, 13))
    got = uncrop(ss, gt, mask, lam=40.0)
    want = map_infer(ss, make_uncrop_cost(gt, mask, lam=40.0))
    assert np.array_equal(got.depth.values, want.depth.values)
    assert got.converged == want.converged


# --------------------------------------------------------------- ModeSet


def test_modeset_validation():
    d = DepthMap(np.ones((3, 3)))
    ms = ModeSet(modes=(d,), masks=(None,), provenance=("mean",))
    assert len(ms) == 1
    with pytest.raises(ValueError):
        ModeSet(modes=(), masks=(), provenance=())
    with pytest.raises(ValueError):
        ModeSet(modes=(d,), masks=(), provenance=("mean",))


def test_modeset_with_mask():
    d = DepthMap(np.ones((3, 3)))
    ms = ModeSet(modes=(d,), masks=(None,), provenance=("mean",))
    mask = BinaryMask.ones(3, 3)
    ms2 = ms.with_mask(0, mask)
    assert ms.masks[0] is None
    assert np.array_equal(ms2.masks[0].values, mask.values)
    with pytest.raises(IndexError):
        ms.with_mask(3, mask)


def test_modeset_shape_mismatch():
    d = DepthMap(np.ones((3, 3)))
    e = DepthMap(np.ones((4, 4)))
    with pytest.raises(ValueError):
        ModeSet(modes=(d, e), masks=(None, None), provenance=("mean", "x"))


# ---------------------------------------------------------- generate_modes


def test_generate_modes_single_is_mean():
    _, _, ss = make_instance(seed=7)
    ms = generate_modes(ss, 1)
    assert len(ms) == 1
    assert ms.provenance[0] == "mean"
    assert np.array_equal(ms.modes[0].values, mean_depth(ss).values)


def test_generate_modes_zero_weight_noiseless_all_equal():
    _, _, ss = make_instance(seed=8, cfg=noiseless_cfg(8))
    ms = generate_modes(ss, 3, lam=0.0)
    for m in ms.modes[1:]:
        assert np.array_equal(m.values, ms.modes[0].values)


def test_generate_modes_zero_weight_repeats_map():
    _, _, ss = make_instance(seed=9)
    ms = generate_modes(ss, 3, lam=0.0)
    assert np.array_equal(ms.modes[1].values, ms.modes[2].values)
    want = map_infer(ss).depth
    assert np.array_equal(ms.modes[1].values, want.values)


def test_generate_modes_diverse_are_distinct():
    _, _, ss = make_instance(seed=10)
    ms = generate_modes(ss, 3, lam=10.0)
    pairs = [(0, 1), (0, 2), (1, 2)]
    dists = [rms(ms.modes[a].values, ms.modes[b].values) for a, b in pairs]
    assert min(dists) > 0
    assert ms.provenance[1].startswith("diverse(")
    assert "m=1" in ms.provenance[1] and "m=2" in ms.provenance[2]


def test_generate_modes_ones_masks_match_unmasked():
    _, _, ss = make_instance(seed=11)
    plain = generate_modes(ss, 3, lam=10.0)
    ones = [BinaryMask.ones(13, 13), BinaryMask.ones(13, 13)]
    masked = generate_modes(ss, 3, lam=10.0, masks=ones)
    for a, b in zip(plain.modes, masked.modes):
        assert np.array_equal(a.values, b.values)


def test_generate_modes_validation():
    _, _, ss = make_instance(seed=12)
    with pytest.raises(ValueError):
        generate_modes(ss, 0)
    with pytest.raises(ValueError):
        generate_modes(ss, 2, masks=[None, None, None])


# ------------------------------------------------------ simulate_selection


def test_simulate_selection_rules():
    gt, _, ss = make_instance(seed=13)
    only = generate_modes(ss, 1)
    assert simulate_selection(only, gt) == 0

    off = DepthMap(gt.values + 1.0)
    ms = ModeSet(modes=(gt, off), masks=(None, None), provenance=("mean", "x"))
    assert simulate_selection(ms, gt) == 0

    tie = ModeSet(modes=(off, off), masks=(None, None), provenance=("mean", "x"))
    assert simulate_selection(tie, gt) == 0

    with pytest.raises(ValueError):
        simulate_selection(ms, DepthMap(np.ones((5, 5))))


def test_simulate_selection_nested_non_increasing():
    gt, _, ss = make_instance(seed=14)
    ms = generate_modes(ss, 4, lam=10.0)

    def best_rms(count):
        sub = ModeSet(
            modes=ms.modes[:count],
            masks=ms.masks[:count],
            provenance=ms.provenance[:count],
        )
        return rms(ms.modes[simulate_selection(sub, gt)].values, gt.values)

    errs = [best_rms(c) for c in (1, 2, 3, 4)]
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


# ----------------------------------------------------- simulate_annotation


def brute_best_window(err2, w, chosen, max_overlap):
    """Row-major scan for the first maximal admissible window."""
    h, wd = err2.shape
    best, best_score = None, -math.inf

    def frac(a, b):
        dy = w - abs(a[0] - b[0])
        dx = w - abs(a[1] - b[1])
        return max(0, dy) * max(0, dx) / (w * w)

    for y in range(h - w + 1):
        for x in range(wd - w + 1):
            if any(frac((y, x), c) > max_overlap for c in chosen):
                continue
            s = err2[y : y + w, x : x + w].sum()
            if s > best_score:
                best, best_score = (y, x), s
    return best


def test_annotation_perfect_prediction_ties_to_origin():
    gt = DepthMap(np.ones((8, 8)))
    res = simulate_annotation(gt, gt, window=4, count=1)
    assert isinstance(res, AnnotationResult)
    assert res.windows == ((0, 0),)
    assert res.mask.values[:4, :4].all()
    assert res.mask.values.sum() == 16


def test_annotation_covers_error_blob():
    gt = np.ones((10, 10))
    pred = gt.copy()
    pred[6:8, 5:7] += 3.0  # blob smaller than the window
    res = simulate_annotation(DepthMap(pred), DepthMap(gt), window=4, count=1)
    assert res.mask.values[6:8, 5:7].all()


def test_annotation_two_blobs_against_oracle():
    gt = np.ones((14, 14))
    pred = gt.copy()
    pred[1:5, 1:5] += 2.0  # window-sized blob, summed error 64
    pred[9:13, 9:13] += 2.5  # window-sized blob, summed error 100
    err2 = (pred - gt) ** 2
    res = simulate_annotation(DepthMap(pred), DepthMap(gt), window=4, count=2)

    chosen = []
    for _ in range(2):
        chosen.append(brute_best_window(err2, 4, chosen, 0.5))
    assert res.windows == tuple(chosen)
    assert res.windows == ((9, 9), (1, 1))
    assert res.mask.values[9:13, 9:13].all()
    assert res.mask.values[1:5, 1:5].all()
    (y1, x1), (y2, x2) = res.windows
    inter = max(0, 4 - abs(y1 - y2)) * max(0, 4 - abs(x1 - x2))
    assert inter == 0


def test_annotation_reports_fewer_when_saturated():
    gt = DepthMap(np.ones((4, 4)))
    pred = DepthMap(np.full((4, 4), 2.0))
    res = simulate_annotation(pred, gt, window=4, count=3)
    assert res.requested == 3
    assert res.placed == 1
    assert res.windows == ((0, 0),)


def test_annotation_overlap_boundary_allowed():
    # equal scores everywhere: second window must sit at exactly 50% overlap
    gt = DepthMap(np.ones((4, 8)))
    pred = DepthMap(np.full((4, 8), 3.0))
    res = simulate_annotation(pred, gt, window=4, count=2, max_overlap=0.5)
    assert res.windows == ((0, 0), (0, 2))


def test_annotation_window_too_large():
    gt = DepthMap(np.ones((4, 4)))
    with pytest.raises(ValueError):
        simulate_annotation(gt, gt, window=5)


# ----------------------------------------------------------- guided_points


def test_guided_points_isolated_peaks():
    v = np.zeros((8, 8))
    v[1, 1] = 3.0
    v[5, 5] = 2.0
    pts = guided_points(v, budget=2, d_min=2.0)
    assert pts == [(1, 1), (5, 5)]


def test_guided_points_constant_falls_back_to_fill():
    v = np.ones((5, 5))
    pts = guided_points(v, budget=4, d_min=2.0)
    assert pts == [(0, 0), (0, 2), (0, 4), (2, 0)]


def test_guided_points_relaxes_spacing():
    v = np.ones((3, 3))
    pts = guided_points(v, budget=9, d_min=5.0)
    assert len(pts) == 9
    assert len(set(pts)) == 9


def test_guided_points_budget_capped_by_pixels():
    v = np.ones((2, 2))
    pts = guided_points(v, budget=10, d_min=3.0)
    assert len(pts) == 4


def test_guided_points_deterministic_and_validated():
    _, _, ss = make_instance(seed=15)
    v = variance_map(ss)
    a = guided_points(v, budget=6, d_min=2.0)
    b = guided_points(v, budget=6, d_min=2.0)
    assert a == b
    assert all(isinstance(p, tuple) and len(p) == 2 for p in a)
    with pytest.raises(ValueError):
        guided_points(v, budget=0, d_min=2.0)


def test_guided_points_respects_spacing():
    _, _, ss = make_instance(seed=16)
    v = variance_map(ss)
    pts = guided_points(v, budget=5, d_min=3.0)
    for i, p in enumerate(pts):
        for q in pts[:i]:
            assert math.dist(p, q) >= 3.0


# ---------------------------------------------------------------- ordinal


def test_ordinal_query_validation():
    q = OrdinalQuery(a=(0, 0), b=(1, 1), tau=0.02)
    assert q.tau == 0.02
    with pytest.raises(ValueError):
        OrdinalQuery(a=(0, 0), b=(0, 0), tau=0.02)
    with pytest.raises(ValueError):
        OrdinalQuery(a=(0, 0), b=(1, 1), tau=-0.1)


def test_ordinal_vote_unanimous_a_closer():
    patch = np.full((3, 3), 2.0)
    patch[0, 0] = 1.0
    ss = one_patch_samples([patch] * 4)
    v = ordinal_vote(ss, (0, 0), (2, 2), tau=0.02)
    assert isinstance(v, OrdinalVerdict)
    assert v.relation == "A-closer"
    assert v.counts == {"A-closer": 4, "B-closer": 0, "equal": 0}
    assert v.n_pairs == 4


def test_ordinal_vote_all_equal():
    ss = one_patch_samples([np.full((3, 3), 2.0)] * 3)
    v = ordinal_vote(ss, (0, 0), (2, 2), tau=0.02)
    assert v.relation == "equal"
    assert v.counts["equal"] == 3


def test_ordinal_vote_majority_example():
    a, b = np.full((3, 3), 1.0), np.full((3, 3), 1.0)
    a[0, 0], a[2, 2] = 1.0, 2.0  # A-closer
    b[0, 0], b[2, 2] = 2.0, 1.0  # B-closer
    ss = one_patch_samples([a, a, b])
    v = ordinal_vote(ss, (0, 0), (2, 2), tau=0.02)
    assert v.relation == "A-closer"
    assert (v.counts["A-closer"], v.counts["B-closer"], v.counts["equal"]) == (2, 1, 0)


def test_ordinal_vote_tie_rules():
    closer = np.full((3, 3), 1.0)
    closer[2, 2] = 2.0
    flat = np.full((3, 3), 1.0)
    # one A-closer vote, one equal vote: equal wins the tie
    v = ordinal_vote(one_patch_samples([closer, flat]), (0, 0), (2, 2), tau=0.02)
    assert v.relation == "equal"
    # one A-closer vote, one B-closer vote: A-closer wins the tie
    farther = np.full((3, 3), 2.0)
    farther[2, 2] = 1.0
    v2 = ordinal_vote(one_patch_samples([closer, farther]), (0, 0), (2, 2), tau=0.02)
    assert v2.relation == "A-closer"


def test_ordinal_vote_counts_every_covering_pair():
    grid = make_patch_grid(3, 5, 3, 2)
    rng = np.random.default_rng(0)
    ss = SampleSet(
        rng.uniform(1.0, 3.0, (1, 2, 4, 3, 3)).astype(np.float32), grid
    )
    v = ordinal_vote(ss, (1, 2), (0, 2), tau=0.02)  # covered by both patches
    assert v.n_pairs == 8
    assert sum(v.counts.values()) == 8
    v2 = ordinal_vote(ss, (1, 3), (0, 3), tau=0.02)  # right patch only
    assert v2.n_pairs == 4


def test_ordinal_vote_order_invariant():
    grid = make_patch_grid(3, 5, 3, 2)
    rng = np.random.default_rng(1)
    arr = rng.uniform(1.0, 3.0, (1, 2, 5, 3, 3)).astype(np.float32)
    v1 = ordinal_vote(SampleSet(arr, grid), (1, 2), (0, 2), tau=0.05)
    perm = rng.permutation(5)
    v2 = ordinal_vote(SampleSet(arr[:, :, perm], grid), (1, 2), (0, 2), tau=0.05)
    assert v1.counts == v2.counts and v1.relation == v2.relation


def test_ordinal_vote_errors():
    ss = one_patch_samples([np.ones((3, 3))])
    with pytest.raises(ValueError):
        ordinal_vote(ss, (0, 0), (0, 0), tau=0.02)
    gt, grid, ss2 = make_instance(seed=17, h=5, w=5, k=3, s=2, n=2)
    with pytest.raises(ValueError):
        ordinal_vote(ss2, (0, 0), (4, 4), tau=0.02)


def test_ordinal_from_map():
    z = DepthMap(np.array([[1.0, 1.5], [1.0, 1.01]]))
    assert ordinal_from_map(z, (0, 0), (0, 1), tau=0.02).relation == "A-closer"
    assert ordinal_from_map(z, (0, 0), (1, 0), tau=0.02).relation == "equal"
    # ratio 1.01 sits inside the tau=0.02 band but outside tau=0.005
    assert ordinal_from_map(z, (0, 0), (1, 1), tau=0.02).relation == "equal"
    v = ordinal_from_map(z, (0, 0), (1, 1), tau=0.005)
    assert v.relation == "A-closer"
    assert v.n_pairs == 1 and sum(v.counts.values()) == 1


def test_ordinal_from_map_agrees_with_degenerate_vote():
    patch = np.array([[1.0, 2.0, 1.0]] * 3)
    ss = one_patch_samples([patch] * 3)
    z = DepthMap(patch)
    for a, b in [((0, 0), (0, 1)), ((0, 1), (1, 0)), ((0, 0), (2, 2))]:
        assert (
            ordinal_vote(ss, a, b, tau=0.02).relation
            == ordinal_from_map(z, a, b, tau=0.02).relation
        )
