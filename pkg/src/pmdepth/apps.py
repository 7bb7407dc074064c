"""High-level inference drivers built on the patch-mixture solver.

This module binds sample sets and cost constructions into the user-facing
tasks: densifying sparse measurements, extending a partially known map
beyond its field of view, producing diverse candidate estimates for human
selection, simulating that human (selection and error annotation), placing
measurements where the distribution is most uncertain, and answering
which-point-is-closer queries by voting over the sample population.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import BinaryMask, DepthMap, SparseMeasurements
from .density import mean_depth
from .samplers import SampleSet
from .solver import (
    DEFAULT_DIVERSITY_WEIGHT,
    DEFAULT_SPARSE_WEIGHT,
    DEFAULT_UNCROP_WEIGHT,
    LambdaRamp,
    SolveReport,
    SolverOptions,
    make_diversity_cost,
    make_sparse_cost,
    make_uncrop_cost,
    map_infer,
)

# Conventional default for the ordinal equality band; not derived from data.
DEFAULT_EQUALITY_RATIO = 0.02

ORDINAL_RELATIONS = ("A-closer", "B-closer", "equal")


# ------------------------------------------------------------------ masks


def line_mask(shape: tuple[int, int], row: Optional[int] = None) -> BinaryMask:
    """One-pixel-tall horizontal line mask; defaults to the center row."""
    h, w = shape
    if row is None:
        row = h // 2
    if not 0 <= row < h:
        raise ValueError(f"line row {row} outside [0, {h})")
    values = np.zeros((h, w), dtype=np.uint8)
    values[row] = 1
    return BinaryMask(values)


def window_mask(
    shape: tuple[int, int], top: int, left: int, height: int, width: int
) -> BinaryMask:
    """Rectangular field-of-view mask."""
    h, w = shape
    if height < 1 or width < 1:
        raise ValueError("window must be at least 1 x 1")
    if top < 0 or left < 0 or top + height > h or left + width > w:
        raise ValueError(
            f"window {height}x{width} at ({top}, {left}) exceeds image {h}x{w}"
        )
    values = np.zeros((h, w), dtype=np.uint8)
    values[top : top + height, left : left + width] = 1
    return BinaryMask(values)


# -------------------------------------------------- measurement completion


def complete_sparse(
    ss: SampleSet,
    meas: SparseMeasurements,
    lam: float = DEFAULT_SPARSE_WEIGHT,
    opts: Optional[SolverOptions] = None,
) -> SolveReport:
    """Fuse sparse point measurements into a dense estimate.

    Complete measurement lattices use bilinearly interpolated residuals;
    arbitrary scatters use nearest-measurement residuals.  With no
    measurements at all this reduces to the unconstrained solve.
    """
    grid = ss.grid
    if meas.shape != (grid.height, grid.width):
        raise ValueError(
            f"measurement frame {meas.shape} != sample frame "
            f"{(grid.height, grid.width)}"
        )
    if len(meas) == 0:
        return map_infer(ss, None, opts)
    mode = "bilinear-grid" if meas.pattern == "regular-grid" else "nearest-neighbor"
    return map_infer(ss, make_sparse_cost(meas, mode, lam=lam), opts)


def uncrop(
    ss: SampleSet,
    prior: DepthMap,
    mask: BinaryMask,
    lam: float = DEFAULT_UNCROP_WEIGHT,
    opts: Optional[SolverOptions] = None,
) -> SolveReport:
    """Extend depth known inside ``mask`` (line or window) to the full frame."""
    if not mask.values.any():
        raise ValueError("un-crop mask selects no pixels")
    return map_infer(ss, make_uncrop_cost(prior, mask, lam=lam), opts)


# ------------------------------------------------------------- mode sets


@dataclass(frozen=True)
class ModeSet:
    """Ordered candidate depth estimates with per-mode annotation masks.

    The first mode is always the per-pixel mean estimate; later modes are
    solver outputs pushed away from their predecessors.  ``masks[i]`` is
    the user annotation on ``modes[i]`` (None until annotated), and
    ``provenance[i]`` records how the mode was produced.
    """

    modes: tuple[DepthMap, ...]
    masks: tuple[Optional[BinaryMask], ...]
    provenance: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "masks", tuple(self.masks))
        object.__setattr__(self, "provenance", tuple(self.provenance))
        if not self.modes:
            raise ValueError("a mode set needs at least one mode")
        if not (len(self.modes) == len(self.masks) == len(self.provenance)):
            raise ValueError(
                f"misaligned mode set: {len(self.modes)} modes, "
                f"{len(self.masks)} masks, {len(self.provenance)} provenance entries"
            )
        shape = self.modes[0].shape
        for m in self.modes[1:]:
            if m.shape != shape:
                raise ValueError(f"mode shapes differ: {m.shape} vs {shape}")
        for mask in self.masks:
            if mask is not None and mask.shape != shape:
                raise ValueError(f"mask shape {mask.shape} != mode shape {shape}")

    def __len__(self) -> int:
        return len(self.modes)

    @property
    def shape(self) -> tuple[int, int]:
        return self.modes[0].shape

    def with_mask(self, index: int, mask: Optional[BinaryMask]) -> "ModeSet":
        if not 0 <= index < len(self.modes):
            raise IndexError(f"mode index {index} outside [0, {len(self.modes)})")
        masks = list(self.masks)
        masks[index] = mask
        return ModeSet(self.modes, tuple(masks), self.provenance)

    def with_mode(
        self, mode: DepthMap, provenance: str, mask: Optional[BinaryMask] = None
    ) -> "ModeSet":
        return ModeSet(
            self.modes + (mode,),
            self.masks + (mask,),
            self.provenance + (provenance,),
        )


def _default_mode_ramp(lam: float, opts: SolverOptions) -> LambdaRamp:
    return LambdaRamp(lam / 2.0, lam, max(1, opts.max_iters // 2))


def next_mode(
    ss: SampleSet,
    modes: ModeSet,
    lam: float = DEFAULT_DIVERSITY_WEIGHT,
    opts: Optional[SolverOptions] = None,
    ramp: Optional[LambdaRamp] = None,
) -> tuple[DepthMap, str]:
    """Solve for one additional mode repelled from every existing one.

    The repulsion weight ramps from half strength to full strength over
    the first half of the iteration budget unless an explicit ramp is
    given.  Returns the new estimate and its provenance label.
    """
    opts = opts or SolverOptions()
    cost = make_diversity_cost(
        list(modes.modes),
        list(modes.masks),
        lam=lam,
        ramp=ramp or _default_mode_ramp(lam, opts),
    )
    report = map_infer(ss, cost, opts)
    label = f"diverse(lam={lam:g}, m={len(modes)})"
    return report.depth, label


def generate_modes(
    ss: SampleSet,
    count: int,
    lam: float = DEFAULT_DIVERSITY_WEIGHT,
    masks: Optional[Sequence[Optional[BinaryMask]]] = None,
    opts: Optional[SolverOptions] = None,
    ramp: Optional[LambdaRamp] = None,
) -> ModeSet:
    """Produce ``count`` candidate estimates, the first being the mean.

    ``masks`` aligns with the produced modes: ``masks[i]`` focuses the
    repulsion away from mode ``i`` onto its annotated region while modes
    ``i+1, ...`` are being generated.  Missing entries mean unannotated.
    """
    if count < 1:
        raise ValueError("need at least one mode")
    given = list(masks) if masks is not None else []
    if len(given) > count:
        raise ValueError(f"{len(given)} masks for {count} modes")
    padded = given + [None] * (count - len(given))

    modeset = ModeSet(
        modes=(mean_depth(ss),), masks=(padded[0],), provenance=("mean",)
    )
    for k in range(1, count):
        mode, label = next_mode(ss, modeset, lam=lam, opts=opts, ramp=ramp)
        modeset = modeset.with_mode(mode, label, padded[k])
    return modeset


# --------------------------------------------------------- simulated user


def _valid_gt(gt: DepthMap) -> np.ndarray:
    keep = gt.values > 0
    if gt.valid is not None:
        keep = keep & gt.valid
    return keep


def simulate_selection(modes: ModeSet, gt: DepthMap) -> int:
    """Index of the mode with lowest rms against ``gt``; ties go low."""
    if not modes.modes:
        raise ValueError("cannot select from an empty mode set")
    if modes.shape != gt.shape:
        raise ValueError(f"mode shape {modes.shape} != ground truth {gt.shape}")
    keep = _valid_gt(gt)
    if not keep.any():
        raise ValueError("ground truth has no valid pixels")
    g = gt.values[keep].astype(np.float64)
    errs = []
    for mode in modes.modes:
        d = mode.values[keep].astype(np.float64) - g
        errs.append(float(np.sqrt((d * d).mean())))
    return int(np.argmin(errs))


@dataclass(frozen=True)
class AnnotationResult:
    """Union mask of the chosen error windows plus their placements.

    ``windows`` holds top-left corners in placement order; fewer entries
    than ``requested`` means the overlap rule exhausted the candidates.
    """

    mask: BinaryMask
    windows: tuple[tuple[int, int], ...]
    window: int
    requested: int

    @property
    def placed(self) -> int:
        return len(self.windows)


def simulate_annotation(
    estimate: DepthMap,
    gt: DepthMap,
    window: int = 50,
    max_overlap: float = 0.5,
    count: int = 1,
) -> AnnotationResult:
    """Mark the ``count`` highest-squared-error windows of ``estimate``.

    Windows are chosen greedily by summed squared error; a candidate is
    rejected when its area overlap with any already-chosen window exceeds
    ``max_overlap``.  Ties resolve to the first window in row-major order.
    """
    if estimate.shape != gt.shape:
        raise ValueError(f"estimate shape {estimate.shape} != gt shape {gt.shape}")
    h, w = gt.shape
    if not 1 <= window <= min(h, w):
        raise ValueError(f"window {window} outside [1, {min(h, w)}]")
    if not 0.0 <= max_overlap <= 1.0:
        raise ValueError(f"max overlap {max_overlap} outside [0, 1]")
    if count < 1:
        raise ValueError("need at least one window")

    err2 = (
        estimate.values.astype(np.float64) - gt.values.astype(np.float64)
    ) ** 2
    err2[~_valid_gt(gt)] = 0.0

    integral = np.zeros((h + 1, w + 1), dtype=np.float64)
    integral[1:, 1:] = err2.cumsum(axis=0).cumsum(axis=1)
    scores = (
        integral[window:, window:]
        - integral[:-window, window:]
        - integral[window:, :-window]
        + integral[:-window, :-window]
    )

    ys, xs = np.indices(scores.shape)
    allowed = np.ones(scores.shape, dtype=bool)
    chosen: list[tuple[int, int]] = []
    area = float(window * window)
    for _ in range(count):
        if not allowed.any():
            break
        flat = np.where(allowed, scores, -np.inf)
        pick = int(np.argmax(flat))
        y, x = divmod(pick, scores.shape[1])
        chosen.append((y, x))
        inter = np.maximum(0, window - np.abs(ys - y)) * np.maximum(
            0, window - np.abs(xs - x)
        )
        allowed &= inter / area <= max_overlap

    mask = np.zeros((h, w), dtype=np.uint8)
    for y, x in chosen:
        mask[y : y + window, x : x + window] = 1
    return AnnotationResult(
        mask=BinaryMask(mask),
        windows=tuple(chosen),
        window=window,
        requested=count,
    )


# ------------------------------------------------------- guided placement


def _variance_values(variance) -> np.ndarray:
    values = np.asarray(getattr(variance, "values", variance), dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"variance map must be 2-d, got shape {values.shape}")
    return values


def _local_maxima(v: np.ndarray) -> np.ndarray:
    """Pixels >= all in-bounds 8-neighbors and > at least one of them."""
    h, w = v.shape
    lo = np.full((h + 2, w + 2), -np.inf)
    hi = np.full((h + 2, w + 2), np.inf)
    lo[1:-1, 1:-1] = v
    hi[1:-1, 1:-1] = v
    ge_all = np.ones(v.shape, dtype=bool)
    gt_any = np.zeros(v.shape, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            ge_all &= v >= lo[1 + dy : h + 1 + dy, 1 + dx : w + 1 + dx]
            gt_any |= v > hi[1 + dy : h + 1 + dy, 1 + dx : w + 1 + dx]
    return ge_all & gt_any


def guided_points(
    variance, budget: int, d_min: float
) -> list[tuple[int, int]]:
    """Measurement sites at local variance maxima, spaced at least ``d_min``.

    Maxima are visited in descending variance (row-major on ties) and
    accepted greedily under the spacing rule; if the budget is still open,
    remaining pixels fill in by descending variance, and finally the
    spacing requirement is halved toward zero.  Deterministic given the
    variance map; returns at most one point per pixel.
    """
    v = _variance_values(variance)
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if d_min < 0:
        raise ValueError("minimum spacing must be non-negative")
    h, w = v.shape

    order = np.argsort(-v.ravel(), kind="stable")
    ranked = [(int(i) // w, int(i) % w) for i in order]
    maxima = _local_maxima(v)

    accepted: list[tuple[int, int]] = []
    taken: set[tuple[int, int]] = set()

    def sweep(points: list[tuple[int, int]], spacing: float) -> None:
        for p in points:
            if len(accepted) >= budget:
                return
            if p in taken:
                continue
            if all(math.dist(p, q) >= spacing for q in accepted):
                accepted.append(p)
                taken.add(p)

    sweep([p for p in ranked if maxima[p]], d_min)
    sweep(ranked, d_min)
    spacing = d_min
    while len(accepted) < budget and spacing > 0:
        spacing = spacing / 2.0 if spacing / 2.0 >= 0.5 else 0.0
        sweep(ranked, spacing)
    return accepted


# -------------------------------------------------------- ordinal queries


def _normalize_point(p) -> tuple[int, int]:
    y, x = p
    return (int(y), int(x))


@dataclass(frozen=True)
class OrdinalQuery:
    """Which of two pixels is closer, with an equality ratio band."""

    a: tuple[int, int]
    b: tuple[int, int]
    tau: float = DEFAULT_EQUALITY_RATIO

    def __post_init__(self):
        object.__setattr__(self, "a", _normalize_point(self.a))
        object.__setattr__(self, "b", _normalize_point(self.b))
        if self.a == self.b:
            raise ValueError("ordinal query needs two distinct pixels")
        if self.tau < 0:
            raise ValueError(f"equality ratio threshold {self.tau} must be >= 0")


@dataclass(frozen=True)
class OrdinalVerdict:
    """Majority ordinal relation with per-class vote counts."""

    relation: str
    counts: dict[str, int] = field(compare=False)
    n_pairs: int = 0

    def __post_init__(self):
        if self.relation not in ORDINAL_RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")
        if sum(self.counts.values()) != self.n_pairs:
            raise ValueError(
                f"votes {self.counts} do not sum to pair count {self.n_pairs}"
            )


def _classify_votes(za: np.ndarray, zb: np.ndarray, tau: float):
    za = np.asarray(za, dtype=np.float64)
    zb = np.asarray(zb, dtype=np.float64)
    hi = np.maximum(za, zb)
    lo = np.minimum(za, zb)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(lo > 0, hi / np.where(lo > 0, lo, 1.0), np.inf)
    eq = (ratio < 1.0 + tau) | (za == zb)
    a_closer = ~eq & (za < zb)
    b_closer = ~eq & (za > zb)
    return int(a_closer.sum()), int(b_closer.sum()), int(eq.sum())


def _verdict_from_counts(n_a: int, n_b: int, n_eq: int) -> OrdinalVerdict:
    counts = {"A-closer": n_a, "B-closer": n_b, "equal": n_eq}
    best = max(counts.values())
    for name in ("equal", "A-closer", "B-closer"):  # tie priority
        if counts[name] == best:
            return OrdinalVerdict(
                relation=name, counts=counts, n_pairs=n_a + n_b + n_eq
            )
    raise AssertionError("unreachable")


def ordinal_vote(
    ss: SampleSet,
    a,
    b,
    tau: float = DEFAULT_EQUALITY_RATIO,
) -> OrdinalVerdict:
    """Vote the ordinal relation of pixels ``a`` and ``b`` over all samples.

    Every (patch, sample) pair whose window contains both pixels casts one
    vote: ``equal`` when the larger/smaller depth ratio stays below
    ``1 + tau``, otherwise whichever pixel is nearer.  Ties between top
    vote counts resolve to ``equal`` first, then ``A-closer``.
    """
    query = OrdinalQuery(a=a, b=b, tau=tau)
    grid = ss.grid
    for name, (y, x) in (("a", query.a), ("b", query.b)):
        if not (0 <= y < grid.height and 0 <= x < grid.width):
            raise ValueError(f"point {name}=({y}, {x}) outside the image")
    common = set(grid.covering(*query.a)) & set(grid.covering(*query.b))
    if not common:
        raise ValueError(
            f"pixels {query.a} and {query.b} never share a patch "
            f"(patch size {grid.patch}); they are too far apart"
        )
    n_a = n_b = n_eq = 0
    for r, c in sorted(common):
        oy, ox = grid.origin(r, c)
        za = ss.samples[r, c, :, query.a[0] - oy, query.a[1] - ox]
        zb = ss.samples[r, c, :, query.b[0] - oy, query.b[1] - ox]
        da, db, de = _classify_votes(za, zb, query.tau)
        n_a, n_b, n_eq = n_a + da, n_b + db, n_eq + de
    return _verdict_from_counts(n_a, n_b, n_eq)


def ordinal_from_map(
    depth: DepthMap,
    a,
    b,
    tau: float = DEFAULT_EQUALITY_RATIO,
) -> OrdinalVerdict:
    """Single-comparison ordinal relation read off one depth map."""
    query = OrdinalQuery(a=a, b=b, tau=tau)
    h, w = depth.shape
    for name, (y, x) in (("a", query.a), ("b", query.b)):
        if not (0 <= y < h and 0 <= x < w):
            raise ValueError(f"point {name}=({y}, {x}) outside the image")
    za = np.array([depth.values[query.a]])
    zb = np.array([depth.values[query.b]])
    return _verdict_from_counts(*_classify_votes(za, zb, query.tau))
