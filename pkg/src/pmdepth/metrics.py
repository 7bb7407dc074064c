"""Depth-accuracy metrics and ordinal disagreement rates.

Pointwise metrics compare predicted depth maps against ground truth over
valid pixels; ordinal metrics compare relative-depth verdicts for pairs of
image locations.  Both report types serialize to JSON and to aligned-column
text for terminal display.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import DepthMap

ORDINAL_RELATIONS = ("A-closer", "B-closer", "equal")


def _format_table(rows: Sequence[tuple[str, str]]) -> str:
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


@dataclass(frozen=True)
class ErrorReport:
    """Pointwise accuracy of predicted depth maps.

    ``rms`` pools squared errors over every valid pixel of every image;
    ``m_rms`` averages per-image rms values instead.  ``rel`` is the mean
    absolute relative error, and ``delta1..3`` give the percentage of pixels
    whose worse depth ratio stays below ``1.25**k``.
    """

    rms: float
    m_rms: float
    rel: float
    delta1: float
    delta2: float
    delta3: float
    n_pixels: int
    n_images: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "rms": self.rms,
                "m_rms": self.m_rms,
                "rel": self.rel,
                "delta1": self.delta1,
                "delta2": self.delta2,
                "delta3": self.delta3,
                "n_pixels": self.n_pixels,
                "n_images": self.n_images,
            },
            ensure_ascii=False,
        )

    def to_text(self) -> str:
        rows = [
            ("rms", f"{self.rms:.6f}"),
            ("m_rms", f"{self.m_rms:.6f}"),
            ("rel", f"{self.rel:.6f}"),
            ("delta1", f"{self.delta1:.2f}%"),
            ("delta2", f"{self.delta2:.2f}%"),
            ("delta3", f"{self.delta3:.2f}%"),
            ("pixels", str(self.n_pixels)),
            ("images", str(self.n_images)),
        ]
        return _format_table(rows)


@dataclass(frozen=True)
class WkdrReport:
    """Disagreement rates between predicted and reference ordinal verdicts.

    ``wkdr`` is the fraction of all pairs whose predicted relation differs
    from the reference; ``wkdr_equal`` / ``wkdr_unequal`` restrict to pairs
    whose reference relation is ``equal`` / is not.  A restricted rate is
    ``None`` when its subset is empty, and is then omitted from JSON and
    shown as ``-`` in text.
    """

    wkdr: float
    wkdr_equal: Optional[float]
    wkdr_unequal: Optional[float]
    counts: dict[str, int]

    def to_json(self) -> str:
        blob: dict[str, object] = {"wkdr": self.wkdr}
        if self.wkdr_equal is not None:
            blob["wkdr_equal"] = self.wkdr_equal
        if self.wkdr_unequal is not None:
            blob["wkdr_unequal"] = self.wkdr_unequal
        blob["counts"] = self.counts
        return json.dumps(blob, ensure_ascii=False)

    def to_text(self) -> str:
        def fmt(value: Optional[float]) -> str:
            return "-" if value is None else f"{value:.2f}%"

        rows = [
            ("wkdr", fmt(self.wkdr)),
            ("wkdr_equal", fmt(self.wkdr_equal)),
            ("wkdr_unequal", fmt(self.wkdr_unequal)),
        ]
        rows.extend(
            (f"pairs[{name}]", str(self.counts.get(name, 0)))
            for name in ORDINAL_RELATIONS
        )
        return _format_table(rows)


def _as_list(maps: Sequence[DepthMap] | DepthMap) -> list[DepthMap]:
    if isinstance(maps, DepthMap):
        return [maps]
    return list(maps)


def error_report(
    predictions: Sequence[DepthMap] | DepthMap,
    ground_truths: Sequence[DepthMap] | DepthMap,
) -> ErrorReport:
    """Compute pointwise depth metrics over one or more image pairs.

    Pixels where the ground truth is invalid or not strictly positive are
    excluded.  Raises ``ValueError`` when the lists are misaligned or no
    valid pixel remains.
    """
    preds = _as_list(predictions)
    gts = _as_list(ground_truths)
    if len(preds) != len(gts):
        raise ValueError(
            f"got {len(preds)} predictions but {len(gts)} ground truths"
        )
    if not preds:
        raise ValueError("need at least one image pair")

    sq_sum = 0.0
    abs_rel_sum = 0.0
    n_pixels = 0
    per_image_rms = []
    delta_hits = np.zeros(3, dtype=np.int64)

    for pred, gt in zip(preds, gts):
        if pred.shape != gt.shape:
            raise ValueError(
                f"prediction shape {pred.shape} != ground truth shape {gt.shape}"
            )
        keep = gt.values > 0
        if gt.valid is not None:
            keep = keep & gt.valid
        if not keep.any():
            continue
        p = pred.values[keep].astype(np.float64)
        g = gt.values[keep].astype(np.float64)
        err = p - g
        sq = float((err * err).sum())
        sq_sum += sq
        abs_rel_sum += float((np.abs(err) / g).sum())
        per_image_rms.append(np.sqrt(sq / p.size))
        ratio = np.where(p > 0, np.maximum(p / g, g / np.maximum(p, 1e-300)), np.inf)
        for k in range(3):
            delta_hits[k] += int((ratio < 1.25 ** (k + 1)).sum())
        n_pixels += p.size

    if n_pixels == 0:
        raise ValueError("no valid pixels with positive ground truth")

    return ErrorReport(
        rms=float(np.sqrt(sq_sum / n_pixels)),
        m_rms=float(np.mean(per_image_rms)),
        rel=abs_rel_sum / n_pixels,
        delta1=100.0 * delta_hits[0] / n_pixels,
        delta2=100.0 * delta_hits[1] / n_pixels,
        delta3=100.0 * delta_hits[2] / n_pixels,
        n_pixels=n_pixels,
        n_images=len(preds),
    )


def wkdr(
    predicted: Sequence[str],
    reference: Sequence[str],
) -> WkdrReport:
    """Compute ordinal disagreement rates between two verdict sequences.

    Each entry must be one of ``"A-closer"``, ``"B-closer"`` or ``"equal"``.
    """
    pred = list(predicted)
    ref = list(reference)
    if len(pred) != len(ref):
        raise ValueError(f"got {len(pred)} predictions but {len(ref)} references")
    if not pred:
        raise ValueError("need at least one verdict pair")
    for value in (*pred, *ref):
        if value not in ORDINAL_RELATIONS:
            raise ValueError(
                f"unknown ordinal relation {value!r}; expected one of "
                f"{ORDINAL_RELATIONS}"
            )

    disagree = [p != r for p, r in zip(pred, ref)]
    counts = {name: ref.count(name) for name in ORDINAL_RELATIONS if name in ref}

    def rate(indices: list[int]) -> Optional[float]:
        if not indices:
            return None
        return 100.0 * sum(disagree[i] for i in indices) / len(indices)

    all_idx = list(range(len(ref)))
    eq_idx = [i for i in all_idx if ref[i] == "equal"]
    neq_idx = [i for i in all_idx if ref[i] != "equal"]
    total = rate(all_idx)
    assert total is not None
    return WkdrReport(
        wkdr=total,
        wkdr_equal=rate(eq_idx),
        wkdr_unequal=rate(neq_idx),
        counts=counts,
    )
