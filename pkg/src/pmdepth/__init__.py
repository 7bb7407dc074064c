"""Patch-based probabilistic depth map inference.

The depth map for an image is represented as a probability distribution
approximated by per-patch sample sets.  On top of that representation the
package provides pure monocular estimates (per-pixel mean, MAP), fusion
with partial depth measurements, diverse mode generation for human
selection and annotation, guided measurement placement, and ordinal
depth queries.
"""

from pmdepth.core import (
    BinaryMask,
    DepthMap,
    PatchGrid,
    SparseMeasurements,
    coverage_counts,
    crop,
    make_patch_grid,
    overlap_average,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "DepthMap",
    "PatchGrid",
    "SparseMeasurements",
    "coverage_counts",
    "crop",
    "make_patch_grid",
    "overlap_average",
    "__version__",
]
