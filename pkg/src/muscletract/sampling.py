"""Seed generation baselines (2DS, 3DS) and farthest streamline sampling.

FSS reduces a candidate streamline set to k streamlines by farthest-first
traversal under the MDF distance: each step selects the remaining streamline
whose minimum distance to the already-selected set is largest. Min distances
are cached per remaining streamline and updated after every selection, so the
whole run costs O(n * k) MDF evaluations instead of O(n^2 * k).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArityError, EmptyDomainError, InsufficientExtentError, InvalidSpecError
from .grid import VoxelMask
from .streamline import (
    DEFAULT_RESAMPLE_POINTS,
    StreamlineSet,
    arc_length,
    batch_mdf_to_one,
    stack_resampled,
)


@dataclass
class SeedSet:
    """Seed points in world mm, tagged with the strategy that produced them."""

    points: np.ndarray
    strategy: str

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.points = pts
        if self.strategy not in ("2ds", "3ds"):
            raise InvalidSpecError(f"unknown seeding strategy {self.strategy!r}")

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class FSSConfig:
    """Candidate count, output count k, resample count m, and the init rule."""

    n_candidates: int = 10000
    k: int = 3000
    m: int = DEFAULT_RESAMPLE_POINTS
    init_rule: str = "longest"

    def __post_init__(self):
        if not 1 <= self.k <= self.n_candidates:
            raise InvalidSpecError(f"need 1 <= k <= n_candidates, got k={self.k}, n={self.n_candidates}")
        if self.m < 2:
            raise InvalidSpecError(f"need m >= 2, got {self.m}")
        if self.init_rule not in ("longest", "index"):
            raise InvalidSpecError(f"init_rule must be 'longest' or 'index', got {self.init_rule!r}")


@dataclass
class FSSTrace:
    """Record of one traversal: ids in selection order and the min-distance
    at which each was picked (inf for the initial pick)."""

    selected_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    selection_distance: np.ndarray = field(default_factory=lambda: np.empty(0))


def seeds_3d(mask: VoxelMask, spacing_mm: float) -> SeedSet:
    """Uniform volume seeding: voxel centers on a stride lattice.

    The stride per axis is round(spacing / voxel_size), at least 1, and the
    lattice is anchored at the occupied bounding-box minimum so an isolated
    in-mask voxel always contributes its center.
    """
    if spacing_mm <= 0:
        raise InvalidSpecError("spacing must be positive")
    occ = mask.occupied_indices()
    if len(occ) == 0:
        raise EmptyDomainError("mask has no occupied voxels")
    stride = np.maximum(1, np.round(spacing_mm / mask.voxel_size).astype(int))
    lo = occ.min(axis=0)
    keep = (((occ - lo) % stride) == 0).all(axis=1)
    return SeedSet(mask.voxel_centers(occ[keep]), "3ds")


def seeds_2d(mask: VoxelMask, n_slices: int = 5) -> SeedSet:
    """Slice-based seeding: n_slices evenly spaced along the longitudinal axis,
    one seed per in-mask voxel center within each chosen slice.

    Slice indices are round(first + (last - first) * i / (n_slices - 1)) over
    the occupied range; the longitudinal axis is the one with the largest
    occupied extent (ties prefer z).
    """
    if n_slices < 1:
        raise InvalidSpecError("n_slices must be >= 1")
    occ = mask.occupied_indices()
    if len(occ) == 0:
        raise EmptyDomainError("mask has no occupied voxels")

    extents = occ.max(axis=0) - occ.min(axis=0) + 1
    axis = 2 - int(np.argmax(extents[::-1]))

    occupied_slices = np.unique(occ[:, axis])
    if len(occupied_slices) < n_slices:
        raise InsufficientExtentError(
            f"mask has {len(occupied_slices)} occupied slices, need {n_slices}"
        )
    first, last = int(occupied_slices[0]), int(occupied_slices[-1])
    if n_slices == 1:
        chosen = np.array([first])
    else:
        chosen = np.round(np.linspace(first, last, n_slices)).astype(int)

    picks = occ[np.isin(occ[:, axis], chosen)]
    return SeedSet(mask.voxel_centers(picks), "2ds")


def fss_filter(candidates: StreamlineSet, cfg: FSSConfig) -> tuple[StreamlineSet, FSSTrace]:
    """Filter candidates to cfg.k streamlines by farthest-first traversal.

    Deterministic: the first pick follows cfg.init_rule (longest arc length by
    default), every later step picks the remaining streamline maximizing its
    minimum MDF to the selected set, and ties break to the lowest id. Output
    order is selection order.
    """
    sls = sorted(candidates.streamlines, key=lambda s: s.id)
    n = len(sls)
    if n == 0:
        raise EmptyDomainError("candidate set is empty")
    if cfg.k > n:
        raise ArityError(f"k={cfg.k} exceeds candidate count {n}")

    stack = stack_resampled(sls, cfg.m)

    if cfg.init_rule == "longest":
        lengths = np.array([arc_length(s) for s in sls])
        first = int(np.argmax(lengths))
    else:
        first = 0

    selected = np.empty(cfg.k, dtype=np.int64)
    distances = np.empty(cfg.k)
    selected[0] = first
    distances[0] = np.inf

    dmin = batch_mdf_to_one(stack, stack[first])
    dmin[first] = -np.inf
    for step in range(1, cfg.k):
        j = int(np.argmax(dmin))
        selected[step] = j
        distances[step] = dmin[j]
        upd = batch_mdf_to_one(stack, stack[j])
        np.minimum(dmin, upd, out=dmin)
        dmin[j] = -np.inf

    chosen = [sls[i] for i in selected]
    trace = FSSTrace(
        selected_ids=np.array([s.id for s in chosen], dtype=np.int64),
        selection_distance=distances,
    )
    return StreamlineSet(chosen, mask=candidates.mask), trace
