"""Per-muscle architectural parameters.

Muscle volume comes from the mask, fiber length from tract arc lengths, and
pennation angle from the tract chord against the muscle's line of action. The
line of action is a total-least-squares 3D line through all tract endpoints;
when its goodness of fit R^2 exceeds the threshold the endpoints are arranged
linearly and the muscle classifies as pennate, otherwise the mean tract
direction is used and the muscle classifies as non-pennate. PCSA is
MV * cos(PA) / FL with the median FL and PA.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, EmptyDomainError
from .grid import VoxelMask
from .streamline import Streamline, StreamlineSet, arc_length

R2_THRESHOLD_DEFAULT = 0.9


@dataclass
class LineOfAction:
    anchor: np.ndarray
    direction: np.ndarray
    r2: float
    source: str  # endpoint_fit | mean_direction


@dataclass
class MuscleArchitecture:
    mv: float
    fl_median: float
    ml: float
    fl_ml_ratio: float
    pa_median: float
    pcsa: float
    loa: LineOfAction
    arch_type: str  # pennate | non_pennate


def muscle_volume(mask: VoxelMask) -> float:
    """Occupied-voxel count times voxel volume, in mm^3."""
    if mask.n_occupied == 0:
        raise EmptyDomainError("mask has no occupied voxels")
    return mask.n_occupied * mask.voxel_volume


def tract_endpoints(sset: StreamlineSet) -> np.ndarray:
    """Both endpoints of every tract as a (2n, 3) array."""
    return np.array([p for s in sset for p in (s.points[0], s.points[-1])])


def line_of_action(sset: StreamlineSet, r2_threshold: float = R2_THRESHOLD_DEFAULT) -> LineOfAction:
    """Fit the muscle's force axis from tract endpoints.

    Total least squares (perpendicular residuals) through all endpoints; R^2 is
    1 - (mean squared perpendicular distance / mean squared distance to the
    centroid). Above the threshold the fitted line is adopted; otherwise the
    direction falls back to the normalized mean of per-tract unit chords,
    sign-aligned to the first tract.
    """
    if len(sset) < 3:
        raise DegenerateGeometryError("line of action needs at least 3 streamlines")
    pts = tract_endpoints(sset)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    total = float((centered * centered).sum() / len(pts))
    if total <= 0.0:
        raise DegenerateGeometryError("all tract endpoints coincide")

    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    direction = vt[0]
    direction = direction * np.sign(direction[np.argmax(np.abs(direction))])
    along = float(svals[0] ** 2 / len(pts))
    r2 = min(1.0, max(0.0, 1.0 - (total - along) / total))

    if r2 > r2_threshold:
        return LineOfAction(centroid, direction, r2, "endpoint_fit")

    chords = np.array([s.points[-1] - s.points[0] for s in sset])
    norms = np.linalg.norm(chords, axis=1)
    if (norms == 0).any():
        raise DegenerateGeometryError("zero-length tract chord")
    chords /= norms[:, None]
    signs = np.where(chords @ chords[0] < 0, -1.0, 1.0)
    mean_dir = (chords * signs[:, None]).mean(axis=0)
    norm = np.linalg.norm(mean_dir)
    if norm == 0.0:
        raise DegenerateGeometryError("tract chords cancel; no mean direction")
    return LineOfAction(centroid, mean_dir / norm, r2, "mean_direction")


def pennation_angle(s: Streamline, loa: LineOfAction) -> float:
    """Angle in [0, 90] degrees between the tract chord and the line of action."""
    chord = s.points[-1] - s.points[0]
    norm = np.linalg.norm(chord)
    if norm == 0.0:
        raise DegenerateGeometryError("zero-length tract chord")
    cos = abs(float(chord @ loa.direction) / norm)
    return math.degrees(math.acos(min(1.0, cos)))


def muscle_length(sset: StreamlineSet, loa: LineOfAction) -> float:
    """Extent of all tract points projected on the line of action, in mm."""
    if len(sset) == 0:
        raise EmptyDomainError("streamline set is empty")
    proj = np.concatenate([s.points @ loa.direction for s in sset])
    return float(proj.max() - proj.min())


def muscle_length_from_mask(mask: VoxelMask, loa: LineOfAction) -> float:
    """Sensitivity variant: extent of occupied voxel centers along the line of action."""
    if mask.n_occupied == 0:
        raise EmptyDomainError("mask has no occupied voxels")
    proj = mask.voxel_centers(mask.occupied_indices()) @ loa.direction
    return float(proj.max() - proj.min())


def summarize(mask: VoxelMask, sset: StreamlineSet, loa: LineOfAction) -> MuscleArchitecture:
    """Assemble the per-muscle architecture record.

    FL and PA are summarized by their medians over tracts; FL/ML and PCSA are
    computed exactly from the stored fields (PCSA = MV * cos(PA) / FL).
    """
    if len(sset) == 0:
        raise EmptyDomainError("streamline set is empty")
    mv = muscle_volume(mask)
    fl_median = float(np.median([arc_length(s) for s in sset]))
    pa_median = float(np.median([pennation_angle(s, loa) for s in sset]))
    ml = muscle_length(sset, loa)
    return MuscleArchitecture(
        mv=mv,
        fl_median=fl_median,
        ml=ml,
        fl_ml_ratio=fl_median / ml,
        pa_median=pa_median,
        pcsa=mv * math.cos(math.radians(pa_median)) / fl_median,
        loa=loa,
        arch_type="pennate" if loa.source == "endpoint_fit" else "non_pennate",
    )


@dataclass
class GroupFractions:
    """Per-group muscle-volume fractions and per-record PCSA fractions."""

    volume_fraction: dict[str, float]
    pcsa_fraction: list[float]
    groups: list[str]


def group_fractions(records: list[tuple[str, MuscleArchitecture]]) -> GroupFractions:
    """Volume fraction of each functional group and PCSA fraction of each
    muscle within its group. Fractions sum to 1 per scope."""
    if not records:
        raise EmptyDomainError("no architecture records")
    total_mv = sum(arch.mv for _, arch in records)
    if total_mv <= 0:
        raise EmptyDomainError("total muscle volume is zero")

    group_mv: dict[str, float] = {}
    group_pcsa: dict[str, float] = {}
    for group, arch in records:
        group_mv[group] = group_mv.get(group, 0.0) + arch.mv
        group_pcsa[group] = group_pcsa.get(group, 0.0) + arch.pcsa

    volume_fraction = {g: mv / total_mv for g, mv in group_mv.items()}
    pcsa_fraction = [arch.pcsa / group_pcsa[group] for group, arch in records]
    return GroupFractions(volume_fraction, pcsa_fraction, [g for g, _ in records])
