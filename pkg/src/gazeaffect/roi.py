"""Face regions of interest from 68-point landmarks, and gaze-to-region labelling."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, ValidationError


class RegionLabel(enum.IntEnum):
    Eyes = 0
    Eyebrows = 1
    Nose = 2
    Mouth = 3
    Outside = 4


# canonical 68-point layout, inclusive ranges
LANDMARK_GROUPS = {
    RegionLabel.Eyebrows: range(17, 27),
    RegionLabel.Eyes: range(36, 48),
    RegionLabel.Nose: range(27, 36),
    RegionLabel.Mouth: range(48, 68),
}

# smaller, more specific regions win on overlap
PRIORITY = (RegionLabel.Eyes, RegionLabel.Eyebrows, RegionLabel.Mouth, RegionLabel.Nose)


@dataclass(frozen=True)
class LandmarkFrame:
    t: float
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.shape != (68, 2):
            raise ValidationError(f"landmark frame needs 68 (x, y) points, got shape {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValidationError("landmark coordinates must be finite")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True, eq=False)
class RegionPolygon:
    label: RegionLabel
    vertices: np.ndarray


def convex_hull(points) -> np.ndarray:
    """Monotone-chain hull, counter-clockwise, starting at the lowest-y (then lowest-x) vertex.

    Collinear boundary points are dropped so the hull is minimal.
    """
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float).reshape(-1, 2).tolist())))
    if len(pts) < 3:
        raise DegenerateGeometryError("convex hull needs at least 3 distinct points")

    def half(seq):
        chain = []
        for px, py in seq:
            while len(chain) >= 2:
                (ox, oy), (ax, ay) = chain[-2], chain[-1]
                if (ax - ox) * (py - oy) - (ay - oy) * (px - ox) > 0:
                    break
                chain.pop()
            chain.append((px, py))
        return chain

    lower = half(pts)
    upper = half(reversed(pts))
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateGeometryError("points are collinear")
    return _canonical_start(np.array(hull))


def _canonical_start(vertices):
    start = np.lexsort((vertices[:, 0], vertices[:, 1]))[0]
    return np.concatenate([vertices[start:], vertices[:start]]) if start else vertices


def _next(v):
    return np.concatenate([v[1:], v[:1]])


def _drop_collinear(vertices, tol=1e-15):
    prev = np.concatenate([vertices[-1:], vertices[:-1]])
    nxt = _next(vertices)
    cross = (vertices[:, 0] - prev[:, 0]) * (nxt[:, 1] - prev[:, 1]) \
        - (vertices[:, 1] - prev[:, 1]) * (nxt[:, 0] - prev[:, 0])
    return vertices[np.abs(cross) > tol]


def minkowski_sum(p, q) -> np.ndarray:
    """Sum of two CCW convex polygons by merging their edges in angle order."""
    p, q = _canonical_start(np.asarray(p, float)), _canonical_start(np.asarray(q, float))
    edges = np.concatenate([_next(p) - p, _next(q) - q])
    angle = np.mod(np.arctan2(edges[:, 1], edges[:, 0]), 2 * np.pi)
    edges = edges[np.argsort(angle, kind="stable")]
    verts = p[0] + q[0] + np.concatenate([[np.zeros(2)], np.cumsum(edges[:-1], axis=0)])
    return _canonical_start(_drop_collinear(verts))


def contains(vertices, p, tol=1e-12) -> bool:
    """Point in (or on) a CCW convex polygon."""
    v = np.asarray(vertices, dtype=float)
    nxt = _next(v)
    cross = (nxt[:, 0] - v[:, 0]) * (p[1] - v[:, 1]) - (nxt[:, 1] - v[:, 1]) * (p[0] - v[:, 0])
    return bool(np.all(cross >= -tol))


def contains_many(vertices, pts, tol=1e-12) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    nxt = _next(v)
    ex = (nxt[:, 0] - v[:, 0])[None, :]
    ey = (nxt[:, 1] - v[:, 1])[None, :]
    cross = ex * (pts[:, 1:2] - v[None, :, 1]) - ey * (pts[:, 0:1] - v[None, :, 0])
    return np.all(cross >= -tol, axis=1)


_ANG = np.linspace(0, 2 * np.pi, 16, endpoint=False)
_UNIT_RING = np.column_stack([np.cos(_ANG), np.sin(_ANG)])


def _inflate(vertices, margin):
    if margin <= 0:
        return vertices
    return minkowski_sum(vertices, margin * _UNIT_RING)


def build_regions(frame: LandmarkFrame, margin: float = 0.02) -> list:
    """Four convex region polygons for one landmark frame.

    ``margin`` is a fraction of face width (landmark x-extent); each hull is
    grown outward by that distance (Minkowski sum with a 16-gon).
    """
    pts = frame.points
    face_width = float(np.ptp(pts[:, 0]))
    if face_width <= 0:
        raise DegenerateGeometryError("landmarks have zero horizontal extent")
    regions = []
    for label in (RegionLabel.Eyes, RegionLabel.Eyebrows, RegionLabel.Nose, RegionLabel.Mouth):
        hull = convex_hull(pts[list(LANDMARK_GROUPS[label])])
        regions.append(RegionPolygon(label, _inflate(hull, margin * face_width)))
    return regions


def label_point(p, regions) -> RegionLabel:
    by_label = {r.label: r for r in regions}
    for label in PRIORITY:
        r = by_label.get(label)
        if r is not None and contains(r.vertices, p):
            return label
    return RegionLabel.Outside


def label_points(pts, regions) -> np.ndarray:
    """Vectorised :func:`label_point`; returns an int array of RegionLabel values."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    out = np.full(len(pts), int(RegionLabel.Outside))
    by_label = {r.label: r for r in regions}
    for label in reversed(PRIORITY):
        r = by_label.get(label)
        if r is not None:
            out[contains_many(r.vertices, pts)] = int(label)
    return out


def nearest_frame_index(frame_times, t) -> np.ndarray:
    """Index of the nearest frame in time for each t; ties go to the earlier frame."""
    ft = np.asarray(frame_times, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    idx = np.clip(np.searchsorted(ft, t, side="left"), 1, max(len(ft) - 1, 1))
    if len(ft) == 1:
        return np.zeros(len(t), dtype=int)
    earlier = idx - 1
    pick_later = np.abs(ft[idx] - t) < np.abs(t - ft[earlier])
    return np.where(pick_later, idx, earlier)


@dataclass(frozen=True)
class StimulusMapping:
    """Normalized screen -> normalized stimulus: (p - offset) / scale."""

    offset: tuple[float, float] = (0.0, 0.0)
    scale: tuple[float, float] = (1.0, 1.0)

    def apply(self, pts):
        return (np.asarray(pts, dtype=float) - np.asarray(self.offset)) / np.asarray(self.scale)


def label_trial(t, pts, frames, regions_per_frame, mapping: StimulusMapping | None = None) -> np.ndarray:
    """Region label per gaze sample using the nearest-in-time landmark frame."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    if mapping is not None:
        pts = mapping.apply(pts)
    idx = nearest_frame_index([f.t for f in frames], t)
    labels = np.empty(len(pts), dtype=int)
    for k in np.unique(idx):
        sel = idx == k
        labels[sel] = label_points(pts[sel], regions_per_frame[k])
    return labels


def proportions_from_labels(labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    if labels.size == 0:
        raise ValidationError("no samples to compute region proportions")
    return np.bincount(labels, minlength=len(RegionLabel)) / labels.size


def region_proportions(trial, frames, regions_per_frame, by="samples", fixations=None,
                       mapping: StimulusMapping | None = None) -> np.ndarray:
    """Share of gaze per region in (Eyes, Eyebrows, Nose, Mouth, Outside) order.

    ``by="fixations"`` counts fixation centroids (labelled at their midpoint
    time) instead of valid samples.
    """
    if by == "samples":
        valid = trial.valid
        if not valid.any():
            raise ValidationError(f"trial {trial.trial_id}: no valid samples")
        labels = label_trial(trial.t[valid], np.column_stack([trial.x[valid], trial.y[valid]]),
                             frames, regions_per_frame, mapping)
    elif by == "fixations":
        if not fixations:
            raise ValidationError(f"trial {trial.trial_id}: no fixations")
        mid = [(f.start_t + f.end_t) / 2 for f in fixations]
        labels = label_trial(mid, [f.centroid for f in fixations], frames, regions_per_frame, mapping)
    else:
        raise ValidationError(f"unknown proportion basis {by!r}")
    return proportions_from_labels(labels)
