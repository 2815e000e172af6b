"""Wall segments, planar-graph cleanup, and reconstruction-quality metrics.

Coordinates are pixels at 1 pixel = 1 inch throughout. All functions here are
pure; nothing mutates its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

# Timestep at which a wall stops counting as recently edited.
RECENT_HORIZON = 10

# Candidates within this endpoint distance of an existing wall are duplicates.
DUPLICATE_THRESHOLD = 10.0

THICKNESS_MIN = 1
THICKNESS_MAX = 84


class WallKind(Enum):
    CANDIDATE = 0
    RECENT = 1
    OLD = 2


def kind_for_timestep(t: int) -> WallKind:
    if t == 0:
        return WallKind.CANDIDATE
    if t < RECENT_HORIZON:
        return WallKind.RECENT
    return WallKind.OLD


@dataclass(frozen=True)
class WallSegment:
    """A 2D wall with endpoints in pixel/inch coordinates.

    kind is derived from the timestep and never stored: t=0 is a candidate,
    1 <= t < 10 a recently edited wall, t >= 10 an old one.
    """

    x0: float
    y0: float
    x1: float
    y1: float
    thickness: Optional[int] = None
    timestep: int = 0

    def __post_init__(self):
        coords = (self.x0, self.y0, self.x1, self.y1)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite wall coordinates: {coords}")
        if self.x0 == self.x1 and self.y0 == self.y1:
            raise ValueError(f"zero-length wall at ({self.x0}, {self.y0})")
        if self.thickness is not None and not (
            THICKNESS_MIN <= self.thickness <= THICKNESS_MAX
        ):
            raise ValueError(
                f"thickness {self.thickness} outside "
                f"[{THICKNESS_MIN}, {THICKNESS_MAX}]"
            )
        if self.timestep < 0:
            raise ValueError(f"negative timestep {self.timestep}")

    @property
    def kind(self) -> WallKind:
        return kind_for_timestep(self.timestep)

    @property
    def length(self) -> float:
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)

    @property
    def p0(self) -> tuple[float, float]:
        return (self.x0, self.y0)

    @property
    def p1(self) -> tuple[float, float]:
        return (self.x1, self.y1)

    @property
    def midpoint(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    def coords(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)

    def with_timestep(self, t: int) -> "WallSegment":
        return replace(self, timestep=t)

    def with_coords(self, x0, y0, x1, y1) -> "WallSegment":
        return replace(self, x0=x0, y0=y0, x1=x1, y1=y1)


def _dot(ax, ay, bx, by):
    return ax * bx + ay * by


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def point_segment_distance(px: float, py: float, seg: WallSegment) -> float:
    """Euclidean distance from a point to the closest point of a segment."""
    vx, vy = seg.x1 - seg.x0, seg.y1 - seg.y0
    wx, wy = px - seg.x0, py - seg.y0
    denom = _dot(vx, vy, vx, vy)
    if denom <= 0.0:
        return math.hypot(wx, wy)
    t = max(0.0, min(1.0, _dot(wx, wy, vx, vy) / denom))
    return math.hypot(px - (seg.x0 + t * vx), py - (seg.y0 + t * vy))


def project_onto_segment(px: float, py: float, seg: WallSegment) -> tuple[float, float, float]:
    """Project a point onto a segment; returns (t, x, y) with t clamped to [0, 1]."""
    vx, vy = seg.x1 - seg.x0, seg.y1 - seg.y0
    denom = _dot(vx, vy, vx, vy)
    t = max(0.0, min(1.0, _dot(px - seg.x0, py - seg.y0, vx, vy) / denom))
    return t, seg.x0 + t * vx, seg.y0 + t * vy


def _on_segment_collinear(ax, ay, bx, by, px, py) -> bool:
    return (
        min(ax, bx) - 1e-12 <= px <= max(ax, bx) + 1e-12
        and min(ay, by) - 1e-12 <= py <= max(ay, by) + 1e-12
    )


def segments_intersect(a: WallSegment, b: WallSegment) -> bool:
    """True if the closed segments share at least one point."""
    d1 = _cross(b.x1 - b.x0, b.y1 - b.y0, a.x0 - b.x0, a.y0 - b.y0)
    d2 = _cross(b.x1 - b.x0, b.y1 - b.y0, a.x1 - b.x0, a.y1 - b.y0)
    d3 = _cross(a.x1 - a.x0, a.y1 - a.y0, b.x0 - a.x0, b.y0 - a.y0)
    d4 = _cross(a.x1 - a.x0, a.y1 - a.y0, b.x1 - a.x0, b.y1 - a.y0)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return True
    if d1 == 0 and _on_segment_collinear(b.x0, b.y0, b.x1, b.y1, a.x0, a.y0):
        return True
    if d2 == 0 and _on_segment_collinear(b.x0, b.y0, b.x1, b.y1, a.x1, a.y1):
        return True
    if d3 == 0 and _on_segment_collinear(a.x0, a.y0, a.x1, a.y1, b.x0, b.y0):
        return True
    if d4 == 0 and _on_segment_collinear(a.x0, a.y0, a.x1, a.y1, b.x1, b.y1):
        return True
    return False


def segment_distance(a: WallSegment, b: WallSegment) -> float:
    """Minimum distance between any point of a and any point of b, in inches."""
    if segments_intersect(a, b):
        return 0.0
    return min(
        point_segment_distance(a.x0, a.y0, b),
        point_segment_distance(a.x1, a.y1, b),
        point_segment_distance(b.x0, b.y0, a),
        point_segment_distance(b.x1, b.y1, a),
    )


def endpoint_pairing_distance(a: WallSegment, b: WallSegment) -> float:
    """Max endpoint distance under the better of the two endpoint pairings.

    Walls are undirected, so the pairing (a0-b0, a1-b1) competes with the
    flipped (a0-b1, a1-b0); the smaller maximum wins.
    """
    d00 = math.hypot(a.x0 - b.x0, a.y0 - b.y0)
    d11 = math.hypot(a.x1 - b.x1, a.y1 - b.y1)
    d01 = math.hypot(a.x0 - b.x1, a.y0 - b.y1)
    d10 = math.hypot(a.x1 - b.x0, a.y1 - b.y0)
    return min(max(d00, d11), max(d01, d10))


@dataclass
class WallGraph:
    """A set of walls plus their deduplicated endpoints."""

    walls: list[WallSegment] = field(default_factory=list)
    corner_merge_tol: float = 1.0

    @property
    def corners(self) -> list[tuple[float, float]]:
        merged: list[tuple[float, float]] = []
        for w in self.walls:
            for p in (w.p0, w.p1):
                if not any(
                    math.hypot(p[0] - q[0], p[1] - q[1]) <= self.corner_merge_tol
                    for q in merged
                ):
                    merged.append(p)
        return merged

    def total_length(self) -> float:
        return sum(w.length for w in self.walls)


def split_t_junctions(g: WallGraph, tol: float = 1.0) -> WallGraph:
    """Split walls where another wall's endpoint abuts their interior.

    A wall is split at the projection of any endpoint that lies within tol of
    the wall but further than tol from both of its own endpoints. Repeats
    until stable so chained junctions resolve too.
    """
    walls = list(g.walls)
    for _ in range(64):
        endpoints = [p for w in walls for p in (w.p0, w.p1)]
        out: list[WallSegment] = []
        changed = False
        for w in walls:
            cuts: list[float] = []
            for px, py in endpoints:
                d_end = min(
                    math.hypot(px - w.x0, py - w.y0),
                    math.hypot(px - w.x1, py - w.y1),
                )
                if d_end <= tol:
                    continue
                if point_segment_distance(px, py, w) <= tol:
                    t, _, _ = project_onto_segment(px, py, w)
                    cuts.append(t)
            if not cuts:
                out.append(w)
                continue
            changed = True
            ts = sorted(set([0.0] + cuts + [1.0]))
            vx, vy = w.x1 - w.x0, w.y1 - w.y0
            for t0, t1 in zip(ts[:-1], ts[1:]):
                if t1 - t0 <= 1e-12:
                    continue
                out.append(
                    w.with_coords(
                        w.x0 + t0 * vx, w.y0 + t0 * vy,
                        w.x0 + t1 * vx, w.y0 + t1 * vy,
                    )
                )
        walls = out
        if not changed:
            break
    return WallGraph(walls=walls, corner_merge_tol=g.corner_merge_tol)


def is_duplicate(candidate: WallSegment, existing: WallSegment,
                 threshold: float = DUPLICATE_THRESHOLD) -> bool:
    """Both corners under threshold (best pairing) flags a duplicate."""
    return endpoint_pairing_distance(candidate, existing) < threshold


def remove_duplicates(
    candidates: Sequence[WallSegment],
    existing: Sequence[WallSegment],
    threshold: float = DUPLICATE_THRESHOLD,
) -> list[WallSegment]:
    """Drop candidates duplicating an existing wall, then mutual duplicates.

    Mutual dedup keeps the earliest candidate in list order.
    """
    survivors: list[WallSegment] = []
    for c in candidates:
        if any(is_duplicate(c, e, threshold) for e in existing):
            continue
        if any(is_duplicate(c, s, threshold) for s in survivors):
            continue
        survivors.append(c)
    return survivors


@dataclass(frozen=True)
class MatchReport:
    precision: float
    recall: float
    f1: float
    iou: float
    width_accuracy: float
    matched: int = 0


def _f1(p: float, r: float) -> float:
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def greedy_match(
    pred: Sequence[WallSegment],
    gt: Sequence[WallSegment],
    threshold: float,
) -> list[tuple[int, int]]:
    """One-to-one matching by ascending endpoint-pair distance."""
    pairs = []
    for i, p in enumerate(pred):
        for j, g in enumerate(gt):
            d = endpoint_pairing_distance(p, g)
            if d <= threshold:
                pairs.append((d, i, j))
    pairs.sort(key=lambda x: (x[0], x[1], x[2]))
    used_p: set[int] = set()
    used_g: set[int] = set()
    matches = []
    for _, i, j in pairs:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        matches.append((i, j))
    return matches


def rasterize_wall_mask(
    walls: Sequence[WallSegment],
    bounds: tuple[float, float, float, float],
    resolution: float = 1.0,
) -> np.ndarray:
    """Binary occupancy mask with walls drawn as thickness-wide rectangles.

    Walls without thickness are drawn 1 inch wide. Cell centers decide
    membership.
    """
    xmin, ymin, xmax, ymax = bounds
    w = max(1, int(math.ceil((xmax - xmin) / resolution)))
    h = max(1, int(math.ceil((ymax - ymin) / resolution)))
    mask = np.zeros((h, w), dtype=bool)
    for wall in walls:
        th = float(wall.thickness if wall.thickness is not None else 1)
        ux, uy = wall.x1 - wall.x0, wall.y1 - wall.y0
        length = math.hypot(ux, uy)
        ux, uy = ux / length, uy / length
        nx, ny = -uy, ux
        half = th / 2.0
        bx0 = min(wall.x0, wall.x1) - half
        bx1 = max(wall.x0, wall.x1) + half
        by0 = min(wall.y0, wall.y1) - half
        by1 = max(wall.y0, wall.y1) + half
        c0 = max(0, int((bx0 - xmin) / resolution) - 1)
        c1 = min(w, int((bx1 - xmin) / resolution) + 2)
        r0 = max(0, int((by0 - ymin) / resolution) - 1)
        r1 = min(h, int((by1 - ymin) / resolution) + 2)
        if c1 <= c0 or r1 <= r0:
            continue
        cols = xmin + (np.arange(c0, c1) + 0.5) * resolution
        rows = ymin + (np.arange(r0, r1) + 0.5) * resolution
        gx, gy = np.meshgrid(cols, rows)
        dx, dy = gx - wall.x0, gy - wall.y0
        along = dx * ux + dy * uy
        across = dx * nx + dy * ny
        inside = (along >= 0) & (along <= length) & (np.abs(across) <= half)
        mask[r0:r1, c0:c1] |= inside
    return mask


def match_walls(
    pred: Sequence[WallSegment],
    gt: Sequence[WallSegment],
    threshold: float,
) -> MatchReport:
    """Greedy one-to-one matching plus IoU and width accuracy.

    Width accuracy counts matched pairs whose thicknesses differ by at most
    3 inches, over matched pairs where both thicknesses are known (vacuously
    1.0 when there are none).
    """
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    if not pred and not gt:
        return MatchReport(1.0, 1.0, 1.0, 1.0, 1.0, 0)
    matches = greedy_match(pred, gt, threshold)
    precision = len(matches) / len(pred) if pred else 0.0
    recall = len(matches) / len(gt) if gt else 0.0

    widths = [
        (pred[i].thickness, gt[j].thickness)
        for i, j in matches
        if pred[i].thickness is not None and gt[j].thickness is not None
    ]
    if widths:
        width_acc = sum(1 for tp, tg in widths if abs(tp - tg) <= 3) / len(widths)
    else:
        width_acc = 1.0

    allw = list(pred) + list(gt)
    pad = max([w.thickness or 1 for w in allw]) + 2.0
    xs = [c for w in allw for c in (w.x0, w.x1)]
    ys = [c for w in allw for c in (w.y0, w.y1)]
    bounds = (min(xs) - pad, min(ys) - pad, max(xs) + pad, max(ys) + pad)
    m_pred = rasterize_wall_mask(pred, bounds)
    m_gt = rasterize_wall_mask(gt, bounds)
    union = np.logical_or(m_pred, m_gt).sum()
    inter = np.logical_and(m_pred, m_gt).sum()
    iou = float(inter) / float(union) if union > 0 else 1.0

    return MatchReport(
        precision=precision,
        recall=recall,
        f1=_f1(precision, recall),
        iou=iou,
        width_accuracy=width_acc,
        matched=len(matches),
    )
