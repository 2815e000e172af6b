"""Training-time normalization and augmentation pipelines.

Three pipes, one per trainable network:
  corner:   random rotation of the density raster (quarter turns keep the
            raster exact).
  edge:     scale image+edges down so the longest edge stays under 1000 px,
            then random rotation and scaling.
  nextwall: center the edges and normalize the longest edge to 1000, then
            random translation, rotation (any angle), and scaling.
Every transform records enough to map coordinates back exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np
from scipy import ndimage

from .geometry import WallSegment
from .raster import DensityImage
from .synthetic import SyntheticFloor

MAX_EDGE_PIXELS = 1000.0


class AugmentMode(Enum):
    CORNER = "corner"
    EDGE = "edge"
    NEXTWALL = "nextwall"


@dataclass(frozen=True)
class AugmentOptions:
    identity: bool = False
    rotate: bool = True
    scale_range: tuple[float, float] = (0.9, 1.1)
    translate_range: float = 100.0  # nextwall mode only


@dataclass
class TransformRecord:
    """Forward coordinate map with an exact inverse.

    Image modes: p' = quarter_rot_k(p * (sx, sy)); geometry mode:
    p' = R(angle) @ ((p - center) * sx) + translate.
    """

    mode: AugmentMode
    norm_scale: float
    sx: float
    sy: float
    quarter_turns: int = 0
    angle: float = 0.0
    center: tuple[float, float] = (0.0, 0.0)
    translate: tuple[float, float] = (0.0, 0.0)
    scaled_extent: tuple[float, float] = (0.0, 0.0)

    def apply(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        if self.mode is AugmentMode.NEXTWALL:
            q = (pts - np.array(self.center)) * self.sx
            c, s = math.cos(self.angle), math.sin(self.angle)
            rot = np.array([[c, -s], [s, c]])
            return q @ rot.T + np.array(self.translate)
        q = pts * np.array([self.sx, self.sy])
        w, h = self.scaled_extent
        for _ in range(self.quarter_turns % 4):
            q = np.stack([q[:, 1], w - q[:, 0]], axis=1)
            w, h = h, w
        return q

    def invert(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        if self.mode is AugmentMode.NEXTWALL:
            q = pts - np.array(self.translate)
            c, s = math.cos(self.angle), math.sin(self.angle)
            rot = np.array([[c, -s], [s, c]])
            return (q @ rot) / self.sx + np.array(self.center)
        # undo quarter turns in reverse, tracking the extent backwards
        w, h = self.scaled_extent
        k = self.quarter_turns % 4
        dims = [(w, h)]
        for _ in range(k):
            w, h = h, w
            dims.append((w, h))
        q = pts
        for i in range(k, 0, -1):
            w_prev, _ = dims[i - 1]
            q = np.stack([w_prev - q[:, 1], q[:, 0]], axis=1)
        return q / np.array([self.sx, self.sy])


def _transform_walls(walls: list[WallSegment], rec: TransformRecord) -> list[WallSegment]:
    out = []
    for w in walls:
        p = rec.apply(np.array([[w.x0, w.y0], [w.x1, w.y1]]))
        out.append(w.with_coords(p[0, 0], p[0, 1], p[1, 0], p[1, 1]))
    return out


def _resize_planes(data: np.ndarray, scale: float) -> tuple[np.ndarray, float, float]:
    if scale == 1.0:
        return data, 1.0, 1.0
    c, h, w = data.shape
    nh, nw = max(1, int(round(h * scale))), max(1, int(round(w * scale)))
    out = np.stack(
        [ndimage.zoom(data[i], (nh / h, nw / w), order=1, grid_mode=True, mode="nearest")
         for i in range(c)]
    )
    return out, nw / w, nh / h


def normalize_and_augment(
    floor: SyntheticFloor,
    mode: AugmentMode,
    seed: Optional[int] = None,
    options: AugmentOptions = AugmentOptions(),
    rng: Optional[np.random.Generator] = None,
) -> tuple[SyntheticFloor, TransformRecord]:
    if rng is None:
        rng = np.random.default_rng(seed)
    longest = max(w.length for w in floor.walls)

    if mode is AugmentMode.NEXTWALL:
        xs = [c for w in floor.walls for c in (w.x0, w.x1)]
        ys = [c for w in floor.walls for c in (w.y0, w.y1)]
        center = ((min(xs) + max(xs)) / 2.0, (min(ys) + max(ys)) / 2.0)
        norm = MAX_EDGE_PIXELS / longest
        if options.identity:
            angle, aug_scale, translate = 0.0, 1.0, (0.0, 0.0)
        else:
            angle = float(rng.uniform(0.0, 2.0 * math.pi)) if options.rotate else 0.0
            aug_scale = float(rng.uniform(*options.scale_range))
            tr = options.translate_range
            translate = (float(rng.uniform(-tr, tr)), float(rng.uniform(-tr, tr)))
        rec = TransformRecord(
            mode=mode,
            norm_scale=norm,
            sx=norm * aug_scale,
            sy=norm * aug_scale,
            angle=angle,
            center=center,
            translate=translate,
        )
        return replace(floor, walls=_transform_walls(floor.walls, rec)), rec

    # image modes: normalization may only shrink
    norm = min(1.0, MAX_EDGE_PIXELS / longest)
    if options.identity or mode is AugmentMode.CORNER:
        aug_scale = 1.0
    else:
        aug_scale = float(rng.uniform(*options.scale_range))
    if options.identity:
        quarter = 0
    else:
        quarter = int(rng.integers(0, 4)) if options.rotate else 0

    data, sx, sy = _resize_planes(floor.density.data.astype(np.float64), norm * aug_scale)
    rotated = np.ascontiguousarray(np.rot90(data, k=quarter, axes=(-2, -1)))
    rec = TransformRecord(
        mode=mode,
        norm_scale=norm,
        sx=sx,
        sy=sy,
        quarter_turns=quarter,
        scaled_extent=(data.shape[-1], data.shape[-2]),
    )
    return (
        replace(
            floor,
            walls=_transform_walls(floor.walls, rec),
            density=DensityImage(rotated.astype(np.float32)),
        ),
        rec,
    )
