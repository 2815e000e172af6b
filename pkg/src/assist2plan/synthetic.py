"""Synthetic rectilinear floors with architect-like modeling orderings.

A floor is generated by recursive spatial subdivision of an inner rectangle
into rooms. Wall segments are pre-split at junctions so the ground-truth
graph is already a proper planar graph. The ground-truth ordering walks the
exterior perimeter first, then finishes rooms one at a time, continuing from
walls adjacent to the previous one. A density image is synthesized by
stamping noisy ridges along each wall in all three channels plus clutter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import WallGraph, WallSegment, point_segment_distance, rasterize_wall_mask
from .raster import DensityImage


@dataclass(frozen=True)
class FloorParams:
    rooms: int = 4
    extent: tuple[int, int] = (256, 256)
    margin: int = 24
    min_room: int = 36
    noise: float = 0.08
    clutter: int = 6
    exterior_thickness: tuple[int, int] = (8, 12)
    interior_thickness: tuple[int, int] = (4, 6)


@dataclass
class SyntheticFloor:
    floor_id: str
    walls: list[WallSegment]  # ground-truth modeling order
    density: DensityImage
    seed: int
    params: FloorParams

    @property
    def graph(self) -> WallGraph:
        return WallGraph(walls=list(self.walls))

    @property
    def corners(self) -> list[tuple[float, float]]:
        return self.graph.corners


@dataclass
class _Cell:
    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def w(self) -> int:
        return self.x1 - self.x0

    @property
    def h(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.w * self.h


def _subdivide(rng: np.random.Generator, root: _Cell, rooms: int,
               min_room: int) -> list[_Cell]:
    cells = [root]
    while len(cells) < rooms:
        splittable = [
            (i, c) for i, c in enumerate(cells)
            if c.w >= 2 * min_room or c.h >= 2 * min_room
        ]
        if not splittable:
            raise ValueError(
                f"extent too small for {rooms} rooms with min_room={min_room}"
            )
        i, cell = max(splittable, key=lambda ic: ic[1].area)
        if cell.w >= cell.h and cell.w >= 2 * min_room:
            x = int(rng.integers(cell.x0 + min_room, cell.x1 - min_room + 1))
            parts = [_Cell(cell.x0, cell.y0, x, cell.y1), _Cell(x, cell.y0, cell.x1, cell.y1)]
        else:
            y = int(rng.integers(cell.y0 + min_room, cell.y1 - min_room + 1))
            parts = [_Cell(cell.x0, cell.y0, cell.x1, y), _Cell(cell.x0, y, cell.x1, cell.y1)]
        cells[i : i + 1] = parts
    return cells


def _merge_intervals(ivs: list[tuple[int, int]]) -> list[tuple[int, int]]:
    ivs = sorted(ivs)
    out: list[list[int]] = []
    for a, b in ivs:
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def _atomic_segments(cells: list[_Cell]) -> tuple[list[tuple], list[tuple]]:
    """Junction-split wall pieces for a set of cells.

    Returns (vertical, horizontal) pieces as (line_coord, lo, hi) triples.
    Pieces are cut wherever a perpendicular wall ends on them or crosses them,
    so no piece's interior contains another piece's endpoint.
    """
    vlines: dict[int, list[tuple[int, int]]] = {}
    hlines: dict[int, list[tuple[int, int]]] = {}
    for c in cells:
        vlines.setdefault(c.x0, []).append((c.y0, c.y1))
        vlines.setdefault(c.x1, []).append((c.y0, c.y1))
        hlines.setdefault(c.y0, []).append((c.x0, c.x1))
        hlines.setdefault(c.y1, []).append((c.x0, c.x1))
    vmerged = {x: _merge_intervals(ivs) for x, ivs in vlines.items()}
    hmerged = {y: _merge_intervals(ivs) for y, ivs in hlines.items()}

    v_end = {(x, y) for x, ivs in vmerged.items() for a, b in ivs for y in (a, b)}
    h_end = {(x, y) for y, ivs in hmerged.items() for a, b in ivs for x in (a, b)}

    def cut_points(line, lo, hi, vertical: bool) -> list[int]:
        cuts = set()
        ends = h_end if vertical else v_end
        for px, py in ends:
            c_line, c_along = (px, py) if vertical else (py, px)
            if c_line == line and lo < c_along < hi:
                cuts.add(c_along)
        # crossings of perpendicular runs (four-way junctions)
        perp = hmerged if vertical else vmerged
        for p_line, ivs in perp.items():
            if lo < p_line < hi:
                for a, b in ivs:
                    if a < line < b:
                        cuts.add(p_line)
        return sorted(cuts)

    vsegs, hsegs = [], []
    for x, ivs in sorted(vmerged.items()):
        for a, b in ivs:
            pts = [a] + cut_points(x, a, b, True) + [b]
            vsegs.extend((x, p, q) for p, q in zip(pts[:-1], pts[1:]))
    for y, ivs in sorted(hmerged.items()):
        for a, b in ivs:
            pts = [a] + cut_points(y, a, b, False) + [b]
            hsegs.extend((y, p, q) for p, q in zip(pts[:-1], pts[1:]))
    return vsegs, hsegs


def _order_walls(walls: list[WallSegment], cells: list[_Cell], inner: _Cell,
                 rng: np.random.Generator) -> list[int]:
    """Perimeter loop first, then room by room with adjacent continuation.

    Each floor carries a latent modeling persona: a preferred loop direction
    and a preference for finishing the smallest enclosed areas first vs
    continuing into the nearest room. Every direction/selection decision is
    a seeded draw biased by the persona, so the style is only observable
    from the ordering itself and a predictor gains accuracy by accumulating
    evidence over the history.
    """
    p_clockwise = float(rng.choice([0.15, 0.85]))
    p_smallest = float(rng.choice([0.15, 0.85]))

    def on_perimeter(w: WallSegment) -> bool:
        if w.x0 == w.x1:
            return w.x0 in (inner.x0, inner.x1)
        return w.y0 in (inner.y0, inner.y1)

    def loop_param(px: float, py: float, rect: _Cell) -> float:
        # clockwise walk: top edge, right edge, bottom edge, left edge
        w, h = rect.x1 - rect.x0, rect.y1 - rect.y0
        x, y = px - rect.x0, py - rect.y0
        if y <= 0.0:
            return x
        if x >= w:
            return w + y
        if y >= h:
            return w + h + (w - x)
        return 2 * w + h + (h - y)

    def order_loop(idxs: list[int], rect: _Cell, start_pt, clockwise: bool) -> list[int]:
        params = [(loop_param(*walls[i].midpoint, rect), i) for i in idxs]
        params.sort()
        if not clockwise:
            params = params[::-1]
        if not params or start_pt is None:
            return [i for _, i in params]
        perim = 2 * (rect.x1 - rect.x0) + 2 * (rect.y1 - rect.y0)
        sp = loop_param(*start_pt, rect)

        def gap(j):
            d = params[j][0] - sp
            return d % perim if clockwise else (-d) % perim

        k = min(range(len(params)), key=gap)
        return [params[(k + j) % len(params)][1] for j in range(len(params))]

    perimeter = [i for i, w in enumerate(walls) if on_perimeter(w)]
    interior = [i for i in range(len(walls)) if i not in set(perimeter)]

    order = order_loop(
        perimeter, inner, (inner.x0, inner.y0), bool(rng.random() < p_clockwise)
    )
    added = set(order)
    cur = walls[order[-1]].midpoint if order else (inner.x0, inner.y0)

    def on_cell(w: WallSegment, c: _Cell) -> bool:
        for fixed, lo, hi, vertical in (
            (c.x0, c.y0, c.y1, True),
            (c.x1, c.y0, c.y1, True),
            (c.y0, c.x0, c.x1, False),
            (c.y1, c.x0, c.x1, False),
        ):
            if vertical and w.x0 == w.x1 == fixed:
                a, b = sorted((w.y0, w.y1))
                if a >= lo and b <= hi:
                    return True
            if not vertical and w.y0 == w.y1 == fixed:
                a, b = sorted((w.x0, w.x1))
                if a >= lo and b <= hi:
                    return True
        return False

    cell_walls = {ci: [i for i in interior if on_cell(walls[i], c)] for ci, c in enumerate(cells)}
    remaining = set(interior)
    while remaining:
        smallest_first = bool(rng.random() < p_smallest)
        best = None
        for ci, idxs in cell_walls.items():
            open_idxs = [i for i in idxs if i in remaining]
            if not open_idxs:
                continue
            d = min(point_segment_distance(cur[0], cur[1], walls[i]) for i in open_idxs)
            key = (cells[ci].area, d, ci) if smallest_first else (d, cells[ci].area, ci)
            if best is None or key < best[0]:
                best = (key, ci)
        ci = best[1]
        open_idxs = [i for i in cell_walls[ci] if i in remaining]
        loop = order_loop(open_idxs, cells[ci], cur, bool(rng.random() < p_clockwise))
        for i in loop:
            order.append(i)
            added.add(i)
            remaining.discard(i)
        cur = walls[order[-1]].midpoint
    return order


def _stamp_density(rng: np.random.Generator, walls: list[WallSegment],
                   params: FloorParams) -> DensityImage:
    w, h = params.extent
    planes = np.zeros((3, h, w), dtype=np.float64)
    channel_gain = (1.0, 0.9, 0.78)
    bounds = (0.0, 0.0, float(w), float(h))
    for wall in walls:
        mask = rasterize_wall_mask([wall], bounds)
        for c in range(3):
            jitter = 1.0 + params.noise * rng.standard_normal(mask.shape)
            planes[c] += mask * np.clip(jitter, 0.2, 2.0) * channel_gain[c]
    # low furniture-like clutter, mostly in the bottom height band
    for _ in range(params.clutter):
        cw = int(rng.integers(4, 17))
        ch = int(rng.integers(4, 17))
        cx = int(rng.integers(params.margin + 2, max(params.margin + 3, w - params.margin - cw - 2)))
        cy = int(rng.integers(params.margin + 2, max(params.margin + 3, h - params.margin - ch - 2)))
        level = rng.uniform(0.08, 0.3)
        planes[0, cy : cy + ch, cx : cx + cw] += level
        planes[1, cy : cy + ch, cx : cx + cw] += 0.3 * level
    planes += 0.01 * rng.random(planes.shape)
    for c in range(3):
        peak = planes[c].max()
        if peak > 0:
            planes[c] /= peak
    return DensityImage(planes.astype(np.float32))


def generate_synthetic_floor(seed: int, params: FloorParams = FloorParams()) -> SyntheticFloor:
    """Deterministic synthetic floor: walls in modeling order plus density."""
    w, h = params.extent
    inner = _Cell(params.margin, params.margin, w - params.margin, h - params.margin)
    if inner.w < params.min_room or inner.h < params.min_room:
        raise ValueError(f"extent {params.extent} too small for margin/min_room")
    rng = np.random.default_rng(seed)
    cells = _subdivide(rng, inner, params.rooms, params.min_room)
    vsegs, hsegs = _atomic_segments(cells)

    t_ext = int(rng.integers(params.exterior_thickness[0], params.exterior_thickness[1] + 1))
    t_int = int(rng.integers(params.interior_thickness[0], params.interior_thickness[1] + 1))

    walls: list[WallSegment] = []
    for x, a, b in vsegs:
        th = t_ext if x in (inner.x0, inner.x1) else t_int
        walls.append(WallSegment(x, a, x, b, thickness=th))
    for y, a, b in hsegs:
        th = t_ext if y in (inner.y0, inner.y1) else t_int
        walls.append(WallSegment(a, y, b, y, thickness=th))

    order = _order_walls(walls, cells, inner, rng)
    ordered = [walls[i] for i in order]
    density = _stamp_density(rng, ordered, params)
    return SyntheticFloor(
        floor_id=f"floor-{seed:05d}",
        walls=ordered,
        density=density,
        seed=seed,
        params=params,
    )


def generate_floor_set(
    count: int,
    seed: int,
    rooms: tuple[int, int] = (3, 6),
    margin: tuple[int, int] = (16, 32),
    min_room: tuple[int, int] = (32, 44),
    extent: int = 256,
) -> list[SyntheticFloor]:
    """A structurally varied batch of floors (room count, margins, and room
    sizes drawn per floor, so wall counts and loop lengths decorrelate)."""
    rng = np.random.default_rng(seed)
    floors = []
    for i in range(count):
        params = FloorParams(
            rooms=int(rng.integers(rooms[0], rooms[1] + 1)),
            extent=(extent, extent),
            margin=int(rng.integers(margin[0], margin[1] + 1)),
            min_room=int(rng.integers(min_room[0], min_room[1] + 1)),
        )
        floors.append(generate_synthetic_floor(seed * 1_000_003 + i, params))
    return floors


# ---------------------------------------------------------------------------
# on-disk layout: one directory per floor plus a dataset manifest


def save_floor(floor: SyntheticFloor, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    floor.density.save(directory / "density.dgrid")
    doc = {
        "floor_id": floor.floor_id,
        "seed": floor.seed,
        "extent": list(floor.params.extent),
        "params": asdict(floor.params),
        "walls": [
            {"x0": w.x0, "y0": w.y0, "x1": w.x1, "y1": w.y1, "thickness": w.thickness}
            for w in floor.walls
        ],
    }
    with open(directory / "floor.json", "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_floor(directory) -> SyntheticFloor:
    directory = Path(directory)
    with open(directory / "floor.json") as f:
        doc = json.load(f)
    p = doc.get("params", {})
    for key in ("extent", "exterior_thickness", "interior_thickness"):
        if key in p:
            p[key] = tuple(p[key])
    params = FloorParams(**p) if p else FloorParams()
    walls = [
        WallSegment(
            d["x0"], d["y0"], d["x1"], d["y1"],
            thickness=d.get("thickness"),
        )
        for d in doc["walls"]
    ]
    return SyntheticFloor(
        floor_id=doc["floor_id"],
        walls=walls,
        density=DensityImage.load(directory / "density.dgrid"),
        seed=int(doc.get("seed", -1)),
        params=params,
    )


def write_manifest(root, floor_ids: list[str], splits: dict[str, list[str]]):
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "manifest.json", "w") as f:
        json.dump({"floors": floor_ids, "splits": splits}, f, indent=2)
        f.write("\n")


def load_manifest(root) -> dict:
    with open(Path(root) / "manifest.json") as f:
        return json.load(f)


def split_floor_ids(floor_ids: list[str], seed: int,
                    fractions=(0.7, 0.15, 0.15)) -> dict[str, list[str]]:
    rng = np.random.default_rng(seed)
    ids = list(floor_ids)
    rng.shuffle(ids)
    n = len(ids)
    n_train = max(1, int(round(fractions[0] * n)))
    n_val = max(1, int(round(fractions[1] * n))) if n > 2 else 0
    train = sorted(ids[:n_train])
    val = sorted(ids[n_train : n_train + n_val])
    test = sorted(ids[n_train + n_val :])
    return {"train": train, "val": val, "test": test}


def load_floors(root, split: Optional[str] = None) -> list[SyntheticFloor]:
    root = Path(root)
    manifest = load_manifest(root)
    ids = manifest["floors"] if split is None else manifest["splits"][split]
    return [load_floor(root / fid) for fid in ids]
