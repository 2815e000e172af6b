"""Point cloud to density image, sliding-window tiling, and corner NMS.

The density image is a 3-channel top-down raster at 1 inch per pixel: each
channel counts points inside one horizontal height band, then normalizes by
the channel maximum.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import maximum_filter

FEET_TO_INCHES = 12.0

# Horizontal slice heights in feet; band c is (lo, hi] above the ground plane.
HEIGHT_BANDS_FEET = ((0.0, 6.56), (6.56, 8.2), (8.2, 12.0))

GRID_MAGIC = b"DNSGRID1"


@dataclass
class DensityImage:
    """Normalized 3-plane density raster, planes indexed [channel, row, col]."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[0] != 3:
            raise ValueError(f"density image must be (3, H, W), got {self.data.shape}")

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    def save(self, path):
        save_density_grid(path, self.data)

    @classmethod
    def load(cls, path) -> "DensityImage":
        return cls(load_density_grid(path))

    def save_png_planes(self, directory, stem: str = "density"):
        """Write each channel as an 8-bit grayscale PNG for the UI."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for c in range(self.data.shape[0]):
            img = Image.fromarray(
                np.clip(self.data[c] * 255.0, 0, 255).astype(np.uint8), mode="L"
            )
            p = directory / f"{stem}_c{c}.png"
            img.save(p)
            paths.append(p)
        return paths

    @classmethod
    def from_png_planes(cls, paths) -> "DensityImage":
        planes = [np.asarray(Image.open(p), dtype=np.float32) / 255.0 for p in paths]
        return cls(np.stack(planes, axis=0))


def save_density_grid(path, data: np.ndarray):
    data = np.asarray(data, dtype="<f4")
    if data.ndim != 3:
        raise ValueError(f"grid must be (C, H, W), got {data.shape}")
    c, h, w = data.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(GRID_MAGIC)
        f.write(struct.pack("<III", w, h, c))
        f.write(np.ascontiguousarray(data).tobytes())


def load_density_grid(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != GRID_MAGIC:
            raise ValueError(f"bad density grid magic {magic!r} in {path}")
        w, h, c = struct.unpack("<III", f.read(12))
        data = np.frombuffer(f.read(4 * c * h * w), dtype="<f4").reshape(c, h, w)
    return data.copy()


def rasterize_density(
    points,
    origin=(0.0, 0.0, 0.0),
    resolution: float = 1.0,
    extent: tuple[int, int] | None = None,
    normalize: bool = True,
) -> DensityImage:
    """Accumulate (x, y, z)-in-feet points into per-band cell counts.

    resolution is inches per pixel; extent is (width, height) in pixels. With
    no extent the image is sized to fit the in-band points (1x1 minimum).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    ox, oy, oz = origin
    if pts.size:
        px = (pts[:, 0] - ox) * FEET_TO_INCHES / resolution
        py = (pts[:, 1] - oy) * FEET_TO_INCHES / resolution
        pz = pts[:, 2] - oz
    else:
        px = py = pz = np.zeros(0)

    band = np.full(len(pts), -1, dtype=np.int64)
    for c, (lo, hi) in enumerate(HEIGHT_BANDS_FEET):
        band[(pz > lo) & (pz <= hi)] = c
    keep = band >= 0

    if extent is None:
        if keep.any():
            w = int(np.floor(px[keep].max())) + 1
            h = int(np.floor(py[keep].max())) + 1
        else:
            w = h = 1
    else:
        w, h = extent

    counts = np.zeros((3, h, w), dtype=np.float64)
    cx = np.floor(px).astype(np.int64)
    cy = np.floor(py).astype(np.int64)
    keep &= (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
    np.add.at(counts, (band[keep], cy[keep], cx[keep]), 1.0)

    if normalize:
        for c in range(3):
            peak = counts[c].max()
            if peak > 0:
                counts[c] /= peak
    return DensityImage(counts.astype(np.float32))


def tile_windows(img, window: int = 256, overlap: int = 64):
    """Cover an image with fixed-size windows; stride = window - overlap.

    Edge tiles shift inward so every tile is full size; when the image is
    smaller than the window along an axis, a single zero-padded tile covers
    that axis. Works on (H, W) and (C, H, W) arrays and on DensityImage.
    Returns a list of (tile, (ox, oy)) pairs.
    """
    if window <= overlap:
        raise ValueError(f"window {window} must exceed overlap {overlap}")
    arr = img.data if isinstance(img, DensityImage) else np.asarray(img)
    h, w = arr.shape[-2], arr.shape[-1]
    stride = window - overlap

    def offsets(dim):
        if dim <= window:
            return [0]
        offs = list(range(0, dim - window, stride))
        offs.append(dim - window)
        return sorted(set(offs))

    tiles = []
    for oy in offsets(h):
        for ox in offsets(w):
            tile = arr[..., oy : oy + window, ox : ox + window]
            if tile.shape[-2] < window or tile.shape[-1] < window:
                pad = [(0, 0)] * (arr.ndim - 2) + [
                    (0, window - tile.shape[-2]),
                    (0, window - tile.shape[-1]),
                ]
                tile = np.pad(tile, pad)
            tiles.append((tile.copy(), (ox, oy)))
    return tiles


def merge_heatmaps(tiles, extent: tuple[int, int]) -> np.ndarray:
    """Paste tile heatmaps onto a canvas, keeping the maximum at overlaps."""
    w, h = extent
    canvas = np.zeros((h, w), dtype=np.float64)
    for heat, (ox, oy) in tiles:
        heat = np.asarray(heat)
        th = min(heat.shape[0], h - oy)
        tw = min(heat.shape[1], w - ox)
        if th <= 0 or tw <= 0:
            continue
        region = canvas[oy : oy + th, ox : ox + tw]
        np.maximum(region, heat[:th, :tw], out=region)
    return canvas


def nms(heat: np.ndarray, radius: int = 5, min_score: float = 0.1) -> list[tuple[int, int]]:
    """Keep pixels that win their Chebyshev neighborhood of the given radius.

    Equal-score ties go to the smallest (row, col). Returns (x, y) points
    sorted by descending score, then (y, x).
    """
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    heat = np.asarray(heat, dtype=np.float64)
    h, w = heat.shape
    size = 2 * radius + 1
    local_max = maximum_filter(heat, size=size, mode="constant", cval=-np.inf)
    cand = np.argwhere((heat >= min_score) & (heat == local_max))
    keep = []
    for y, x in cand:
        s = heat[y, x]
        y0, y1 = max(0, y - radius), min(h, y + radius + 1)
        x0, x1 = max(0, x - radius), min(w, x + radius + 1)
        block = heat[y0:y1, x0:x1]
        ties = np.argwhere(block == s)
        first = ties[np.lexsort((ties[:, 1], ties[:, 0]))][0]
        if (y0 + first[0], x0 + first[1]) == (y, x):
            keep.append((int(x), int(y), float(s)))
    keep.sort(key=lambda p: (-p[2], p[1], p[0]))
    return [(x, y) for x, y, _ in keep]
