"""Candidate wall enumeration: corners, edges, and thickness.

Corner detection comes in two flavors: an oracle (ground-truth corners with
optional jitter/drop, for controlled experiments) and a small convolutional
peak scorer run through the tile/merge/NMS pipeline. Edges are scored by an
MLP over image features pooled from N linearly interpolated reference points
along the edge (N=1 degenerates to the classic single midpoint sample), with
a second head classifying wall thickness into 1..84 inch classes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import autodiff as ad
from .augment import AugmentMode, AugmentOptions, normalize_and_augment
from .autodiff import Tensor
from .geometry import (
    WallSegment,
    endpoint_pairing_distance,
    point_segment_distance,
)
from .raster import DensityImage, merge_heatmaps, nms, tile_windows
from .synthetic import SyntheticFloor

THICKNESS_CLASSES = 84


@dataclass
class CornerOracle:
    """Ground-truth corners, optionally jittered and dropped."""

    corners: list[tuple[float, float]]
    jitter_sigma: float = 0.0
    drop_rate: float = 0.0
    seed: int = 0


class CornerScorer(ad.Module):
    """Per-pixel corner likelihood from a small conv stack."""

    def __init__(self, rng: np.random.Generator, channels: int = 8):
        super().__init__()
        self.conv1 = ad.Conv2d(3, channels, 5, rng)
        self.conv2 = ad.Conv2d(channels, channels, 3, rng)
        self.conv3 = ad.Conv2d(channels, 1, 3, rng)

    def logits(self, x: Tensor) -> Tensor:
        h = ad.relu(self.conv1(x))
        h = ad.relu(self.conv2(h))
        return self.conv3(h)

    def forward(self, x: Tensor) -> Tensor:
        out = ad.sigmoid(self.logits(x))
        return ad.reshape(out, out.shape[1:])


CornerDetector = Union[CornerOracle, CornerScorer]


def detect_corners(
    img: DensityImage,
    det: CornerDetector,
    window: int = 256,
    overlap: int = 64,
    radius: int = 5,
    min_score: float = 0.1,
) -> list[tuple[float, float]]:
    if isinstance(det, CornerOracle):
        rng = np.random.default_rng(det.seed)
        out = []
        for cx, cy in det.corners:
            if det.drop_rate > 0 and rng.random() < det.drop_rate:
                continue
            if det.jitter_sigma > 0:
                cx += rng.normal(0.0, det.jitter_sigma)
                cy += rng.normal(0.0, det.jitter_sigma)
            out.append((cx, cy))
        return out

    det.eval()
    tiles = []
    with ad.no_grad():
        for tile, off in tile_windows(img.data, window=window, overlap=overlap):
            heat = det(Tensor(tile)).numpy()
            tiles.append((heat, off))
    merged = merge_heatmaps(tiles, (img.width, img.height))
    return [(float(x), float(y)) for x, y in nms(merged, radius=radius, min_score=min_score)]


# ---------------------------------------------------------------------------
# edge classification


def edge_reference_points(edge: WallSegment, n: int) -> np.ndarray:
    """n points at parameters i/(n+1) along the edge; n=1 is the midpoint."""
    if n < 1:
        raise ValueError(f"need at least one reference point, got {n}")
    ts = np.arange(1, n + 1) / (n + 1.0)
    return np.stack(
        [edge.x0 + ts * (edge.x1 - edge.x0), edge.y0 + ts * (edge.y1 - edge.y0)],
        axis=1,
    )


def pool_edge_features(featmap: Tensor, edge: WallSegment, n: int,
                       coord_scale: float = 1.0) -> Tensor:
    """Bilinear-sample n interpolated points and max-pool channelwise.

    coord_scale converts wall pixels to feature-map indices when the
    extractor strides (index = (pixel - 0.5) / stride).
    """
    pts = (edge_reference_points(edge, n) - 0.5) / coord_scale
    samples = ad.grid_sample(featmap, pts)  # (n, C)
    return ad.max_(samples, axis=0)


@dataclass(frozen=True)
class EdgeClassifierConfig:
    n_ref_points: int = 16
    feat_channels: int = 16
    hidden: int = 64
    extractor: str = "conv"  # "conv" | "identity"
    seed: int = 0


class EdgeClassifier(ad.Module):
    """Feature extractor + edge probability head + thickness head."""

    def __init__(self, cfg: EdgeClassifierConfig = EdgeClassifierConfig()):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        if cfg.extractor == "conv":
            c = cfg.feat_channels
            # receptive field 17 px: wide enough to read the thickest walls
            self.conv1 = ad.Conv2d(3, c, 5, rng, stride=2)
            self.conv2 = ad.Conv2d(c, c, 3, rng)
            self.conv3 = ad.Conv2d(c, c, 3, rng)
            self.conv4 = ad.Conv2d(c, c, 3, rng)
            self.coord_scale = 2.0
            feat_dim = c
        elif cfg.extractor == "identity":
            self.coord_scale = 1.0
            feat_dim = 3
        else:
            raise ValueError(f"unknown extractor {cfg.extractor!r}")
        self.edge_head = ad.MLP([feat_dim, cfg.hidden, 1], rng)
        self.thickness_head = ad.MLP([feat_dim, cfg.hidden, THICKNESS_CLASSES], rng)

    def features(self, img: Union[DensityImage, np.ndarray]) -> Tensor:
        data = img.data if isinstance(img, DensityImage) else np.asarray(img)
        x = Tensor(data)
        if self.cfg.extractor == "identity":
            return x
        h = ad.relu(self.conv1(x))
        h = ad.relu(self.conv2(h))
        h = ad.relu(self.conv3(h))
        return ad.relu(self.conv4(h))

    def pool_many(self, featmap: Tensor, edges: Sequence[WallSegment],
                  n: Optional[int] = None) -> Tensor:
        n = self.cfg.n_ref_points if n is None else n
        pts = np.concatenate([
            (edge_reference_points(e, n) - 0.5) / self.coord_scale for e in edges
        ])
        samples = ad.grid_sample(featmap, pts)
        samples = ad.reshape(samples, (len(edges), n, samples.shape[1]))
        return ad.max_(samples, axis=1)

    def edge_logits(self, pooled: Tensor) -> Tensor:
        out = self.edge_head(pooled)
        return ad.reshape(out, (out.shape[0],))

    def thickness_logits(self, pooled: Tensor) -> Tensor:
        return self.thickness_head(pooled)


@dataclass
class CandidateWall:
    wall: WallSegment
    prob: float

    def to_dict(self) -> dict:
        return {
            "x0": self.wall.x0,
            "y0": self.wall.y0,
            "x1": self.wall.x1,
            "y1": self.wall.y1,
            "thickness": self.wall.thickness,
            "prob": self.prob,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CandidateWall":
        th = d.get("thickness")
        return cls(
            wall=WallSegment(
                d["x0"], d["y0"], d["x1"], d["y1"],
                thickness=int(th) if th is not None else None,
            ),
            prob=float(d.get("prob", 0.5)),
        )


def predicted_wall_pool(
    floor: SyntheticFloor,
    clf: "EdgeClassifier",
    detector: Optional[CornerDetector] = None,
    prob_threshold: float = 0.5,
) -> list[WallSegment]:
    """Raw positive predictions for a floor, with no post-processing, as the
    candidate pool for ordering evaluation on predicted walls."""
    det = detector if detector is not None else CornerOracle(corners=floor.corners)
    corners = detect_corners(floor.density, det)
    return [c.wall for c in enumerate_and_classify(corners, floor.density, clf, prob_threshold)]


def candidates_to_json(cands: Sequence[CandidateWall]) -> str:
    return json.dumps([c.to_dict() for c in cands], indent=2)


def candidates_from_json(text: str) -> list[CandidateWall]:
    return [CandidateWall.from_dict(d) for d in json.loads(text)]


def passes_through_corner(p0, p1, corners, tol: float = 3.0) -> bool:
    """True if some third corner sits on the open segment p0-p1."""
    seg = WallSegment(p0[0], p0[1], p1[0], p1[1])
    for c in corners:
        d_end = min(math.hypot(c[0] - p0[0], c[1] - p0[1]),
                    math.hypot(c[0] - p1[0], c[1] - p1[1]))
        if d_end <= tol:
            continue
        if point_segment_distance(c[0], c[1], seg) <= tol:
            return True
    return False


def enumerate_candidate_pairs(corners, interior_filter: bool = True,
                              tol: float = 3.0) -> list[tuple[int, int]]:
    """All corner pairs, optionally dropping pairs crossing a third corner.

    Dropping pairs whose interior runs over another detected corner keeps
    the enumeration consistent with the junction-split planar graph: those
    long spans are unions of shorter walls, not walls themselves.
    """
    pairs = []
    for i in range(len(corners)):
        for j in range(i + 1, len(corners)):
            if corners[i] == corners[j]:
                continue
            if interior_filter and passes_through_corner(corners[i], corners[j], corners, tol):
                continue
            pairs.append((i, j))
    return pairs


def enumerate_and_classify(
    corners,
    img: DensityImage,
    clf: EdgeClassifier,
    prob_threshold: float = 0.5,
    interior_filter: bool = True,
) -> list[CandidateWall]:
    """Score all corner pairs; keep those at or above the probability cut.

    Returned candidates carry the argmax thickness class and are sorted by
    descending probability. Dedup against existing walls is the caller's job.
    """
    if len(corners) < 2:
        return []
    pairs = enumerate_candidate_pairs(corners, interior_filter)
    if not pairs:
        return []
    edges = [
        WallSegment(corners[i][0], corners[i][1], corners[j][0], corners[j][1])
        for i, j in pairs
    ]
    clf.eval()
    with ad.no_grad():
        feat = clf.features(img)
        pooled = clf.pool_many(feat, edges)
        probs = ad.sigmoid(clf.edge_logits(pooled)).numpy()
        thick = clf.thickness_logits(pooled).numpy().argmax(axis=1) + 1
    out = [
        CandidateWall(
            wall=WallSegment(
                e.x0, e.y0, e.x1, e.y1, thickness=int(thick[k]), timestep=0
            ),
            prob=float(probs[k]),
        )
        for k, e in enumerate(edges)
        if probs[k] >= prob_threshold
    ]
    out.sort(key=lambda c: -c.prob)
    return out


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class EdgeTrainConfig:
    steps: int = 500
    lr: float = 2e-4
    decay_at: float = 0.75  # fraction of steps after which lr drops 10x
    neg_ratio: int = 3
    seed: int = 0
    augment: bool = True
    thickness_weight: float = 1.0
    model: EdgeClassifierConfig = field(default_factory=EdgeClassifierConfig)


def sample_negative_edges(
    rng: np.random.Generator,
    corners,
    gt_walls: Sequence[WallSegment],
    count: int,
    interior_filter: bool = True,
) -> list[WallSegment]:
    """Corner pairs that are not ground-truth walls (10 px rule)."""
    pairs = enumerate_candidate_pairs(corners, interior_filter)
    negatives = []
    for i, j in pairs:
        e = WallSegment(corners[i][0], corners[i][1], corners[j][0], corners[j][1])
        if all(endpoint_pairing_distance(e, w) >= 10.0 for w in gt_walls):
            negatives.append(e)
    if len(negatives) <= count:
        return negatives
    idx = rng.choice(len(negatives), size=count, replace=False)
    return [negatives[i] for i in sorted(idx)]


def train_edge_classifier(
    floors: Sequence[SyntheticFloor],
    cfg: EdgeTrainConfig = EdgeTrainConfig(),
    log_every: int = 0,
) -> EdgeClassifier:
    """Jointly train edge probability and thickness heads on synthetic floors.

    Positives are the junction-split ground-truth walls; negatives are
    sampled non-wall corner pairs at cfg.neg_ratio per positive. Thickness
    uses cross-entropy with an ignore mask for unlabeled walls.
    """
    if not any(f.walls for f in floors):
        raise ValueError("training set has no positive edges")
    rng = np.random.default_rng(cfg.seed)
    clf = EdgeClassifier(cfg.model)
    clf.train()
    opt = ad.Adam(clf.parameters(), lr=cfg.lr)
    decay_step = int(cfg.steps * cfg.decay_at)

    for step in range(cfg.steps):
        floor = floors[int(rng.integers(len(floors)))]
        opts = AugmentOptions(identity=not cfg.augment)
        fl, _ = normalize_and_augment(floor, AugmentMode.EDGE, rng=rng, options=opts)
        corners = fl.corners
        pos = list(fl.walls)
        neg = sample_negative_edges(rng, corners, pos, cfg.neg_ratio * len(pos))
        edges = pos + neg
        labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])

        feat = clf.features(fl.density)
        pooled = clf.pool_many(feat, edges)
        loss = ad.bce_with_logits(clf.edge_logits(pooled), labels)

        th_labels = np.array([(w.thickness or 0) - 1 for w in pos], dtype=np.int64)
        th_mask = np.array([w.thickness is not None for w in pos])
        pos_pooled = ad.slice_(pooled, (slice(0, len(pos)),))
        th_loss = ad.cross_entropy(clf.thickness_logits(pos_pooled), th_labels, th_mask)
        total = ad.add(loss, ad.scale(th_loss, cfg.thickness_weight))

        opt.zero_grad()
        total.backward()
        opt.step()
        if step == decay_step:
            opt.lr *= 0.1
        if log_every and step % log_every == 0:
            print(f"edge step {step}: loss {total.item():.4f}")
    clf.eval()
    return clf


@dataclass(frozen=True)
class CornerTrainConfig:
    steps: int = 300
    lr: float = 2e-4
    seed: int = 0
    blob_sigma: float = 2.0
    positive_weight: float = 8.0
    channels: int = 8
    augment: bool = True


def corner_target(extent: tuple[int, int], corners, sigma: float) -> np.ndarray:
    w, h = extent
    target = np.zeros((h, w))
    yy, xx = np.mgrid[0:h, 0:w]
    for cx, cy in corners:
        blob = np.exp(-(((xx + 0.5) - cx) ** 2 + ((yy + 0.5) - cy) ** 2) / (2 * sigma**2))
        np.maximum(target, blob, out=target)
    return target


def train_corner_scorer(
    floors: Sequence[SyntheticFloor],
    cfg: CornerTrainConfig = CornerTrainConfig(),
    log_every: int = 0,
) -> CornerScorer:
    """Fit the conv peak scorer to Gaussian blobs at ground-truth corners."""
    rng = np.random.default_rng(cfg.seed)
    scorer = CornerScorer(rng, channels=cfg.channels)
    scorer.train()
    opt = ad.Adam(scorer.parameters(), lr=cfg.lr)
    for step in range(cfg.steps):
        floor = floors[int(rng.integers(len(floors)))]
        opts = AugmentOptions(identity=not cfg.augment)
        fl, _ = normalize_and_augment(floor, AugmentMode.CORNER, rng=rng, options=opts)
        target = corner_target((fl.density.width, fl.density.height), fl.corners, cfg.blob_sigma)
        weights = 1.0 + cfg.positive_weight * target
        heat = scorer(Tensor(fl.density.data))
        diff = ad.add(heat, Tensor(-target))
        loss = ad.mean(ad.mul(ad.mul(diff, diff), Tensor(weights)))
        opt.zero_grad()
        loss.backward()
        opt.step()
        if log_every and step % log_every == 0:
            print(f"corner step {step}: loss {loss.item():.5f}")
    scorer.eval()
    return scorer
