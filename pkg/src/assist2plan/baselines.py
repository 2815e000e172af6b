"""Ordering baselines: nearest-distance heuristic and a sequence classifier.

The heuristic picks the candidate closest to the last edit, breaking exact
distance ties uniformly at random. The classifier reuses the wall-set
transformer with an extra classification token and scores how plausible
history+candidate looks as a prefix of a real modeling sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .geometry import WallSegment, segment_distance
from .nextwall import (
    NextWallConfig,
    SequenceState,
    WallSetEncoder,
    assign_timesteps,
)
from .synthetic import SyntheticFloor


def heuristic_next(state: SequenceState, seed: int = 0) -> int:
    """Index of the candidate nearest to the last wall; exact ties are
    resolved uniformly at random with the given seed."""
    if not state.history or not state.candidates:
        raise ValueError("heuristic needs a nonempty history and candidates")
    last = state.history[-1]
    dists = np.array([segment_distance(last, c) for c in state.candidates])
    best = dists.min()
    ties = np.flatnonzero(dists == best)
    if len(ties) == 1:
        return int(ties[0])
    rng = np.random.default_rng(seed)
    return int(rng.choice(ties))


# ---------------------------------------------------------------------------
# classifier baseline


class ClassifierModel(ad.Module):
    """Wall-set encoder plus a classification token and a binary head."""

    def __init__(self, cfg: NextWallConfig = NextWallConfig()):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.encoder = WallSetEncoder(cfg, rng)
        self.cls_token = ad.Embedding(1, cfg.input_dim, rng)
        self.head = ad.Linear(cfg.model_dim, 1, rng)

    def logit(self, walls: Sequence[WallSegment]) -> Tensor:
        token = self.cls_token(np.zeros(1, dtype=np.int64))
        out = self.encoder(walls, prepend=token)
        return ad.reshape(self.head(out[0:1, :]), (1,))

    def logits_batch(self, walls_batch: Sequence[Sequence[WallSegment]]) -> Tensor:
        b = len(walls_batch)
        x = self.encoder.node_inputs_batch(walls_batch)
        token = self.cls_token(np.zeros((b, 1), dtype=np.int64))
        out = self.encoder.encode(ad.concat([token, x], axis=1))
        return ad.reshape(self.head(out[:, 0, :]), (b,))

    def probability(self, walls: Sequence[WallSegment]) -> float:
        self.eval()
        with ad.no_grad():
            return float(ad.sigmoid(self.logit(walls)).numpy()[0])


def classifier_next(state: SequenceState, model: ClassifierModel) -> int:
    """Score history+candidate per candidate; argmax, ties by list order."""
    if not state.candidates:
        raise ValueError("no candidates to choose from")
    probs = []
    for cand in state.candidates:
        seq = assign_timesteps([w for w in state.history] + [cand]).history
        probs.append(model.probability(seq))
    return int(np.argmax(probs))


def build_classifier_dataset(
    sequences: Sequence[Sequence[WallSegment]],
) -> list[tuple[list[WallSegment], int]]:
    """Prefix positives and future-substitution negatives, class-balanced.

    Every prefix (length >= 2) of a ground-truth sequence is a positive.
    Each prefix also yields one negative per future wall, with the prefix's
    last wall replaced by that future wall. Positives are then replicated
    (cycling) until the counts match; they are never dropped, so a tiny
    sequence can keep more positives than negatives.
    """
    positives: list[list[WallSegment]] = []
    negatives: list[list[WallSegment]] = []
    for seq in sequences:
        seq = list(seq)
        t = len(seq)
        for length in range(2, t + 1):
            positives.append(seq[:length])
            for j in range(length, t):
                negatives.append(seq[: length - 1] + [seq[j]])
    if not positives:
        return []
    out = [(p, 1) for p in positives]
    extra = len(negatives) - len(positives)
    for i in range(max(0, extra)):
        out.append((positives[i % len(positives)], 1))
    out.extend((n, 0) for n in negatives)
    return out


@dataclass(frozen=True)
class ClassifierTrainConfig:
    steps: int = 1500
    batch: int = 8
    lr: float = 2e-4
    decay_at: float = 0.75
    augment: bool = True
    seed: int = 0
    model: NextWallConfig = field(default_factory=NextWallConfig)


def _rotate_walls(walls: Sequence[WallSegment], angle: float) -> list[WallSegment]:
    c, s = math.cos(angle), math.sin(angle)
    out = []
    for w in walls:
        out.append(
            w.with_coords(
                c * w.x0 - s * w.y0, s * w.x0 + c * w.y0,
                c * w.x1 - s * w.y1, s * w.x1 + c * w.y1,
            )
        )
    return out


def train_classifier(
    floors: Sequence[SyntheticFloor],
    cfg: ClassifierTrainConfig = ClassifierTrainConfig(),
    log_every: int = 0,
) -> ClassifierModel:
    """Binary cross-entropy over the balanced prefix dataset.

    Steps batch examples of equal sequence length so the whole batch runs
    through the encoder as one graph.
    """
    dataset = build_classifier_dataset([f.walls for f in floors if len(f.walls) >= 2])
    if not dataset:
        raise ValueError("no training sequences of length >= 2")
    buckets: dict[int, list[tuple[list[WallSegment], int]]] = {}
    for walls, label in dataset:
        buckets.setdefault(len(walls), []).append((walls, label))
    lengths = sorted(buckets)
    weights = np.array([len(buckets[n]) for n in lengths], dtype=np.float64)
    weights /= weights.sum()

    rng = np.random.default_rng(cfg.seed)
    model = ClassifierModel(cfg.model)
    model.train()
    opt = ad.Adam(model.parameters(), lr=cfg.lr)
    decay_step = int(cfg.steps * cfg.decay_at)
    for step in range(cfg.steps):
        bucket = buckets[lengths[int(rng.choice(len(lengths), p=weights))]]
        batch_walls = []
        labels = []
        for _ in range(cfg.batch):
            walls, label = bucket[int(rng.integers(len(bucket)))]
            if cfg.augment:
                walls = _rotate_walls(walls, float(rng.uniform(0.0, 2 * math.pi)))
            batch_walls.append(assign_timesteps(walls).history)
            labels.append(float(label))
        logits = model.logits_batch(batch_walls)
        loss = ad.bce_with_logits(logits, np.array(labels))
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step == decay_step:
            opt.lr *= 0.1
        if log_every and step % log_every == 0:
            print(f"classifier step {step}: loss {loss.item():.4f}")
    model.eval()
    return model
