"""Sequence-naturalness metric: TCN autoencoder latents + Fréchet distance.

A causal dilated-convolution autoencoder is trained to reconstruct flattened
wall-coordinate sequences (2 to 10 walls, zero-padded to 10). The features
after the 6th level, flattened, encode a sequence; real and generated
sequence sets are each summarized by a per-dimension Gaussian, and their
Fréchet distance scores how natural the generated orderings are (lower is
better).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .geometry import WallSegment
from .synthetic import SyntheticFloor

SEQ_COORD_SCALE = 1000.0


@dataclass(frozen=True)
class TcnConfig:
    levels: int = 8
    hidden: int = 10
    kernel: int = 7
    latent_level: int = 6
    max_walls: int = 10
    batch: int = 32
    lr: float = 5e-4
    iterations: int = 20000
    seed: int = 0

    @property
    def input_len(self) -> int:
        return 4 * self.max_walls


class TemporalBlock(ad.Module):
    def __init__(self, cin: int, cout: int, kernel: int, dilation: int,
                 rng: np.random.Generator):
        super().__init__()
        self.conv1 = ad.CausalConv1d(cin, cout, kernel, rng, dilation=dilation)
        self.conv2 = ad.CausalConv1d(cout, cout, kernel, rng, dilation=dilation)
        self.down = ad.CausalConv1d(cin, cout, 1, rng) if cin != cout else None

    def forward(self, x: Tensor) -> Tensor:
        y = ad.relu(self.conv2(ad.relu(self.conv1(x))))
        res = self.down(x) if self.down is not None else x
        return ad.relu(ad.add(y, res))


class TcnModel(ad.Module):
    """Stack of residual causal blocks with doubling dilation; the latent is
    the flattened feature map after the configured level."""

    def __init__(self, cfg: TcnConfig = TcnConfig()):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.blocks = [
            TemporalBlock(
                1 if i == 0 else cfg.hidden, cfg.hidden, cfg.kernel, 2**i, rng
            )
            for i in range(cfg.levels)
        ]
        self.head = ad.CausalConv1d(cfg.hidden, 1, 1, rng)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Returns (reconstruction, latent); input and output are (B, 1, L)."""
        h = x
        latent = None
        for i, block in enumerate(self.blocks):
            h = block(h)
            if i + 1 == self.cfg.latent_level:
                latent = h
        return self.head(h), latent


def flatten_sequence(walls: Sequence[WallSegment], max_walls: int) -> np.ndarray:
    """Coordinates relative to the first wall's midpoint, zero-padded."""
    if len(walls) < 2:
        raise ValueError(f"sequence must have at least 2 walls, got {len(walls)}")
    walls = list(walls)[:max_walls]
    cx, cy = walls[0].midpoint
    out = np.zeros(4 * max_walls)
    for i, w in enumerate(walls):
        out[4 * i : 4 * i + 4] = [
            (w.x0 - cx) / SEQ_COORD_SCALE,
            (w.y0 - cy) / SEQ_COORD_SCALE,
            (w.x1 - cx) / SEQ_COORD_SCALE,
            (w.y1 - cy) / SEQ_COORD_SCALE,
        ]
    return out


def train_tcn(
    floors: Sequence[SyntheticFloor],
    cfg: TcnConfig = TcnConfig(),
    log_every: int = 0,
) -> TcnModel:
    """Autoencode random 2-10 wall subsets under L2 reconstruction loss."""
    pools = [f.walls for f in floors if len(f.walls) >= 2]
    if not pools:
        raise ValueError("need floors with at least 2 walls")
    rng = np.random.default_rng(cfg.seed)
    model = TcnModel(cfg)
    model.train()
    opt = ad.Adam(model.parameters(), lr=cfg.lr)
    for it in range(cfg.iterations):
        batch = np.zeros((cfg.batch, 1, cfg.input_len))
        for b in range(cfg.batch):
            walls = pools[int(rng.integers(len(pools)))]
            n = int(rng.integers(2, min(cfg.max_walls, len(walls)) + 1))
            idx = rng.choice(len(walls), size=n, replace=False)
            batch[b, 0] = flatten_sequence([walls[i] for i in idx], cfg.max_walls)
        x = Tensor(batch)
        recon, _ = model(x)
        loss = ad.l2_loss(recon, x)
        opt.zero_grad()
        loss.backward()
        opt.step()
        if log_every and it % log_every == 0:
            print(f"tcn iter {it}: loss {loss.item():.6f}")
    model.eval()
    return model


def encode_sequence(model: TcnModel, walls: Sequence[WallSegment]) -> np.ndarray:
    """Flattened level-6 features of the padded sequence."""
    flat = flatten_sequence(walls, model.cfg.max_walls)
    with ad.no_grad():
        _, latent = model(Tensor(flat.reshape(1, 1, -1)))
    return latent.numpy()[0].reshape(-1)


def encode_sequences(model: TcnModel, seqs: Sequence[Sequence[WallSegment]]) -> np.ndarray:
    if not seqs:
        return np.zeros((0, model.cfg.hidden * model.cfg.input_len))
    flats = np.stack([flatten_sequence(s, model.cfg.max_walls) for s in seqs])
    with ad.no_grad():
        _, latent = model(Tensor(flats[:, None, :]))
    lat = latent.numpy()
    return lat.reshape(lat.shape[0], -1)


@dataclass(frozen=True)
class GaussianSummary:
    """Per-dimension mean and (population) variance of a set of encodings."""

    mean: np.ndarray
    var: np.ndarray


def fit_gaussian(encodings: np.ndarray) -> GaussianSummary:
    enc = np.asarray(encodings, dtype=np.float64)
    if enc.ndim != 2 or enc.shape[0] < 2:
        raise ValueError(f"need at least 2 encodings, got shape {enc.shape}")
    return GaussianSummary(mean=enc.mean(axis=0), var=enc.var(axis=0))


def frechet_distance(a: GaussianSummary, b: GaussianSummary) -> float:
    """Squared Fréchet distance between diagonal Gaussians:
    sum (mu_a - mu_b)^2 + sum (sigma_a - sigma_b)^2."""
    if a.mean.shape != b.mean.shape:
        raise ValueError(f"dimension mismatch: {a.mean.shape} vs {b.mean.shape}")
    dmu = a.mean - b.mean
    dsig = np.sqrt(np.maximum(a.var, 0.0)) - np.sqrt(np.maximum(b.var, 0.0))
    return float((dmu * dmu).sum() + (dsig * dsig).sum())


# ---------------------------------------------------------------------------
# evaluation protocol

# A candidate source maps a floor to the wall pool rollouts pick from: the
# ground-truth walls (default) or raw enumerated predictions.
CandidateSource = Callable[[SyntheticFloor], list[WallSegment]]

# A sequence generator continues an ordering: given the floor, the candidate
# pool, the index of the starting wall in that pool, the number of steps, and
# a seeded generator, it returns the start wall followed by up to `steps`
# continuation walls.
SequenceGenerator = Callable[
    [SyntheticFloor, list[WallSegment], int, int, np.random.Generator],
    list[WallSegment],
]


def gt_replay_generator(floor: SyntheticFloor, pool: list[WallSegment], start: int,
                        steps: int, rng: np.random.Generator) -> list[WallSegment]:
    """Replays the recorded ordering; only meaningful on the GT wall source."""
    return list(floor.walls[start : start + steps + 1])


def random_order_generator(floor: SyntheticFloor, pool: list[WallSegment], start: int,
                           steps: int, rng: np.random.Generator) -> list[WallSegment]:
    rest = [w for i, w in enumerate(pool) if i != start]
    idx = rng.permutation(len(rest))[:steps]
    return [pool[start]] + [rest[i] for i in idx]


def evaluate_order(
    generators: dict[str, SequenceGenerator],
    floors: Sequence[SyntheticFloor],
    model: TcnModel,
    lengths: Sequence[int] = tuple(range(1, 11)),
    starts_per_floor: int = 3,
    seed: int = 0,
    candidate_source: Optional[CandidateSource] = None,
) -> dict[str, dict[int, float]]:
    """Fréchet score per method and rollout length.

    Real encodings are the floors' contiguous ground-truth subsequences,
    length-matched to the generated ones (a rollout of N steps yields a
    sequence of N+1 walls). candidate_source swaps the pool rollouts draw
    from; the real side always stays ground truth.
    """
    pools = [
        list(candidate_source(f)) if candidate_source is not None else list(f.walls)
        for f in floors
    ]
    results: dict[str, dict[int, float]] = {name: {} for name in generators}
    for steps in lengths:
        seq_len = steps + 1
        real = [
            list(f.walls[i : i + seq_len])
            for f in floors
            for i in range(len(f.walls) - seq_len + 1)
        ]
        if len(real) < 2:
            continue
        real_fit = fit_gaussian(encode_sequences(model, real))
        for name, gen in generators.items():
            rng = np.random.default_rng(seed)
            produced = []
            for f, pool in zip(floors, pools):
                max_start = len(pool) - seq_len
                if max_start < 0:
                    continue
                starts = rng.choice(max_start + 1, size=min(starts_per_floor, max_start + 1), replace=False)
                for s in sorted(int(v) for v in starts):
                    seq = gen(f, pool, s, steps, rng)
                    if len(seq) >= 2:
                        produced.append(seq)
            if len(produced) < 2:
                continue
            gen_fit = fit_gaussian(encode_sequences(model, produced))
            results[name][steps] = frechet_distance(real_fit, gen_fit)
    return results


def order_scores_to_csv(results: dict[str, dict[int, float]]) -> str:
    lines = ["length,method,score"]
    for name in sorted(results):
        for length in sorted(results[name]):
            lines.append(f"{length},{name},{results[name][length]:.6f}")
    return "\n".join(lines) + "\n"
