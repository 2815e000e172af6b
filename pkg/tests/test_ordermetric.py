"""Gaussian summaries, the diagonal Fréchet distance, TCN encoding
contracts, and the evaluation protocol's self-consistency."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from assist2plan.geometry import WallSegment
from assist2plan.ordermetric import (
    GaussianSummary,
    TcnConfig,
    TcnModel,
    encode_sequence,
    encode_sequences,
    evaluate_order,
    fit_gaussian,
    flatten_sequence,
    frechet_distance,
    gt_replay_generator,
    order_scores_to_csv,
    random_order_generator,
    train_tcn,
)
from assist2plan.synthetic import generate_floor_set


def seg(x0, y0, x1, y1):
    return WallSegment(x0, y0, x1, y1)


def tiny_tcn(seed=0):
    return TcnModel(TcnConfig(levels=4, hidden=4, kernel=3, latent_level=3, seed=seed))


class TestFitGaussian:
    def test_identical_encodings_zero_variance(self):
        enc = np.tile([1.5, -2.0, 0.25], (5, 1))
        g = fit_gaussian(enc)
        assert np.allclose(g.mean, [1.5, -2.0, 0.25])
        assert np.allclose(g.var, 0.0)

    def test_two_point_hand_case(self):
        g = fit_gaussian(np.array([[0.0], [2.0]]))
        assert g.mean[0] == 1.0
        assert g.var[0] == 1.0  # population variance

    def test_matches_two_pass_reference(self):
        rng = np.random.default_rng(0)
        enc = rng.normal(size=(40, 7))
        g = fit_gaussian(enc)
        mean_ref = enc.sum(axis=0) / len(enc)
        var_ref = ((enc - mean_ref) ** 2).sum(axis=0) / len(enc)
        assert np.abs(g.mean - mean_ref).max() < 1e-9
        assert np.abs(g.var - var_ref).max() < 1e-9

    def test_single_encoding_rejected(self):
        with pytest.raises(ValueError):
            fit_gaussian(np.ones((1, 4)))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=1000))
    def test_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        enc = rng.normal(size=(10, 5))
        g1 = fit_gaussian(enc)
        g2 = fit_gaussian(enc[rng.permutation(10)])
        assert np.allclose(g1.mean, g2.mean) and np.allclose(g1.var, g2.var)


class TestFrechetDistance:
    def test_self_distance_zero(self):
        g = GaussianSummary(np.array([1.0, 2.0]), np.array([0.5, 3.0]))
        assert frechet_distance(g, g) == 0.0

    def test_mean_shift_closed_form(self):
        d, delta = 6, 0.75
        a = GaussianSummary(np.zeros(d), np.ones(d))
        b = GaussianSummary(np.full(d, delta), np.ones(d))
        assert frechet_distance(a, b) == pytest.approx(d * delta**2)

    def test_hand_case(self):
        a = GaussianSummary(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
        b = GaussianSummary(np.array([1.0, 0.0]), np.array([4.0, 1.0]))
        # (mu) 1 + (sigma: sqrt(4)-sqrt(1))^2 = 1 -> total 2
        assert frechet_distance(a, b) == pytest.approx(2.0)

    def test_dimension_mismatch(self):
        a = GaussianSummary(np.zeros(3), np.ones(3))
        b = GaussianSummary(np.zeros(4), np.ones(4))
        with pytest.raises(ValueError):
            frechet_distance(a, b)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_symmetric_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        a = GaussianSummary(rng.normal(size=4), rng.random(4))
        b = GaussianSummary(rng.normal(size=4), rng.random(4))
        ab = frechet_distance(a, b)
        assert ab >= 0.0
        assert ab == pytest.approx(frechet_distance(b, a))

    def test_zero_iff_equal(self):
        rng = np.random.default_rng(1)
        a = GaussianSummary(rng.normal(size=4), rng.random(4))
        b = GaussianSummary(a.mean + 1e-3, a.var)
        assert frechet_distance(a, b) > 0.0


class TestFlattenSequence:
    def test_ten_walls_forty_values(self):
        walls = [seg(i, 0, i + 5, 0) for i in range(10)]
        assert flatten_sequence(walls, 10).shape == (40,)

    def test_padding_fills_zeros(self):
        walls = [seg(0, 0, 5, 0), seg(5, 0, 5, 5)]
        flat = flatten_sequence(walls, 10)
        assert flat[8:].sum() == 0.0

    def test_translation_invariant(self):
        walls = [seg(0, 0, 5, 0), seg(5, 0, 5, 5), seg(5, 5, 0, 5)]
        moved = [seg(w.x0 + 37, w.y0 - 11, w.x1 + 37, w.y1 - 11) for w in walls]
        assert np.allclose(flatten_sequence(walls, 10), flatten_sequence(moved, 10))

    def test_short_sequence_rejected(self):
        with pytest.raises(ValueError):
            flatten_sequence([seg(0, 0, 1, 0)], 10)


class TestTcnModel:
    def test_reconstruction_length_matches_input(self):
        m = tiny_tcn()
        import assist2plan.autodiff as ad
        from assist2plan.autodiff import Tensor

        x = Tensor(np.random.default_rng(0).normal(size=(2, 1, 40)))
        with ad.no_grad():
            recon, latent = m(x)
        assert recon.shape == (2, 1, 40)
        assert latent.shape == (2, 4, 40)

    def test_encode_deterministic(self):
        m = tiny_tcn()
        walls = [seg(0, 0, 5, 0), seg(5, 0, 5, 5), seg(5, 5, 0, 5)]
        a = encode_sequence(m, walls)
        b = encode_sequence(m, walls)
        assert np.array_equal(a, b)

    def test_encoding_dim_constant_across_lengths(self):
        m = tiny_tcn()
        short = [seg(0, 0, 5, 0), seg(5, 0, 5, 5)]
        long = [seg(i, 0, i + 3, 0) for i in range(10)]
        assert encode_sequence(m, short).shape == encode_sequence(m, long).shape

    def test_order_sensitivity(self):
        m = tiny_tcn()
        walls = [seg(0, 0, 5, 0), seg(5, 0, 5, 5), seg(5, 5, 0, 5), seg(0, 5, 0, 0)]
        fwd = encode_sequence(m, walls)
        rev = encode_sequence(m, walls[::-1])
        assert not np.allclose(fwd, rev)

    def test_batch_encode_matches_single(self):
        m = tiny_tcn()
        seqs = [
            [seg(0, 0, 5, 0), seg(5, 0, 5, 5)],
            [seg(0, 0, 0, 7), seg(0, 7, 7, 7), seg(7, 7, 7, 0)],
        ]
        batch = encode_sequences(m, seqs)
        singles = np.stack([encode_sequence(m, s) for s in seqs])
        assert np.allclose(batch, singles)

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            encode_sequence(tiny_tcn(), [seg(0, 0, 1, 0)])


class TestTrainTcn:
    def test_loss_drops_and_deterministic(self):
        floors = generate_floor_set(3, seed=7)
        cfg = TcnConfig(levels=4, hidden=4, kernel=3, latent_level=3,
                        batch=8, iterations=60, seed=0)
        m1 = train_tcn(floors, cfg)
        m2 = train_tcn(floors, cfg)
        for k, v in m1.state_dict().items():
            assert np.array_equal(v, m2.state_dict()[k])

    def test_needs_usable_floors(self):
        with pytest.raises(ValueError):
            train_tcn([], TcnConfig(iterations=1))


class TestEvaluateOrder:
    def test_identical_sets_score_zero(self):
        m = tiny_tcn()
        floors = generate_floor_set(3, seed=5)
        seqs = [list(f.walls[:6]) for f in floors]
        enc = encode_sequences(m, seqs)
        assert frechet_distance(fit_gaussian(enc), fit_gaussian(enc)) == 0.0

    def test_gt_replay_beats_shuffle_even_untrained(self):
        # an untrained TCN already separates smooth GT runs from shuffles
        m = tiny_tcn()
        floors = generate_floor_set(8, seed=6)
        res = evaluate_order(
            {"gt": gt_replay_generator, "random": random_order_generator},
            floors, m, lengths=(5,), starts_per_floor=3, seed=0,
        )
        assert res["gt"][5] < res["random"][5]

    def test_csv_shape(self):
        res = {"a": {1: 0.5, 2: 0.25}, "b": {1: 1.0}}
        csv = order_scores_to_csv(res)
        lines = csv.strip().splitlines()
        assert lines[0] == "length,method,score"
        assert len(lines) == 4
