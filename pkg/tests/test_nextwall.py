"""Timestep assignment, embedding contracts, triplet loss arithmetic, and
rollout behavior (trained-model quality lives in the acceptance suite)."""

import numpy as np
import pytest

import assist2plan.autodiff as ad
from assist2plan.autodiff import Tensor
from assist2plan.geometry import WallSegment
from assist2plan.nextwall import (
    NextWallConfig,
    NextWallModel,
    assign_timesteps,
    rollout,
    score_candidates,
    top_k_alternatives,
    triplet_loss,
)


def seg(x0, y0, x1, y1, **kw):
    return WallSegment(x0, y0, x1, y1, **kw)


def tiny_model(seed=0, dropout=0.0):
    return NextWallModel(
        NextWallConfig(blocks=2, heads=4, ff_dim=64, dropout=dropout, seed=seed)
    )


HIST = [seg(0, 0, 50, 0), seg(50, 0, 50, 40), seg(50, 40, 0, 40)]
CANDS = [seg(0, 40, 0, 0), seg(20, 0, 20, 40), seg(0, 20, 50, 20)]


class TestAssignTimesteps:
    def test_reverse_chronological(self):
        state = assign_timesteps(HIST, CANDS)
        assert [w.timestep for w in state.history] == [3, 2, 1]
        assert all(w.timestep == 0 for w in state.candidates)

    def test_clamp_at_ten(self):
        walls = [seg(0, i * 2, 10, i * 2) for i in range(15)]
        state = assign_timesteps(walls)
        assert [w.timestep for w in state.history[:6]] == [10] * 6
        assert [w.timestep for w in state.history[6:]] == [9, 8, 7, 6, 5, 4, 3, 2, 1]

    def test_empty_history(self):
        state = assign_timesteps([], CANDS)
        assert state.history == []
        assert all(w.timestep == 0 for w in state.candidates)
        assert all(w.kind.name == "CANDIDATE" for w in state.candidates)

    def test_imported_all_old(self):
        state = assign_timesteps(HIST, CANDS, imported=True)
        assert all(w.timestep == 10 for w in state.history)
        assert all(w.kind.name == "OLD" for w in state.history)

    def test_exactly_one_most_recent(self):
        state = assign_timesteps(HIST, CANDS)
        assert sum(1 for w in state.history if w.timestep == 1) == 1
        assert max(w.timestep for w in state.history) <= 10


class TestEmbedWalls:
    def test_output_shape(self):
        m = tiny_model()
        state = assign_timesteps(HIST, CANDS)
        with ad.no_grad():
            emb = m.embed_walls(state)
        assert emb.shape == (6, 256)

    def test_identical_walls_identical_embeddings(self):
        m = tiny_model()
        dup = [seg(5, 5, 30, 5), seg(5, 5, 30, 5)]
        state = assign_timesteps(HIST, dup)
        with ad.no_grad():
            emb = m.embed_walls(state).numpy()
        assert np.allclose(emb[3], emb[4], atol=1e-9)

    def test_changing_candidate_changes_its_embedding(self):
        m = tiny_model()
        s1 = assign_timesteps(HIST, CANDS)
        moved = CANDS[:-1] + [seg(0, 25, 50, 25)]
        s2 = assign_timesteps(HIST, moved)
        with ad.no_grad():
            e1 = m.embed_walls(s1).numpy()
            e2 = m.embed_walls(s2).numpy()
        assert not np.allclose(e1[-1], e2[-1])

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError):
            tiny_model().embed_walls(assign_timesteps([], []))


class TestScoreCandidates:
    def test_scores_in_cosine_range(self):
        sc = score_candidates(assign_timesteps(HIST, CANDS), tiny_model())
        assert sc.scores.shape == (3,)
        assert (np.abs(sc.scores) <= 1.0 + 1e-12).all()

    def test_single_candidate_distribution(self):
        sc = score_candidates(assign_timesteps(HIST, CANDS[:1]), tiny_model())
        assert np.allclose(sc.probs, [1.0])
        assert sc.entropy == 0.0

    def test_duplicated_candidates_uniform(self):
        k = 4
        dup = [seg(10, 10, 30, 10)] * k
        sc = score_candidates(assign_timesteps(HIST, dup), tiny_model())
        assert np.allclose(sc.probs, 1.0 / k)
        assert sc.entropy == pytest.approx(np.log2(k), abs=1e-9)

    def test_empty_candidates(self):
        sc = score_candidates(assign_timesteps(HIST, []), tiny_model())
        assert sc.scores.size == 0 and sc.entropy == 0.0

    def test_empty_history_rejected_with_guidance(self):
        with pytest.raises(ValueError, match="seed wall"):
            score_candidates(assign_timesteps([], CANDS), tiny_model())


class TestTripletLoss:
    def make(self, d_ap, d_an):
        # place unit vectors at known cosine distances from the anchor
        def at_distance(d):
            cos = 1.0 - d
            sin = np.sqrt(max(0.0, 1.0 - cos * cos))
            return np.array([cos, sin, 0.0])

        anchor = Tensor(np.array([1.0, 0.0, 0.0]))
        pos = Tensor(at_distance(d_ap))
        negs = Tensor(np.stack([at_distance(d) for d in d_an]))
        return anchor, pos, negs

    def test_well_separated_zero(self):
        a, p, n = self.make(0.0, [2.0])
        assert triplet_loss(a, p, n, margin=1.0).item() == pytest.approx(0.0, abs=1e-12)

    def test_equal_distances_cost_margin(self):
        a, p, n = self.make(0.5, [0.5])
        assert triplet_loss(a, p, n, margin=1.0).item() == pytest.approx(1.0, abs=1e-9)

    def test_arithmetic_case(self):
        a, p, n = self.make(0.3, [0.9])
        assert triplet_loss(a, p, n, margin=1.0).item() == pytest.approx(0.4, abs=1e-9)

    def test_mean_over_negatives(self):
        a, p, n = self.make(0.3, [0.9, 0.3])
        # terms: max(0, 0.3-0.9+1)=0.4 and max(0, 0.3-0.3+1)=1.0
        assert triplet_loss(a, p, n, margin=1.0).item() == pytest.approx(0.7, abs=1e-9)

    def test_zero_when_margin_satisfied_everywhere(self):
        a, p, n = self.make(0.1, [1.5, 1.8, 2.0])
        assert triplet_loss(a, p, n, margin=0.4).item() == 0.0

    def test_needs_negatives(self):
        a, p, _ = self.make(0.1, [1.0])
        with pytest.raises(ad.ShapeError):
            triplet_loss(a, p, Tensor(np.zeros((0, 3))))

    def test_gradient_flows_to_all_inputs(self):
        rng = np.random.default_rng(0)
        a = Tensor(rng.normal(size=4), requires_grad=True)
        p = Tensor(rng.normal(size=4), requires_grad=True)
        n = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        triplet_loss(a, p, n).backward()
        assert a.grad is not None and p.grad is not None and n.grad is not None


class TestRollout:
    def test_k1_is_argmax(self):
        m = tiny_model()
        state = assign_timesteps(HIST, CANDS)
        sc = score_candidates(state, m)
        picked = rollout(state, m, 1)
        assert picked[0].coords() == CANDS[int(np.argmax(sc.scores))].coords()

    def test_exhaustion_is_permutation(self):
        m = tiny_model()
        state = assign_timesteps(HIST, CANDS)
        picked = rollout(state, m, 10)
        assert sorted(w.coords() for w in picked) == sorted(w.coords() for w in CANDS)

    def test_greedy_prefix_consistency(self):
        m = tiny_model()
        state = assign_timesteps(HIST, CANDS)
        assert rollout(state, m, 2)[0].coords() == rollout(state, m, 1)[0].coords()

    def test_deterministic(self):
        m = tiny_model()
        state = assign_timesteps(HIST, CANDS)
        a = [w.coords() for w in rollout(state, m, 3)]
        b = [w.coords() for w in rollout(state, m, 3)]
        assert a == b

    def test_input_state_not_mutated(self):
        m = tiny_model()
        state = assign_timesteps(HIST, CANDS)
        rollout(state, m, 2)
        assert len(state.history) == 3 and len(state.candidates) == 3

    def test_bad_k_rejected(self):
        with pytest.raises(ValueError):
            rollout(assign_timesteps(HIST, CANDS), tiny_model(), 0)


class TestTopKAlternatives:
    def test_fewer_candidates_than_k(self):
        m = tiny_model()
        out = top_k_alternatives(assign_timesteps(HIST, CANDS[:2]), m, k=3)
        assert len(out) == 2

    def test_sorted_descending(self):
        m = tiny_model()
        out = top_k_alternatives(assign_timesteps(HIST, CANDS), m, k=3)
        scores = [s for _, s in out]
        assert scores == sorted(scores, reverse=True)

    def test_first_matches_rollout(self):
        m = tiny_model()
        state = assign_timesteps(HIST, CANDS)
        (idx, _), *_ = top_k_alternatives(state, m, k=3)
        assert CANDS[idx].coords() == rollout(state, m, 1)[0].coords()

    def test_tie_broken_by_list_order(self):
        m = tiny_model()
        dup = [seg(10, 10, 30, 10)] * 3
        out = top_k_alternatives(assign_timesteps(HIST, dup), m, k=3)
        assert [i for i, _ in out] == [0, 1, 2]


class TestDeterministicTraining:
    def test_same_seed_identical_checkpoints(self):
        from assist2plan.nextwall import NextWallTrainConfig, train_next_wall
        from assist2plan.synthetic import generate_floor_set

        floors = generate_floor_set(2, seed=3)
        cfg = NextWallTrainConfig(
            steps=6, batch=2, seed=5, augment=False,
            model=NextWallConfig(blocks=1, heads=2, ff_dim=32, dropout=0.1, seed=5),
        )
        a = train_next_wall(floors, cfg).state_dict()
        b = train_next_wall(floors, cfg).state_dict()
        for k in a:
            assert np.array_equal(a[k], b[k])
