"""Finite-difference gradient checks for every differentiable op, plus the
optimizer and checkpoint round trips."""

import numpy as np
import pytest

import assist2plan.autodiff as ad
from assist2plan.autodiff import Tensor

N_INSTANCES = 20
REL_TOL = 1e-4


def numeric_grad(f, x: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    out = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f()
        x[i] = old - eps
        fm = f()
        x[i] = old
        out[i] = (fp - fm) / (2 * eps)
    return out


def check_op(make_inputs, op, seed_count=N_INSTANCES):
    """Backprop a random projection of the op output; compare all input grads
    against central differences."""
    for seed in range(seed_count):
        rng = np.random.default_rng(seed)
        inputs = make_inputs(rng)
        tensors = [Tensor(v, requires_grad=True) for v in inputs]
        out = op(*tensors)
        proj = np.random.default_rng(seed + 999).normal(size=out.shape)
        loss = ad.sum_(ad.mul(out, Tensor(proj)))
        loss.backward()
        for t in tensors:
            num = numeric_grad(lambda: float((op(*tensors).data * proj).sum()), t.data)
            got = t.grad
            assert got is not None
            denom = np.maximum(np.abs(num) + np.abs(got), 1e-6)
            rel = np.abs(num - got) / denom
            assert rel.max() <= REL_TOL, f"seed {seed}: rel err {rel.max():.2e}"


class TestElementwiseGrads:
    def test_add(self):
        check_op(lambda r: (r.normal(size=(3, 4)), r.normal(size=(3, 4))), ad.add)

    def test_add_bias(self):
        check_op(lambda r: (r.normal(size=(3, 4)), r.normal(size=4)), ad.add)

    def test_mul(self):
        check_op(lambda r: (r.normal(size=(2, 5)), r.normal(size=(2, 5))), ad.mul)

    def test_scale(self):
        check_op(lambda r: (r.normal(size=(4, 3)),), lambda x: ad.scale(x, -2.5))

    def test_relu(self):
        # keep values away from the kink
        check_op(
            lambda r: (r.normal(size=(4, 4)) + 0.2 * np.sign(r.normal(size=(4, 4))),),
            ad.relu,
        )

    def test_sigmoid(self):
        check_op(lambda r: (r.normal(size=(3, 3)),), ad.sigmoid)

    def test_softmax_with_temperature(self):
        check_op(lambda r: (r.normal(size=(3, 5)),), lambda x: ad.softmax(x, temperature=0.7))


class TestStructuralGrads:
    def test_matmul(self):
        check_op(lambda r: (r.normal(size=(3, 4)), r.normal(size=(4, 2))), ad.matmul)

    def test_bmm(self):
        check_op(lambda r: (r.normal(size=(2, 3, 4)), r.normal(size=(2, 4, 5))), ad.bmm)

    def test_transpose(self):
        check_op(lambda r: (r.normal(size=(3, 5)),), ad.transpose)

    def test_permute(self):
        check_op(lambda r: (r.normal(size=(2, 3, 4)),), lambda x: ad.permute(x, (2, 0, 1)))

    def test_reshape(self):
        check_op(lambda r: (r.normal(size=(2, 6)),), lambda x: ad.reshape(x, (3, 4)))

    def test_concat(self):
        check_op(
            lambda r: (r.normal(size=(2, 3)), r.normal(size=(2, 2))),
            lambda a, b: ad.concat([a, b], axis=1),
        )

    def test_slice(self):
        check_op(
            lambda r: (r.normal(size=(4, 6)),),
            lambda x: x[1:3, 2:5],
        )

    def test_embedding(self):
        idx = np.array([0, 2, 2, 1])
        check_op(lambda r: (r.normal(size=(3, 4)),), lambda t: ad.embedding(t, idx))


class TestReductionGrads:
    def test_sum_all(self):
        check_op(lambda r: (r.normal(size=(3, 4)),), lambda x: ad.sum_(x))

    def test_sum_axis(self):
        check_op(lambda r: (r.normal(size=(3, 4)),), lambda x: ad.sum_(x, axis=0))

    def test_mean(self):
        check_op(lambda r: (r.normal(size=(2, 5)),), lambda x: ad.mean(x, axis=1))

    def test_max_axis(self):
        # distinct values keep the argmax stable under the FD probe
        def inputs(r):
            x = r.permutation(24).astype(float).reshape(2, 3, 4)
            return (x + 0.1 * r.random(size=(2, 3, 4)),)

        check_op(inputs, lambda x: ad.max_(x, axis=1))


class TestNormAndLosses:
    def test_layer_norm(self):
        check_op(
            lambda r: (r.normal(size=(8, 16)), 1 + 0.1 * r.normal(size=16), r.normal(size=16)),
            ad.layer_norm,
        )

    def test_cosine_rows(self):
        check_op(
            lambda r: (r.normal(size=(5, 8)) + 0.5, r.normal(size=8) + 0.5),
            ad.cosine_rows,
        )

    def test_cosine_vs_finite_difference_single(self):
        check_op(
            lambda r: (r.normal(size=6) + 0.3, r.normal(size=6) + 0.3),
            ad.cosine_rows,
        )

    def test_cross_entropy(self):
        t = np.array([0, 3, 1])
        check_op(
            lambda r: (r.normal(size=(3, 5)),), lambda x: ad.cross_entropy(x, t)
        )

    def test_cross_entropy_mask(self):
        t = np.array([0, 3, 1, 2])
        m = np.array([True, False, True, False])
        check_op(
            lambda r: (r.normal(size=(4, 5)),), lambda x: ad.cross_entropy(x, t, m)
        )

    def test_bce_with_logits(self):
        t = (np.arange(6) % 2).astype(float)
        check_op(lambda r: (r.normal(size=6),), lambda x: ad.bce_with_logits(x, t))

    def test_l2_loss(self):
        tgt = np.linspace(-1, 1, 12).reshape(3, 4)
        check_op(lambda r: (r.normal(size=(3, 4)),), lambda x: ad.l2_loss(x, tgt))


class TestConvAndSamplingGrads:
    def test_conv2d(self):
        check_op(
            lambda r: (
                r.normal(size=(2, 6, 7)),
                r.normal(size=(3, 2, 3, 3)),
                r.normal(size=3),
            ),
            lambda x, w, b: ad.conv2d(x, w, b, stride=1, pad=1),
        )

    def test_conv2d_strided(self):
        check_op(
            lambda r: (
                r.normal(size=(2, 8, 8)),
                r.normal(size=(3, 2, 5, 5)),
                r.normal(size=3),
            ),
            lambda x, w, b: ad.conv2d(x, w, b, stride=2, pad=2),
        )

    def test_conv1d_causal_dilated(self):
        check_op(
            lambda r: (
                r.normal(size=(2, 3, 10)),
                r.normal(size=(4, 3, 3)),
                r.normal(size=4),
            ),
            lambda x, w, b: ad.conv1d_causal(x, w, b, dilation=2),
        )

    def test_grid_sample(self):
        pts = np.array([[0.7, 1.3], [2.1, 0.4], [3.9, 2.6]])
        check_op(
            lambda r: (r.normal(size=(2, 4, 5)),),
            lambda f: ad.grid_sample(f, pts),
        )


class TestForwardContracts:
    def test_relu_values(self):
        assert ad.relu(Tensor([-1.0, 0.0, 2.0])).numpy().tolist() == [0.0, 0.0, 2.0]

    def test_hinge_is_relu(self):
        assert ad.hinge is ad.relu

    def test_softmax_uniform(self):
        out = ad.softmax(Tensor([0.0, 0.0, 0.0])).numpy()
        assert np.allclose(out, 1 / 3)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        out = ad.softmax(Tensor(rng.normal(size=(6, 9)))).numpy()
        assert np.allclose(out.sum(axis=1), 1.0)

    def test_cosine_self(self):
        v = Tensor(np.array([1.0, -2.0, 3.0]))
        assert float(ad.cosine_rows(v, v).numpy()) == pytest.approx(1.0)

    def test_matmul_identity(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        eye = Tensor(np.eye(2))
        assert np.allclose(ad.matmul(a, eye).numpy(), a.numpy())

    def test_layer_norm_standardizes(self):
        rng = np.random.default_rng(1)
        x = Tensor(rng.normal(2.0, 3.0, size=(5, 32)))
        out = ad.layer_norm(x, Tensor(np.ones(32)), Tensor(np.zeros(32))).numpy()
        assert np.allclose(out.mean(axis=1), 0.0, atol=1e-9)
        assert np.allclose(out.var(axis=1), 1.0, atol=1e-3)

    def test_shape_mismatch_reports_both_shapes(self):
        with pytest.raises(ad.ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
            ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))

    def test_non_scalar_backward_rejected(self):
        with pytest.raises(ad.ShapeError):
            Tensor(np.zeros(3), requires_grad=True).backward()

    def test_dropout_eval_is_identity(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.normal(size=(4, 4)))
        out = ad.dropout(x, 0.5, rng, training=False)
        assert np.array_equal(out.numpy(), x.numpy())

    def test_dropout_train_mask_seeded(self):
        x = Tensor(np.ones((100, 10)))
        a = ad.dropout(x, 0.3, np.random.default_rng(7), training=True).numpy()
        b = ad.dropout(x, 0.3, np.random.default_rng(7), training=True).numpy()
        assert np.array_equal(a, b)
        kept = a != 0
        assert 0.55 < kept.mean() < 0.85
        assert np.allclose(a[kept], 1 / 0.7)

    def test_softmax_cross_entropy_translation_invariant(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(size=(4, 6))
        t = np.array([0, 5, 2, 2])
        a = ad.cross_entropy(Tensor(logits), t).item()
        b = ad.cross_entropy(Tensor(logits + 37.5), t).item()
        assert a == pytest.approx(b, rel=1e-9)

    def test_grid_sample_exact_at_cell(self):
        f = np.zeros((1, 4, 4))
        f[0, 2, 1] = 5.0
        out = ad.grid_sample(Tensor(f), np.array([[1.0, 2.0]])).numpy()
        assert out[0, 0] == 5.0

    def test_sinusoidal_shape_and_range(self):
        enc = ad.sinusoidal_encoding(np.array([0.0, 1.0, 2.0]), 64)
        assert enc.shape == (3, 64)
        assert np.abs(enc).max() <= 1.0
        assert np.allclose(enc[0, 0::2], 0.0)  # sin(0)
        assert np.allclose(enc[0, 1::2], 1.0)  # cos(0)


class TestBackwardSemantics:
    def test_analytic_sum_of_squares(self):
        x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        loss = ad.sum_(ad.mul(x, x))
        loss.backward()
        assert np.allclose(x.grad, [2.0, 4.0, 6.0])

    def test_repeated_backward_accumulates(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        ad.sum_(ad.mul(x, x)).backward()
        first = x.grad.copy()
        ad.sum_(ad.mul(x, x)).backward()
        assert np.allclose(x.grad, 2 * first)

    def test_no_grad_blocks_graph(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with ad.no_grad():
            out = ad.mul(x, x)
        assert not out.requires_grad


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        opt = ad.Adam([p], lr=0.1)
        p.grad = np.zeros(2)
        opt.step()
        assert np.allclose(p.numpy(), [1.0, -2.0])

    def test_first_step_moves_by_lr_sign(self):
        # with zero moments, one step is -lr * g / (|g| + eps) ~ -lr * sign(g)
        p = Tensor(np.array([1.0, 1.0, 1.0]), requires_grad=True)
        opt = ad.Adam([p], lr=0.01)
        p.grad = np.array([3.0, -0.5, 1e-3])
        opt.step()
        assert np.allclose(p.numpy(), [1.0 - 0.01, 1.0 + 0.01, 1.0 - 0.01], atol=1e-5)

    def test_functional_adam_step_matches_class(self):
        rng = np.random.default_rng(0)
        w = rng.normal(size=(3, 3))
        g = rng.normal(size=(3, 3))
        p = Tensor(w.copy(), requires_grad=True)
        opt = ad.Adam([p], lr=2e-3)
        state = None
        for _ in range(5):
            p.grad = g
            opt.step()
            (new,), state = ad.adam_step([w], [g], state, lr=2e-3)
            w = new
        assert np.allclose(p.numpy(), w, atol=1e-12)

    def test_two_runs_bitwise_identical(self):
        def run():
            rng = np.random.default_rng(42)
            p = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
            opt = ad.Adam([p], lr=1e-3)
            for _ in range(10):
                loss = ad.sum_(ad.mul(p, p))
                opt.zero_grad()
                loss.backward()
                opt.step()
            return p.numpy().copy()

        a, b = run(), run()
        assert np.array_equal(a, b)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        tensors = {
            "enc.w": rng.normal(size=(4, 5)).astype(np.float32),
            "enc.b": rng.normal(size=5).astype(np.float32),
            "scalar": np.array(3.5, dtype=np.float32),
        }
        path = tmp_path / "model.ckpt"
        ad.save_checkpoint(path, tensors)
        loaded = ad.load_checkpoint(path)
        assert set(loaded) == set(tensors)
        for k in tensors:
            assert np.allclose(loaded[k], tensors[k])

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
        with pytest.raises(ValueError, match="magic"):
            ad.load_checkpoint(path)

    def test_module_state_dict_cycle(self, tmp_path):
        rng = np.random.default_rng(0)
        m1 = ad.MLP([4, 8, 2], rng)
        m2 = ad.MLP([4, 8, 2], np.random.default_rng(5))
        path = tmp_path / "mlp.ckpt"
        ad.save_checkpoint(path, m1.state_dict())
        m2.load_state_dict(ad.load_checkpoint(path))
        x = Tensor(np.random.default_rng(1).normal(size=(3, 4)))
        # float32 storage rounds the weights
        assert np.allclose(m1(x).numpy(), m2(x).numpy(), atol=1e-5)
