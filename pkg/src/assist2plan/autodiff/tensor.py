"""Minimal reverse-mode autodiff over dense float64 numpy arrays.

Dense CPU tensors only; broadcasting is limited to bias-style adds. The op
set is exactly what the wall-sequence networks need. Every differentiable op
here is covered by a finite-difference check in the test suite.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph construction inside the block (inference paths)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjps")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._vjps: tuple = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def backward(self):
        backward(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Sequence[Tensor],
            vjps: Sequence[Callable[[np.ndarray], np.ndarray]]) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjps = tuple(vjps)
    return out


def backward(loss: Tensor):
    """Populate grads of every requires_grad tensor reachable from loss.

    Repeated calls without zeroing accumulate into existing grads.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node._parents:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for p, vjp in zip(node._parents, node._vjps):
            if not p.requires_grad:
                continue
            contrib = vjp(g)
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + contrib
            else:
                grads[id(p)] = contrib.copy() if contrib is g else contrib


# ---------------------------------------------------------------------------
# elementwise / structural ops


def add(a: Tensor, b) -> Tensor:
    a = _as_tensor(a)
    if isinstance(b, (int, float)):
        return _result(a.data + b, [a], [lambda g: g])
    b = _as_tensor(b)
    if a.shape == b.shape:
        return _result(a.data + b.data, [a, b], [lambda g: g, lambda g: g])
    # bias add: b broadcast across leading axes
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        axes = tuple(range(a.ndim - 1))
        return _result(
            a.data + b.data,
            [a, b],
            [lambda g: g, lambda g: g.sum(axis=axes) if axes else g],
        )
    raise ShapeError(f"add shapes incompatible: {a.shape} vs {b.shape}")


def mul(a: Tensor, b) -> Tensor:
    a = _as_tensor(a)
    if isinstance(b, (int, float)):
        val = float(b)
        return _result(a.data * val, [a], [lambda g: g * val])
    b = _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul shapes incompatible: {a.shape} vs {b.shape}")
    return _result(
        a.data * b.data, [a, b], [lambda g: g * b.data, lambda g: g * a.data]
    )


def scale(a: Tensor, s: float) -> Tensor:
    return mul(a, float(s))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes incompatible: {a.shape} vs {b.shape}")
    return _result(
        a.data @ b.data,
        [a, b],
        [lambda g: g @ b.data.T, lambda g: a.data.T @ g],
    )


def transpose(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got {a.shape}")
    return _result(a.data.T.copy(), [a], [lambda g: g.T])


def permute(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    a = _as_tensor(a)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"bad permutation {axes} for shape {a.shape}")
    inverse = tuple(np.argsort(axes))
    return _result(
        np.ascontiguousarray(a.data.transpose(axes)),
        [a],
        [lambda g: g.transpose(inverse)],
    )


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul: (B, N, K) @ (B, K, M) -> (B, N, M)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise ShapeError(f"bmm shapes incompatible: {a.shape} vs {b.shape}")
    return _result(
        np.matmul(a.data, b.data),
        [a, b],
        [
            lambda g: np.matmul(g, b.data.transpose(0, 2, 1)),
            lambda g: np.matmul(a.data.transpose(0, 2, 1), g),
        ],
    )


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    a = _as_tensor(a)
    old = a.shape
    return _result(a.data.reshape(shape), [a], [lambda g: g.reshape(old)])


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i):
        lo, hi = offsets[i], offsets[i + 1]

        def vjp(g):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            return g[tuple(idx)]

        return vjp

    return _result(data, tensors, [make_vjp(i) for i in range(len(tensors))])


def slice_(a: Tensor, key) -> Tensor:
    a = _as_tensor(a)
    data = a.data[key]
    in_shape = a.shape

    def vjp(g):
        out = np.zeros(in_shape)
        out[key] = g
        return out

    return _result(data.copy(), [a], [vjp])


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), [x], [lambda g: g * mask])


# max(0, x) under its loss-margin name; identical to relu on purpose
hinge = relu


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    s = 1.0 / (1.0 + np.exp(-np.clip(x.data, -60, 60)))
    return _result(s, [x], [lambda g: g * s * (1.0 - s)])


def softmax(x: Tensor, axis: int = -1, temperature: float = 1.0) -> Tensor:
    x = _as_tensor(x)
    z = x.data / temperature
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - dot)) / temperature

    return _result(s, [x], [vjp])


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match feature dim {d}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def vjp_x(g):
        gg = g * gain.data
        return inv * (
            gg
            - gg.mean(axis=-1, keepdims=True)
            - xhat * (gg * xhat).mean(axis=-1, keepdims=True)
        )

    axes = tuple(range(x.ndim - 1))

    def vjp_gain(g):
        v = g * xhat
        return v.sum(axis=axes) if axes else v

    def vjp_bias(g):
        return g.sum(axis=axes) if axes else g

    return _result(out, [x, gain, bias], [vjp_x, vjp_gain, vjp_bias])


def dropout(x: Tensor, rate: float, rng: np.random.Generator,
            training: bool = True) -> Tensor:
    """Inverted dropout with a seeded mask; identity when not training."""
    x = _as_tensor(x)
    if not training or rate <= 0.0:
        return _result(x.data.copy(), [x], [lambda g: g])
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep) / keep
    return _result(x.data * mask, [x], [lambda g: g * mask])


def embedding(table: Tensor, indices) -> Tensor:
    """Row lookup; gradient scatter-adds into the table."""
    table = _as_tensor(table)
    idx = np.asarray(indices, dtype=np.int64)
    data = table.data[idx]
    tshape = table.shape

    def vjp(g):
        out = np.zeros(tshape)
        np.add.at(out, idx, g)
        return out

    return _result(data, [table], [vjp])


# ---------------------------------------------------------------------------
# reductions


def sum_(x: Tensor, axis=None) -> Tensor:
    x = _as_tensor(x)
    in_shape = x.shape

    if axis is None:
        return _result(
            np.asarray(x.data.sum()), [x], [lambda g: np.broadcast_to(g, in_shape).copy()]
        )

    def vjp(g):
        return np.broadcast_to(np.expand_dims(g, axis), in_shape).copy()

    return _result(x.data.sum(axis=axis), [x], [vjp])


def mean(x: Tensor, axis=None) -> Tensor:
    x = _as_tensor(x)
    n = x.size if axis is None else x.shape[axis]
    return mul(sum_(x, axis), 1.0 / n)


def max_(x: Tensor, axis: int) -> Tensor:
    """Max along one axis; gradient flows to the first argmax on ties."""
    x = _as_tensor(x)
    data = x.data.max(axis=axis)
    arg = x.data.argmax(axis=axis)
    in_shape = x.shape

    def vjp(g):
        out = np.zeros(in_shape)
        idx = list(np.indices(g.shape))
        idx.insert(axis if axis >= 0 else x.ndim + axis, arg)
        out[tuple(idx)] = g
        return out

    return _result(data, [x], [vjp])


# ---------------------------------------------------------------------------
# similarity and losses


def cosine_rows(m: Tensor, v: Tensor) -> Tensor:
    """Cosine similarity between each row of m (N,D) and a vector v (D,)."""
    m, v = _as_tensor(m), _as_tensor(v)
    single = m.ndim == 1
    md = m.data[None, :] if single else m.data
    if md.shape[1] != v.shape[0]:
        raise ShapeError(f"cosine shapes incompatible: {m.shape} vs {v.shape}")
    mn = np.linalg.norm(md, axis=1)
    vn = np.linalg.norm(v.data)
    denom = np.maximum(mn * vn, 1e-12)
    cos = (md @ v.data) / denom

    def vjp_m(g):
        gcol = (np.asarray(g).reshape(-1))[:, None]
        grad = gcol * (
            v.data[None, :] / denom[:, None]
            - cos[:, None] * md / np.maximum(mn * mn, 1e-12)[:, None]
        )
        return grad[0] if single else grad

    def vjp_v(g):
        gcol = (np.asarray(g).reshape(-1))[:, None]
        contrib = gcol * (
            md / denom[:, None] - cos[:, None] * v.data[None, :] / max(vn * vn, 1e-12)
        )
        return contrib.sum(axis=0)

    data = cos[0] if single else cos
    return _result(data, [m, v], [vjp_m, vjp_v])


def cross_entropy(logits: Tensor, targets, mask=None) -> Tensor:
    """Mean softmax cross-entropy over rows; masked rows contribute nothing."""
    logits = _as_tensor(logits)
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects (N, C) logits, got {logits.shape}")
    t = np.asarray(targets, dtype=np.int64)
    valid = np.ones(len(t), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    n_valid = int(valid.sum())
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    if n_valid == 0:
        return _result(np.asarray(0.0), [logits], [lambda g: np.zeros(logits.shape)])
    nll = -logp[np.arange(len(t)), np.clip(t, 0, logits.shape[1] - 1)]
    loss = (nll * valid).sum() / n_valid
    p = np.exp(logp)

    def vjp(g):
        grad = p.copy()
        grad[np.arange(len(t)), np.clip(t, 0, logits.shape[1] - 1)] -= 1.0
        grad *= valid[:, None]
        return grad * (float(g) / n_valid)

    return _result(np.asarray(loss), [logits], [vjp])


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy on raw logits (numerically stable form)."""
    logits = _as_tensor(logits)
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != logits.shape:
        raise ShapeError(f"bce shapes incompatible: {logits.shape} vs {t.shape}")
    x = logits.data
    loss = np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))
    n = x.size
    s = 1.0 / (1.0 + np.exp(-np.clip(x, -60, 60)))

    def vjp(g):
        return (s - t) * (float(g) / n)

    return _result(np.asarray(loss.mean()), [logits], [vjp])


def l2_loss(pred: Tensor, target) -> Tensor:
    """Mean squared difference."""
    pred = _as_tensor(pred)
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if t.shape != pred.shape:
        raise ShapeError(f"l2 shapes incompatible: {pred.shape} vs {t.shape}")
    diff = pred.data - t
    n = diff.size
    parents = [pred] + ([target] if isinstance(target, Tensor) else [])
    vjps = [lambda g: diff * (2.0 * float(g) / n)]
    if isinstance(target, Tensor):
        vjps.append(lambda g: diff * (-2.0 * float(g) / n))
    return _result(np.asarray((diff * diff).mean()), parents, vjps)


# ---------------------------------------------------------------------------
# convolution and sampling


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None,
           stride: int = 1, pad: int = 0) -> Tensor:
    """2-D convolution on (Cin, H, W) with weights (Cout, Cin, kh, kw)."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.ndim != 3 or w.ndim != 4 or x.shape[0] != w.shape[1]:
        raise ShapeError(f"conv2d shapes incompatible: {x.shape} vs {w.shape}")
    cin, h, ww_ = x.shape
    cout, _, kh, kw = w.shape
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad))) if pad else x.data
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (ww_ + 2 * pad - kw) // stride + 1
    cols = np.empty((cin, kh, kw, ho, wo))
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, i : i + stride * ho : stride, j : j + stride * wo : stride]
    cols2 = cols.reshape(cin * kh * kw, ho * wo)
    wmat = w.data.reshape(cout, cin * kh * kw)
    out = (wmat @ cols2).reshape(cout, ho, wo)
    if b is not None:
        out = out + b.data[:, None, None]

    def vjp_x(g):
        gmat = g.reshape(cout, ho * wo)
        dcols = (wmat.T @ gmat).reshape(cin, kh, kw, ho, wo)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[:, i, j]
        return dxp[:, pad : pad + h, pad : pad + ww_] if pad else dxp

    def vjp_w(g):
        gmat = g.reshape(cout, ho * wo)
        return (gmat @ cols2.T).reshape(w.shape)

    parents = [x, w]
    vjps = [vjp_x, vjp_w]
    if b is not None:
        parents.append(b)
        vjps.append(lambda g: g.sum(axis=(1, 2)))
    return _result(out, parents, vjps)


def conv1d_causal(x: Tensor, w: Tensor, b: Optional[Tensor] = None,
                  dilation: int = 1) -> Tensor:
    """Causal dilated 1-D convolution on (B, Cin, L); output length equals L."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv1d shapes incompatible: {x.shape} vs {w.shape}")
    bsz, cin, length = x.shape
    cout, _, k = w.shape
    lpad = (k - 1) * dilation
    xp = np.pad(x.data, ((0, 0), (0, 0), (lpad, 0)))
    out = np.zeros((bsz, cout, length))
    for i in range(k):
        seg = xp[:, :, i * dilation : i * dilation + length]
        out += np.einsum("oc,bcl->bol", w.data[:, :, i], seg)
    if b is not None:
        out = out + b.data[None, :, None]

    def vjp_x(g):
        dxp = np.zeros_like(xp)
        for i in range(k):
            dxp[:, :, i * dilation : i * dilation + length] += np.einsum(
                "oc,bol->bcl", w.data[:, :, i], g
            )
        return dxp[:, :, lpad:]

    def vjp_w(g):
        dw = np.zeros_like(w.data)
        for i in range(k):
            seg = xp[:, :, i * dilation : i * dilation + length]
            dw[:, :, i] = np.einsum("bol,bcl->oc", g, seg)
        return dw

    parents = [x, w]
    vjps = [vjp_x, vjp_w]
    if b is not None:
        parents.append(b)
        vjps.append(lambda g: g.sum(axis=(0, 2)))
    return _result(out, parents, vjps)


def grid_sample(feat: Tensor, points: np.ndarray) -> Tensor:
    """Bilinear sampling of a (C, H, W) map at (x, y) points; returns (P, C).

    Points outside the map are clamped to the border.
    """
    feat = _as_tensor(feat)
    if feat.ndim != 3:
        raise ShapeError(f"grid_sample expects (C, H, W), got {feat.shape}")
    c, h, w = feat.shape
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    x = np.clip(pts[:, 0], 0.0, w - 1.0)
    y = np.clip(pts[:, 1], 0.0, h - 1.0)
    x0 = np.clip(np.floor(x).astype(int), 0, w - 2) if w > 1 else np.zeros(len(x), int)
    y0 = np.clip(np.floor(y).astype(int), 0, h - 2) if h > 1 else np.zeros(len(y), int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    w00 = (1 - fx) * (1 - fy)
    w01 = fx * (1 - fy)
    w10 = (1 - fx) * fy
    w11 = fx * fy
    f = feat.data
    out = (
        f[:, y0, x0] * w00
        + f[:, y0, x1] * w01
        + f[:, y1, x0] * w10
        + f[:, y1, x1] * w11
    ).T

    def vjp(g):
        df = np.zeros((c, h, w))
        gT = g.T  # (C, P)
        np.add.at(df, (slice(None), y0, x0), gT * w00)
        np.add.at(df, (slice(None), y0, x1), gT * w01)
        np.add.at(df, (slice(None), y1, x0), gT * w10)
        np.add.at(df, (slice(None), y1, x1), gT * w11)
        return df

    return _result(out, [feat], [vjp])


# ---------------------------------------------------------------------------
# constant encodings


def sinusoidal_encoding(values, dim: int, base: float = 10000.0) -> np.ndarray:
    """Alternating sin/cos frequency ladder; returns a constant (N, dim) array."""
    if dim % 2 != 0:
        raise ShapeError(f"sinusoidal dim must be even, got {dim}")
    v = np.atleast_1d(np.asarray(values, dtype=np.float64))
    half = dim // 2
    freqs = np.power(base, -np.arange(half) * 2.0 / dim)
    ang = v[:, None] * freqs[None, :]
    out = np.empty((len(v), dim))
    out[:, 0::2] = np.sin(ang)
    out[:, 1::2] = np.cos(ang)
    return out
