"""Network building blocks on top of the tensor core.

Initialization draws from a single generator passed in construction order,
so a fixed seed reproduces a model bit for bit.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Parameter(Tensor):
    def __init__(self, data):
        super().__init__(data, requires_grad=True)


class Module:
    def __init__(self):
        self.training = True

    def modules(self) -> list["Module"]:
        out = [self]
        for v in self.__dict__.values():
            if isinstance(v, Module):
                out.extend(v.modules())
            elif isinstance(v, (list, tuple)):
                for item in v:
                    if isinstance(item, Module):
                        out.extend(item.modules())
        return out

    def named_parameters(self, prefix: str = "") -> dict[str, Parameter]:
        params: dict[str, Parameter] = {}
        for name, v in self.__dict__.items():
            key = f"{prefix}{name}"
            if isinstance(v, Parameter):
                params[key] = v
            elif isinstance(v, Module):
                params.update(v.named_parameters(f"{key}."))
            elif isinstance(v, (list, tuple)):
                for i, item in enumerate(v):
                    if isinstance(item, Parameter):
                        params[f"{key}.{i}"] = item
                    elif isinstance(item, Module):
                        params.update(item.named_parameters(f"{key}.{i}."))
        return params

    def parameters(self) -> list[Parameter]:
        return list(self.named_parameters().values())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def train(self):
        for m in self.modules():
            m.training = True

    def eval(self):
        for m in self.modules():
            m.training = False

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = self.named_parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, p in params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise T.ShapeError(f"param {k}: checkpoint {arr.shape} vs model {p.shape}")
            p.data = arr

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: tuple[int, ...]) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 bias: bool = True):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Parameter(xavier_uniform(rng, in_dim, out_dim, (in_dim, out_dim)))
        self.bias = Parameter(np.zeros(out_dim)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        lead = x.shape[:-1]
        if x.ndim != 2:
            x = T.reshape(x, (-1, self.in_dim))
        out = T.matmul(x, self.weight)
        if self.bias is not None:
            out = T.add(out, self.bias)
        if len(lead) != 1:
            out = T.reshape(out, lead + (self.out_dim,))
        return out


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.gain = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, self.eps)


class Dropout(Module):
    def __init__(self, rate: float, rng: np.random.Generator):
        super().__init__()
        self.rate = rate
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        return T.dropout(x, self.rate, self.rng, training=self.training)


class Embedding(Module):
    def __init__(self, count: int, dim: int, rng: np.random.Generator):
        super().__init__()
        self.table = Parameter(rng.normal(0.0, 0.02, size=(count, dim)))

    def forward(self, indices) -> Tensor:
        return T.embedding(self.table, indices)


class MultiHeadSelfAttention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if dim % heads != 0:
            raise T.ShapeError(f"dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.head_dim = dim // heads
        self.qkv = Linear(dim, 3 * dim, rng)
        self.out = Linear(dim, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        single = x.ndim == 2
        if single:
            x = T.reshape(x, (1,) + x.shape)
        b, n, dim = x.shape
        hd, heads = self.head_dim, self.heads
        qkv = self.qkv(x)

        def split(offset):
            part = qkv[:, :, offset : offset + dim]
            part = T.permute(T.reshape(part, (b, n, heads, hd)), (0, 2, 1, 3))
            return T.reshape(part, (b * heads, n, hd))

        q, k, v = split(0), split(dim), split(2 * dim)
        att = T.bmm(q, T.permute(k, (0, 2, 1)))
        att = T.softmax(T.scale(att, 1.0 / math.sqrt(hd)), axis=-1)
        mixed = T.reshape(T.bmm(att, v), (b, heads, n, hd))
        mixed = T.reshape(T.permute(mixed, (0, 2, 1, 3)), (b, n, dim))
        out = self.out(mixed)
        return T.reshape(out, (n, dim)) if single else out


class TransformerBlock(Module):
    """Self-attention block: attention and feed-forward sublayers with
    residual connections, dropout, and post-norm."""

    def __init__(self, dim: int, heads: int, ff_dim: int, dropout_rate: float,
                 rng: np.random.Generator):
        super().__init__()
        self.attn = MultiHeadSelfAttention(dim, heads, rng)
        self.drop1 = Dropout(dropout_rate, rng)
        self.norm1 = LayerNorm(dim)
        self.ff1 = Linear(dim, ff_dim, rng)
        self.ff2 = Linear(ff_dim, dim, rng)
        self.drop2 = Dropout(dropout_rate, rng)
        self.norm2 = LayerNorm(dim)

    def forward(self, x: Tensor) -> Tensor:
        x = self.norm1(T.add(x, self.drop1(self.attn(x))))
        ff = self.ff2(T.relu(self.ff1(x)))
        return self.norm2(T.add(x, self.drop2(ff)))


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, pad: Optional[int] = None):
        super().__init__()
        fan_in = cin * kernel * kernel
        self.weight = Parameter(
            xavier_uniform(rng, fan_in, cout, (cout, cin, kernel, kernel))
        )
        self.bias = Parameter(np.zeros(cout))
        self.stride = stride
        self.pad = (kernel - 1) // 2 if pad is None else pad

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


class CausalConv1d(Module):
    def __init__(self, cin: int, cout: int, kernel: int, rng: np.random.Generator,
                 dilation: int = 1):
        super().__init__()
        fan_in = cin * kernel
        self.weight = Parameter(xavier_uniform(rng, fan_in, cout, (cout, cin, kernel)))
        self.bias = Parameter(np.zeros(cout))
        self.dilation = dilation

    def forward(self, x: Tensor) -> Tensor:
        return T.conv1d_causal(x, self.weight, self.bias, dilation=self.dilation)


class MLP(Module):
    """Stack of Linear layers with ReLU between them."""

    def __init__(self, dims: list[int], rng: np.random.Generator):
        super().__init__()
        self.layers = [Linear(dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)]

    def forward(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = T.relu(x)
        return x
