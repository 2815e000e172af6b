from .tensor import (
    Tensor,
    ShapeError,
    no_grad,
    backward,
    add,
    mul,
    scale,
    matmul,
    transpose,
    permute,
    bmm,
    reshape,
    concat,
    slice_,
    relu,
    hinge,
    sigmoid,
    softmax,
    layer_norm,
    dropout,
    embedding,
    sum_,
    mean,
    max_,
    cosine_rows,
    cross_entropy,
    bce_with_logits,
    l2_loss,
    conv2d,
    conv1d_causal,
    grid_sample,
    sinusoidal_encoding,
)
from .layers import (
    Parameter,
    Module,
    Linear,
    LayerNorm,
    Dropout,
    Embedding,
    MultiHeadSelfAttention,
    TransformerBlock,
    Conv2d,
    CausalConv1d,
    MLP,
)
from .optim import Adam, adam_step
from .checkpoint import save_checkpoint, load_checkpoint
