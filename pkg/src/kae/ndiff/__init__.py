"""Minimal reverse-mode differentiable arrays on top of numpy."""
from .functional import (
    attention_weights,
    dropout,
    layer_norm,
    log_softmax,
    pick,
    scaled_dot_attention,
    softmax,
)
from .optim import Adam
from .tensor import (
    Tensor,
    add,
    concat,
    constant,
    div,
    embedding,
    exp,
    getitem,
    grad_enabled,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    parameter,
    power,
    randn,
    relu,
    reshape,
    reverse_accumulate,
    sqrt,
    sub,
    sum_,
    swapaxes,
    transpose,
)


def numerical_gradient(f, x, eps: float = 1e-6):
    """Central finite-difference gradient of scalar ``f`` w.r.t. array ``x``
    (modified in place and restored)."""
    import numpy as np

    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f()
        x[i] = old - eps
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g
