"""Layer operations built from the autodiff primitives."""

from .tensor import Tensor, add, concat, log, matmul, mul, sigmoid, softmax, tanh, tsum

EPS_LOG = 1e-12


def affine(x, W, b=None):
    if x.shape[-1] != W.shape[0]:
        raise ValueError(f"affine shape mismatch: x {x.shape}, W {W.shape}")
    y = matmul(x, W)
    return y if b is None else add(y, b)


def cross_entropy(probs, onehot):
    """-sum(onehot * log(probs + EPS_LOG)) over all entries."""
    if probs.shape != onehot.shape:
        raise ValueError(f"cross_entropy shape mismatch: {probs.shape} vs {onehot.shape}")
    return -tsum(mul(log(add(probs, EPS_LOG)), onehot))


def lstm_step(x, h, c, W, b):
    """One LSTM step; ``W`` is (in + hidden, 4*hidden) with gate order i, f, o, g."""
    n = h.shape[-1]
    if W.shape != (x.shape[-1] + n, 4 * n):
        raise ValueError(f"lstm shape mismatch: x {x.shape}, h {h.shape}, W {W.shape}")
    z = add(matmul(concat([x, h], axis=-1), W), b)
    i = sigmoid(z[..., :n])
    f = sigmoid(z[..., n:2 * n])
    o = sigmoid(z[..., 2 * n:3 * n])
    g = tanh(z[..., 3 * n:])
    c_new = add(mul(f, c), mul(i, g))
    h_new = mul(o, tanh(c_new))
    return h_new, c_new


__all__ = ["affine", "softmax", "cross_entropy", "lstm_step", "EPS_LOG", "Tensor"]
