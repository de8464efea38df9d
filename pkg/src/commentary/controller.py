"""LSTM vehicle controller with soft spatial attention over feature-grid cells.

All functions are batched: feature grids are (B, L, D), hidden states (B, d_h).
"""

from dataclasses import dataclass, field

import numpy as np

from .numerics import Tensor, affine, lstm_step, matmul, mul, reshape, softmax, stack, tanh, tsum


class ShapeError(ValueError):
    pass


def scope(store, prefix):
    """Parameters under ``prefix`` keyed by their short names."""
    return {name[len(prefix):]: store[name] for name in store if name.startswith(prefix)}


def attention_context(weights, values):
    """Convex combination sum_i weights[b, i] * values[b, i, :]."""
    B, n = weights.shape
    return tsum(mul(reshape(weights, (B, n, 1)), values), axis=1)


def spatial_attend(h_prev, grid, weights):
    """Additive attention: e_i = v . tanh(x_i W_x + h W_h); alpha = softmax(e)."""
    grid = grid if isinstance(grid, Tensor) else Tensor(grid)
    B, L, D = grid.shape
    W_x, W_h, v = weights["W_x"], weights["W_h"], weights["v"]
    if W_x.shape[0] != D or W_h.shape[0] != h_prev.shape[-1] or h_prev.shape[0] != B:
        raise ShapeError(f"spatial_attend: grid {grid.shape}, h {h_prev.shape}, "
                         f"W_x {W_x.shape}, W_h {W_h.shape}")
    hp = reshape(matmul(h_prev, W_h), (B, 1, W_h.shape[1]))
    scores = matmul(tanh(matmul(grid, W_x) + hp), v)
    alpha = softmax(scores, axis=-1)
    return alpha, attention_context(alpha, grid)


def controller_step(context, state, weights):
    """LSTM update on the attended context followed by the control head."""
    h, c = state
    h, c = lstm_step(context, h, c, weights["lstm.W"], weights["lstm.b"])
    return (h, c), affine(h, weights["head.W"], weights["head.b"])


def controller_loss(pred, truth):
    """Mean over frames (and batch) of squared acceleration + course errors."""
    truth = truth if isinstance(truth, Tensor) else Tensor(truth)
    if pred.shape != truth.shape:
        raise ShapeError(f"controller_loss: prediction {pred.shape} vs truth {truth.shape}")
    diff = pred - truth
    per_frame = np.prod(pred.shape[:-1])
    return tsum(mul(diff, diff)) * (1.0 / per_frame)


@dataclass
class ControllerTrace:
    alphas: list = field(default_factory=list)  # per frame, (B, L)
    contexts: list = field(default_factory=list)  # per frame, (B, D)
    hidden: list = field(default_factory=list)  # per frame, (B, d_h)
    controls: list = field(default_factory=list)  # per frame, (B, 2)

    def stacked_contexts(self):
        return stack(self.contexts, axis=1)

    def stacked_controls(self):
        return stack(self.controls, axis=1)

    def alpha_array(self):
        return np.stack([a.data for a in self.alphas], axis=1)


def run_controller(grids, store, prefix="ctrl."):
    """Run the controller over (B, F, L, D) grids and record its trace."""
    grids = np.asarray(grids, dtype=np.float64)
    w = scope(store, prefix)
    B, F = grids.shape[:2]
    d_h = w["att.W_h"].shape[0]
    state = (Tensor(np.zeros((B, d_h))), Tensor(np.zeros((B, d_h))))
    att = {"W_x": w["att.W_x"], "W_h": w["att.W_h"], "v": w["att.v"]}
    trace = ControllerTrace()
    for t in range(F):
        alpha, ctx = spatial_attend(state[0], Tensor(grids[:, t]), att)
        state, control = controller_step(ctx, state, w)
        trace.alphas.append(alpha)
        trace.contexts.append(ctx)
        trace.hidden.append(state[0])
        trace.controls.append(control)
    return trace
