"""Temporal-attention language generator with a part-of-speech head.

At word step k the generator attends over the controller's per-frame
contexts, advances its LSTM, predicts a PoS distribution from (h_k, z_k) and
feeds that distribution into the word head.  Loss terms:

* ``word_loss``   summed word cross-entropy over every padded position
* ``pos_loss``    summed PoS cross-entropy over every padded position
* ``null_penalty``      gamma_null * expected number of <NULL> tokens
* ``structure_penalty`` gamma_other * sum over <START>/<sep>/<END> of |expected count - 1|

Batched inputs are (B, K, ...); a missing batch axis counts as B = 1.  Loss
terms are sums over positions averaged over the batch.
"""

from dataclasses import dataclass, field

import numpy as np

from .controller import ShapeError, attention_context, scope
from .corpus import END_ID, NULL_ID, SEP_ID, SPECIAL_TOKENS, START_ID
from .numerics import (Tensor, absolute, concat, cross_entropy, embed, getitem, lstm_step, matmul,
                       no_grad, reshape, softmax, tanh, tsum)

STRUCTURE_IDS = (START_ID, SEP_ID, END_ID)


@dataclass(frozen=True)
class LossWeights:
    lambda_pos: float = 0.3
    gamma_null: float = 4.0
    gamma_other: float = 50.0

    def __post_init__(self):
        if not 0.0 <= self.lambda_pos <= 1.0:
            raise ValueError(f"lambda_pos must lie in [0, 1], got {self.lambda_pos}")
        if self.gamma_null < 0 or self.gamma_other < 0:
            raise ValueError("penalty weights must be nonnegative")


def temporal_attend(h_prev, contexts, weights, contexts_proj=None):
    """e_t = v . tanh(h W_h + c_t W_c); beta = softmax(e); z = sum_t beta_t c_t."""
    B, F, D = contexts.shape
    W_h, W_c, v = weights["W_h"], weights["W_c"], weights["v"]
    if W_c.shape[0] != D or W_h.shape[0] != h_prev.shape[-1]:
        raise ShapeError(f"temporal_attend: contexts {contexts.shape}, h {h_prev.shape}")
    if contexts_proj is None:
        contexts_proj = matmul(contexts, W_c)
    hp = reshape(matmul(h_prev, W_h), (B, 1, W_h.shape[1]))
    beta = softmax(matmul(tanh(contexts_proj + hp), v), axis=-1)
    return beta, attention_context(beta, contexts)


def pos_decode(h, z, head):
    """PoS distribution softmax((h W_h + z W_z) W_out): two linear stages, no bias."""
    if head["W_h"].shape[0] != h.shape[-1] or head["W_z"].shape[0] != z.shape[-1]:
        raise ShapeError(f"pos_decode: h {h.shape}, z {z.shape}")
    return softmax(matmul(matmul(h, head["W_h"]) + matmul(z, head["W_z"]), head["W_out"]))


def word_decode(h, z, pos_probs, head):
    """Word distribution; the PoS probabilities enter through their own matrix ``W_pos``."""
    if head["W_pos"].shape[0] != pos_probs.shape[-1]:
        raise ShapeError(f"word_decode: pos input {pos_probs.shape}, W_pos {head['W_pos'].shape}")
    hidden = matmul(h, head["W_h"]) + matmul(z, head["W_z"]) + matmul(pos_probs, head["W_pos"])
    return softmax(matmul(hidden, head["W_out"]))


def _batch(probs):
    return probs.shape[0] if probs.ndim == 3 else 1


def _onehot(ids, n):
    return Tensor(np.eye(n)[np.asarray(ids, dtype=np.int64)])


def word_loss(probs, truth_ids):
    if probs.shape[:-1] != np.shape(truth_ids):
        raise ShapeError(f"word_loss: probs {probs.shape} vs ids {np.shape(truth_ids)}")
    return cross_entropy(probs, _onehot(truth_ids, probs.shape[-1])) * (1.0 / _batch(probs))


def pos_loss(pos_probs, truth_tags):
    if pos_probs.shape[:-1] != np.shape(truth_tags):
        raise ShapeError(f"pos_loss: probs {pos_probs.shape} vs tags {np.shape(truth_tags)}")
    return cross_entropy(pos_probs, _onehot(truth_tags, pos_probs.shape[-1])) * (1.0 / _batch(pos_probs))


def null_penalty(probs, gamma_null):
    return tsum(probs[..., NULL_ID]) * (gamma_null / _batch(probs))


def expected_counts(probs):
    """Expected counts of <START>, <sep>, <END> per caption: (B, 3) or (3,)."""
    return tsum(getitem(probs, (Ellipsis, list(STRUCTURE_IDS))), axis=-2)


def structure_penalty(probs, gamma_other):
    return tsum(absolute(expected_counts(probs) - 1.0)) * (gamma_other / _batch(probs))


def total_loss(word, pos, p_null, p_struct, lambda_pos):
    return (1.0 - lambda_pos) * word + lambda_pos * pos + p_null + p_struct


def hard_counts(probs):
    """Counts of special tokens among the argmax predictions, summed over the batch."""
    data = probs.data if isinstance(probs, Tensor) else np.asarray(probs)
    winners = data.argmax(axis=-1)
    return {tok: int(np.sum(winners == i)) for i, tok in enumerate(SPECIAL_TOKENS)}


@dataclass
class StepOutputs:
    pos_probs: list = field(default_factory=list)  # per step, (B, T)
    word_probs: list = field(default_factory=list)  # per step, (B, V)
    betas: list = field(default_factory=list)  # per step, (B, F)


class _Heads:
    def __init__(self, store, prefix="gen."):
        w = scope(store, prefix)
        self.embed = w["embed"]
        self.att = {"W_h": w["att.W_h"], "W_c": w["att.W_c"], "v": w["att.v"]}
        self.lstm = (w["lstm.W"], w["lstm.b"])
        self.pos = {"W_h": w["pos.W_h"], "W_z": w["pos.W_z"], "W_out": w["pos.W_out"]}
        self.word = {"W_h": w["word.W_h"], "W_z": w["word.W_z"], "W_pos": w["word.W_pos"],
                     "W_out": w["word.W_out"]}
        self.d_h = w["att.W_h"].shape[0]

    def step(self, x, h, c, contexts, proj, pos_feed):
        beta, z = temporal_attend(h, contexts, self.att, proj)
        h, c = lstm_step(concat([x, z], axis=-1), h, c, *self.lstm)
        o_pos = pos_decode(h, z, self.pos)
        feed = o_pos if pos_feed else Tensor(np.zeros(o_pos.shape))
        return h, c, beta, o_pos, word_decode(h, z, feed, self.word)


GO_ID = -1


def embed_inputs(table, ids):
    """Embedding lookup where ``GO_ID`` (the first decoder input) maps to a zero vector."""
    ids = np.asarray(ids)
    emb = embed(table, np.maximum(ids, 0))
    if np.any(ids == GO_ID):
        emb = emb * Tensor((ids != GO_ID).astype(np.float64)[..., None])
    return emb


def generate_steps(store, contexts, input_ids, pos_feed=True, prefix="gen."):
    """Teacher-forced pass: ``input_ids`` (B, K) are the tokens fed at each step.

    Step 0 receives ``GO_ID`` and is trained to emit <START>.
    """
    heads = _Heads(store, prefix)
    B, K = np.shape(input_ids)
    proj = matmul(contexts, heads.att["W_c"])
    emb = embed_inputs(heads.embed, input_ids)
    h = c = Tensor(np.zeros((B, heads.d_h)))
    out = StepOutputs()
    for k in range(K):
        h, c, beta, o_pos, o = heads.step(emb[:, k], h, c, contexts, proj, pos_feed)
        out.pos_probs.append(o_pos)
        out.word_probs.append(o)
        out.betas.append(beta)
    return out


@dataclass
class Decoded:
    tokens: list
    betas: np.ndarray  # (steps, F)
    alphas: np.ndarray  # (F, L)
    probs: np.ndarray  # (steps, V) word distributions along the decoded path


def greedy_decode(model, clips, max_len=None):
    """Free-running argmax decoding, batched over clips.

    Decoding starts from the go input, so the model generates <START> itself
    and feeds it back; each caption stops at the first generated <END> or
    after ``max_len`` tokens.
    """
    single = not isinstance(clips, (list, tuple))
    clips = [clips] if single else list(clips)
    max_len = max_len or model.dims.max_len
    with no_grad():
        trace = model.controller_trace(np.stack([c.frames for c in clips]))
        contexts = trace.stacked_contexts()
        heads = _Heads(model.store)
        B = len(clips)
        proj = matmul(contexts, heads.att["W_c"])
        h = c = Tensor(np.zeros((B, heads.d_h)))
        prev = np.full(B, GO_ID)
        ids, betas, probs = [], [], []
        for _ in range(max_len):
            h, c, beta, _, o = heads.step(embed_inputs(heads.embed, prev), h, c, contexts, proj,
                                          model.pos_feed)
            prev = o.data.argmax(axis=-1)
            ids.append(prev)
            betas.append(beta.data)
            probs.append(o.data)
    ids = np.stack(ids, axis=1)
    betas = np.stack(betas, axis=1)
    probs = np.stack(probs, axis=1)
    alphas = trace.alpha_array()
    results = []
    for b in range(B):
        hits = np.flatnonzero(ids[b] == END_ID)
        n = int(hits[0]) + 1 if hits.size else max_len
        tokens = [model.vocab.tokens[i] for i in ids[b, :n]]
        results.append(Decoded(tokens, betas[b, :n], alphas[b], probs[b, :n]))
    return results[0] if single else results


def free_running_penalties(decoded, weights):
    """Penalty values on the distributions along free-running decodes (reporting only)."""
    if not decoded:
        return 0.0, 0.0
    p_null = sum(weights.gamma_null * d.probs[:, NULL_ID].sum() for d in decoded)
    p_struct = sum(weights.gamma_other * np.abs(d.probs[:, list(STRUCTURE_IDS)].sum(axis=0) - 1).sum()
                   for d in decoded)
    return float(p_null) / len(decoded), float(p_struct) / len(decoded)


__all__ = ["LossWeights", "temporal_attend", "pos_decode", "word_decode", "word_loss", "pos_loss",
           "null_penalty", "structure_penalty", "expected_counts", "total_loss", "hard_counts",
           "generate_steps", "greedy_decode", "free_running_penalties"]
