"""The full commentary model: spatial-attention controller + PoS-aware generator."""

from dataclasses import asdict, dataclass

import numpy as np

from .controller import controller_loss, run_controller
from .corpus import TAGSET, encode, pos_tag, tag_ids
from .generator import (GO_ID, LossWeights, generate_steps, hard_counts, null_penalty, pos_loss,
                        structure_penalty, total_loss, word_loss)
from .numerics import ParamStore, Tensor, detach, init_uniform, stack
from .splitmix import SplitMix64


@dataclass(frozen=True)
class ModelDims:
    vocab_size: int
    F: int
    G: int
    D: int
    max_len: int
    d_h: int = 64
    d_p: int = 32
    d_e: int = 32

    @property
    def L(self):
        return self.G * self.G

    def shapes(self):
        """Parameter name -> shape, in initialization order."""
        D, h, p, e, V, T = self.D, self.d_h, self.d_p, self.d_e, self.vocab_size, len(TAGSET)
        return {
            "ctrl.att.W_x": (D, h),
            "ctrl.att.W_h": (h, h),
            "ctrl.att.v": (h,),
            "ctrl.lstm.W": (D + h, 4 * h),
            "ctrl.lstm.b": (4 * h,),
            "ctrl.head.W": (h, 2),
            "ctrl.head.b": (2,),
            "gen.embed": (V, e),
            "gen.att.W_h": (h, h),
            "gen.att.W_c": (D, h),
            "gen.att.v": (h,),
            "gen.lstm.W": (e + D + h, 4 * h),
            "gen.lstm.b": (4 * h,),
            "gen.pos.W_h": (h, p),
            "gen.pos.W_z": (D, p),
            "gen.pos.W_out": (p, T),
            "gen.word.W_h": (h, h),
            "gen.word.W_z": (D, h),
            "gen.word.W_pos": (T, h),
            "gen.word.W_out": (h, V),
        }


@dataclass
class Batch:
    grids: np.ndarray  # (B, F, L, D)
    controls: np.ndarray  # (B, F, 2)
    targets: np.ndarray  # (B, K) padded caption ids
    inputs: np.ndarray  # (B, K) go symbol followed by targets[:, :-1]
    tags: np.ndarray  # (B, K) tag indices

    @classmethod
    def from_clips(cls, clips, vocab):
        targets = np.array([encode(c.caption.padded, vocab, c.caption.max_len) for c in clips],
                           dtype=np.int64)
        inputs = np.concatenate([np.full((len(clips), 1), GO_ID), targets[:, :-1]], axis=1)
        tags = np.array([tag_ids(pos_tag(c.caption.padded)) for c in clips], dtype=np.int64)
        return cls(np.stack([c.frames for c in clips]), np.stack([c.controls for c in clips]),
                   targets, inputs, tags)

    def __len__(self):
        return len(self.targets)


class CommentaryModel:
    def __init__(self, dims, vocab, seed=0, pos_feed=True):
        if dims.vocab_size != len(vocab):
            raise ValueError(f"vocab has {len(vocab)} tokens, dims say {dims.vocab_size}")
        self.dims = dims
        self.vocab = vocab
        self.pos_feed = pos_feed
        self.store = ParamStore()
        rng = SplitMix64(seed)
        for name, shape in dims.shapes().items():
            if name.endswith(".b"):
                self.store.add(name, np.zeros(shape))
            else:
                self.store.add(name, init_uniform(rng, shape))

    def param_names(self, prefix=""):
        return [n for n in self.store if n.startswith(prefix)]

    def controller_trace(self, grids):
        return run_controller(grids, self.store)

    def forward(self, batch, detach_contexts=False):
        """Teacher-forced pass; returns the controller trace and generator step outputs."""
        trace = self.controller_trace(batch.grids)
        contexts = trace.stacked_contexts()
        if detach_contexts:
            contexts = detach(contexts)
        steps = generate_steps(self.store, contexts, batch.inputs, self.pos_feed)
        return trace, steps

    def losses(self, batch, weights=LossWeights(), w_ctrl=1.0, detach_contexts=False):
        """Every loss component as a scalar tensor, plus the combined objectives.

        ``L_gen`` is the generator objective; ``L_total`` adds ``w_ctrl * L_ctrl``.
        """
        trace, steps = self.forward(batch, detach_contexts)
        word_probs = stack(steps.word_probs, axis=1)
        pos_probs = stack(steps.pos_probs, axis=1)
        out = {
            "L_g": word_loss(word_probs, batch.targets),
            "L_pos": pos_loss(pos_probs, batch.tags),
            "P_null": null_penalty(word_probs, weights.gamma_null),
            "P_struct": structure_penalty(word_probs, weights.gamma_other),
            "L_ctrl": controller_loss(trace.stacked_controls(), Tensor(batch.controls)),
        }
        out["L_gen"] = total_loss(out["L_g"], out["L_pos"], out["P_null"], out["P_struct"],
                                  weights.lambda_pos)
        out["L_total"] = out["L_gen"] + w_ctrl * out["L_ctrl"]
        self.last_outputs = (trace, steps, word_probs, pos_probs)
        return out

    def hard_counts(self):
        """Argmax special-token counts of the most recent :meth:`losses` call."""
        return hard_counts(self.last_outputs[2])

    def config(self):
        return {"dims": asdict(self.dims), "vocab": list(self.vocab.tokens), "pos_feed": self.pos_feed}
