import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from commentary import generator
from commentary.corpus import END_ID, NULL_ID, SEP_ID, START_ID, build_vocab, count_special
from commentary.generator import (LossWeights, expected_counts, greedy_decode, hard_counts,
                                  null_penalty, pos_decode, pos_loss, structure_penalty,
                                  temporal_attend, total_loss, word_decode, word_loss)
from commentary.model import Batch, CommentaryModel, ModelDims
from commentary.numerics import Tensor, backward, softmax
from commentary.splitmix import SplitMix64
from commentary.synth import make_clip


def rand(shape, seed, lo=-1.0, hi=1.0):
    return SplitMix64(seed).uniform_array(shape, lo, hi)


def random_probs(shape, seed, scale=3.0):
    return softmax(Tensor(rand(shape, seed, -scale, scale)), axis=-1)


def test_loss_weight_defaults_and_validation():
    w = LossWeights()
    assert (w.lambda_pos, w.gamma_null, w.gamma_other) == (0.3, 4.0, 50.0)
    with pytest.raises(ValueError):
        LossWeights(1.5)
    with pytest.raises(ValueError):
        LossWeights(0.3, -1.0)


def _att(h, D, seed):
    return {"W_h": Tensor(rand((h, 5), seed)), "W_c": Tensor(rand((D, 5), seed + 1)),
            "v": Tensor(rand((5,), seed + 2))}


def test_temporal_attend_examples():
    ctx = Tensor(rand((2, 1, 3), 1))
    beta, z = temporal_attend(Tensor(rand((2, 4), 2)), ctx, _att(4, 3, 3))
    assert np.array_equal(beta.data, np.ones((2, 1)))
    assert np.array_equal(z.data, ctx.data[:, 0])
    w = _att(4, 3, 3)
    w["v"] = Tensor(np.zeros(5))
    beta, _ = temporal_attend(Tensor(rand((2, 4), 2)), Tensor(rand((2, 6, 3), 4)), w)
    np.testing.assert_allclose(beta.data, 1 / 6, rtol=1e-15)
    forced = {"W_h": Tensor(np.zeros((4, 1))), "W_c": Tensor([[30.0], [0.0], [0.0]]), "v": Tensor([40.0])}
    ctx = np.zeros((1, 5, 3))
    ctx[0, 3] = [1.0, 0.25, -0.5]
    beta, z = temporal_attend(Tensor(np.zeros((1, 4))), Tensor(ctx), forced)
    assert beta.data[0, 3] > 1 - 1e-12
    np.testing.assert_allclose(z.data[0], ctx[0, 3], atol=1e-12)


def _pos_head(h, D, p, seed, zero=False):
    f = (lambda s, k: Tensor(np.zeros(s))) if zero else (lambda s, k: Tensor(rand(s, seed + k)))
    return {"W_h": f((h, p), 0), "W_z": f((D, p), 1), "W_out": f((p, 12), 2)}


def test_pos_decode_examples():
    h, z = Tensor(rand((3, 4), 1)), Tensor(rand((3, 2), 2))
    np.testing.assert_allclose(pos_decode(h, z, _pos_head(4, 2, 5, 0, zero=True)).data, 1 / 12)
    head = _pos_head(4, 2, 5, 7)
    out = pos_decode(h, z, head).data
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)
    # two stages, no bias, no nonlinearity
    expected = (h.data @ head["W_h"].data + z.data @ head["W_z"].data) @ head["W_out"].data
    e = np.exp(expected - expected.max(axis=-1, keepdims=True))
    np.testing.assert_allclose(out, e / e.sum(axis=-1, keepdims=True), rtol=1e-12)
    sharper = dict(head, W_out=Tensor(head["W_out"].data * 3.0))
    sharp = pos_decode(h, z, sharper).data
    assert np.array_equal(sharp.argmax(axis=-1), out.argmax(axis=-1))
    assert np.all(sharp.max(axis=-1) >= out.max(axis=-1))
    with pytest.raises(ValueError):
        pos_decode(Tensor(rand((3, 5), 1)), z, head)


def _word_head(h, D, V, seed, zero=False):
    f = (lambda s, k: Tensor(np.zeros(s))) if zero else (lambda s, k: Tensor(rand(s, seed + k)))
    return {"W_h": f((h, h), 0), "W_z": f((D, h), 1), "W_pos": f((12, h), 2), "W_out": f((h, V), 3)}


def test_word_decode_examples():
    h, z = Tensor(rand((2, 4), 1)), Tensor(rand((2, 3), 2))
    pos_a, pos_b = random_probs((2, 12), 3), random_probs((2, 12), 4)
    np.testing.assert_allclose(word_decode(h, z, pos_a, _word_head(4, 3, 9, 0, zero=True)).data, 1 / 9)
    head = _word_head(4, 3, 9, 5)
    head["W_pos"] = Tensor(np.zeros((12, 4)))
    assert np.array_equal(word_decode(h, z, pos_a, head).data, word_decode(h, z, pos_b, head).data)
    head = _word_head(4, 3, 9, 5)
    assert not np.array_equal(word_decode(h, z, pos_a, head).data, word_decode(h, z, pos_b, head).data)


def test_word_loss_reaches_pos_head():
    h, z = Tensor(rand((2, 4), 1)), Tensor(rand((2, 3), 2))
    ph = _pos_head(4, 3, 5, 3)
    for t in ph.values():
        t.requires_grad = True
    probs = word_decode(h, z, pos_decode(h, z, ph), _word_head(4, 3, 9, 5))
    backward(word_loss(probs, np.array([1, 7])))
    assert np.abs(ph["W_h"].grad).max() > 0


def test_pos_loss_examples():
    uniform = Tensor(np.full((5, 12), 1 / 12))
    assert pos_loss(uniform, np.arange(5)).item() == pytest.approx(12.4245, abs=1e-4)
    perfect = Tensor(np.eye(12)[[2, 3]])
    assert pos_loss(perfect, np.array([2, 3])).item() == pytest.approx(0.0, abs=1e-10)
    assert pos_loss(Tensor(np.zeros((0, 12))), np.zeros(0, dtype=int)).item() == 0.0
    with pytest.raises(ValueError):
        pos_loss(uniform, np.arange(4))


def test_word_loss_examples():
    uniform = Tensor(np.full((20, 38), 1 / 38))
    assert word_loss(uniform, np.zeros(20, dtype=int)).item() == pytest.approx(20 * math.log(38), rel=1e-9)
    assert 20 * math.log(38) == pytest.approx(72.75, abs=0.005)
    # batched: per-caption sum averaged over the batch
    batch = Tensor(np.full((3, 20, 38), 1 / 38))
    assert word_loss(batch, np.zeros((3, 20), dtype=int)).item() == pytest.approx(20 * math.log(38))


@given(st.integers(0, 10 ** 6), st.floats(0.01, 0.9))
def test_word_loss_monotone_toward_truth(seed, frac):
    probs = random_probs((6, 7), seed).data
    truth = np.array(SplitMix64(seed).permutation(7)[:6])
    k = int(seed % 6)
    moved = probs.copy()
    take = frac * (1 - moved[k, truth[k]])
    others = [j for j in range(7) if j != truth[k]]
    moved[k, others] *= 1 - take / moved[k, others].sum()
    moved[k, truth[k]] += take
    assert word_loss(Tensor(moved), truth).item() < word_loss(Tensor(probs), truth).item()


def test_word_loss_equals_bruteforce_on_clips():
    clips = [make_clip(s, F=3, G=2, D=4, max_len=16) for s in range(3)]
    vocab = build_vocab([c.caption for c in clips])
    model = CommentaryModel(ModelDims(len(vocab), 3, 2, 4, 16, d_h=6, d_p=5, d_e=5), vocab, seed=2)
    batch = Batch.from_clips(clips, vocab)
    losses = model.losses(batch)
    probs = model.last_outputs[2].data
    brute = sum(-math.log(probs[b, k, batch.targets[b, k]] + 1e-12)
                for b in range(3) for k in range(16)) / 3
    assert losses["L_g"].item() == pytest.approx(brute, rel=1e-12)


def _full(ids, V=6, K=None):
    probs = np.zeros((len(ids), V))
    probs[np.arange(len(ids)), ids] = 1.0
    return Tensor(probs)


def test_null_penalty_examples():
    three = _full([NULL_ID, NULL_ID, NULL_ID, 4])
    assert null_penalty(three, 4.0).item() == 12.0
    assert null_penalty(three, 0.0).item() == 0.0


@given(st.integers(0, 10 ** 6), st.floats(1e-3, 0.5))
def test_null_penalty_strictly_increasing(seed, delta):
    probs = random_probs((5, 6), seed).data
    k = int(seed % 5)
    more = probs.copy()
    shift = delta * more[k, 4]
    more[k, 4] -= shift
    more[k, NULL_ID] += shift
    assert null_penalty(Tensor(more), 4.0).item() > null_penalty(Tensor(probs), 4.0).item()
    assert null_penalty(Tensor(probs), 4.0).item() == pytest.approx(4.0 * probs[:, NULL_ID].sum(), rel=1e-12)


def test_structure_penalty_examples():
    ok = _full([START_ID, 4, SEP_ID, 5, END_ID, NULL_ID])
    assert structure_penalty(ok, 50.0).item() == 0.0
    two_end = _full([START_ID, 4, SEP_ID, END_ID, END_ID, NULL_ID])
    assert structure_penalty(two_end, 50.0).item() == 50.0
    no_sep = _full([START_ID, 4, 4, 5, END_ID, NULL_ID])
    assert structure_penalty(no_sep, 50.0).item() == 50.0
    assert expected_counts(two_end).data.tolist() == [1.0, 1.0, 2.0]


@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_structure_penalty_piecewise_linear(e1, e2):
    # one position holds e/2 of <END> mass at two positions; the penalty is 50|e - 1|
    def pen(e):
        probs = np.zeros((4, 6))
        probs[0, START_ID] = probs[1, SEP_ID] = 1.0
        probs[2, END_ID] = probs[3, END_ID] = e / 2 if e <= 2 else 1.0
        probs[2, 4] = 1 - probs[2, END_ID]
        probs[3, 4] = 1 - probs[3, END_ID]
        return structure_penalty(Tensor(probs), 50.0).item(), probs[:, END_ID].sum()
    for e in (e1, e2):
        value, count = pen(e)
        assert value == pytest.approx(50 * abs(count - 1), abs=1e-12)


def test_total_loss_examples():
    assert total_loss(10.0, 20.0, 1.0, 2.0, 0.3) == pytest.approx(16.0, abs=1e-12)
    assert total_loss(10.0, 20.0, 0.0, 0.0, 1.0) == 20.0
    assert total_loss(10.0, 20.0, 0.0, 0.0, 0.0) == 10.0


def test_hard_counts_match_scan():
    probs = random_probs((3, 9, 6), 11, scale=8.0)
    counts = hard_counts(probs)
    tokens = ["<NULL>", "<START>", "<END>", "<sep>", "a", "b"]
    scan = {t: 0 for t in tokens[:4]}
    for row in probs.data.argmax(axis=-1):
        for tok, n in count_special([tokens[i] for i in row]).items():
            scan[tok] += n
    assert counts == scan


class _ScriptedHeads(generator._Heads):
    """Heads whose word distribution is scripted by the previous token."""

    script = {}

    def step(self, x, h, c, contexts, proj, pos_feed):
        h, c, beta, o_pos, o = super().step(x, h, c, contexts, proj, pos_feed)
        prev = np.where(np.abs(x.data).sum(axis=-1) == 0, -1, x.data.argmax(axis=-1))
        forced = np.zeros(o.shape)
        for b, p in enumerate(prev):
            forced[b, self.script[int(p)]] = 1.0
        return h, c, beta, o_pos, Tensor(forced)


def test_greedy_decode_forced_path(monkeypatch):
    clips = [make_clip(s, F=3, G=2, D=4, max_len=16) for s in range(2)]
    vocab = build_vocab([c.caption for c in clips])
    V = len(vocab)
    model = CommentaryModel(ModelDims(V, 3, 2, 4, 16, d_h=4, d_p=3, d_e=V), vocab, seed=0)
    model.store["gen.embed"].data = np.eye(V)
    a = vocab.id("car")
    _ScriptedHeads.script = {-1: START_ID, START_ID: a, a: END_ID, END_ID: NULL_ID, NULL_ID: NULL_ID}
    monkeypatch.setattr(generator, "_Heads", _ScriptedHeads)
    out = greedy_decode(model, clips)
    assert [d.tokens for d in out] == [["<START>", "car", "<END>"]] * 2
    assert out[0].betas.shape == (3, 3) and out[0].alphas.shape == (3, 4)


def test_greedy_decode_deterministic_and_bounded():
    clips = [make_clip(s, F=3, G=2, D=4, max_len=16) for s in range(4)]
    vocab = build_vocab([c.caption for c in clips])
    model = CommentaryModel(ModelDims(len(vocab), 3, 2, 4, 16, d_h=6, d_p=5, d_e=5), vocab, seed=3)
    a, b = greedy_decode(model, clips), greedy_decode(model, clips)
    assert [d.tokens for d in a] == [d.tokens for d in b]
    assert all(len(d.tokens) <= 16 for d in a)
    assert all(len(d.tokens) <= 5 for d in greedy_decode(model, clips, max_len=5))
    single = greedy_decode(model, clips[0])
    assert single.tokens == a[0].tokens
    np.testing.assert_allclose(single.betas.sum(axis=-1), 1.0, atol=1e-12)


@given(arrays(np.float64, (2, 5, 7), elements=st.floats(-20, 20)))
def test_standard_reduction_exact(logits):
    probs = softmax(Tensor(logits), axis=-1)
    truth = np.arange(10).reshape(2, 5) % 7
    tags = np.zeros((2, 5), dtype=int)
    pos = softmax(Tensor(logits[..., :6] * 0 + 1), axis=-1)
    w = LossWeights(0.0, 0.0, 0.0)
    lg = word_loss(probs, truth)
    total = total_loss(lg, pos_loss(pos, tags), null_penalty(probs, w.gamma_null),
                       structure_penalty(probs, w.gamma_other), w.lambda_pos)
    assert abs(total.item() - lg.item()) <= 1e-12
