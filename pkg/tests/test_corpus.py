import pytest
from hypothesis import given, strategies as st

from commentary.corpus import (END, NULL, PUNCT, SEP, SPECIAL_TOKENS, START, TAGSET, Caption,
                               CaptionError, Vocab, build_vocab, count_special, decode, encode,
                               pos_tag, read_captions, split_parts, strip_special, tag_ids, tokenize,
                               write_captions)

EXAMPLE = ("<START> the car accelerates to a constant speed <sep> because the light has turned green "
           "<END> <NULL> <NULL> <NULL> <NULL> <NULL> <NULL>")

words = st.sampled_from("a b car is stopping lane the left because on light green".split())
interiors = st.lists(words, max_size=6)


@st.composite
def captions(draw):
    desc, expl = draw(interiors), draw(interiors)
    return [START] + desc + [SEP] + expl + [END]


def test_special_ids_fixed():
    vocab = build_vocab([["x"]])
    assert [vocab.id(t) for t in (NULL, START, END, SEP)] == [0, 1, 2, 3]
    assert vocab.id("x") == 4


def test_tokenize_examples():
    assert tokenize("The car") == ["the", "car"]
    assert tokenize("<START> a <END>") == ["<START>", "a", "<END>"]
    assert len(tokenize("Car is stopping because pedestrian is crossing on ego's lane")) == 10
    assert tokenize("") == []
    assert tokenize("  <sep>  Because ") == ["<sep>", "because"]


def test_build_vocab_examples():
    vocab = build_vocab([["a", "b", "a"]])
    assert len(vocab) == 6
    assert vocab == build_vocab([["a", "b", "a"]])
    assert vocab.tokens[4:] == ["a", "b"]
    with pytest.raises(CaptionError):
        build_vocab([])


def test_vocab_rejects_bad_layout():
    with pytest.raises(CaptionError):
        Vocab(["a", "b"])
    with pytest.raises(CaptionError):
        Vocab(list(SPECIAL_TOKENS) + ["x", "x"])


def test_encode_padding():
    vocab = build_vocab([["a", "b", "c"]])
    ids = encode([START, "a", "b", "c", END], vocab, 8)
    assert ids[-3:] == [0, 0, 0] and len(ids) == 8
    assert encode([START, "a", "b", "c", END], vocab, 5) == [1, 4, 5, 6, 2]


def test_encode_errors_name_problem():
    vocab = build_vocab([["a"]])
    with pytest.raises(CaptionError, match="'zzz'"):
        encode(["zzz"], vocab, 4)
    with pytest.raises(CaptionError, match="3"):
        encode(["a", "a", "a"], vocab, 2)


def test_structured_example_caption():
    tokens = tokenize(EXAMPLE)
    body = [t for t in tokens if t != NULL]
    cap = Caption(tuple(body), len(tokens))
    assert cap.padded.count(NULL) == 6
    desc, expl, flags = split_parts(tokens)
    assert " ".join(desc) == "the car accelerates to a constant speed"
    assert " ".join(expl) == "because the light has turned green"
    assert flags == ()
    assert count_special(tokens) == {NULL: 6, START: 1, END: 1, SEP: 1}


def test_split_parts_examples():
    assert split_parts([START, "a", "b", SEP, "c", "d", END])[:2] == (["a", "b"], ["c", "d"])
    desc, expl, flags = split_parts([START, "a", "b", END])
    assert (desc, expl) == (["a", "b"], []) and "missing_sep" in flags
    desc, expl, flags = split_parts([START, "a", SEP, "b"])
    assert (desc, expl) == (["a"], ["b"]) and "missing_end" in flags
    assert "missing_start" in split_parts(["a", SEP, "b", END]).flags


def test_pos_tag_examples():
    assert pos_tag(["the"]) == ["DET"]
    assert pos_tag(["<sep>"]) == [PUNCT]
    assert pos_tag(["stopping"]) == ["VERB"]
    assert pos_tag(["slowly", "7", "@@", "lane", "crossing"]) == ["ADV", "NUM", "X", "NOUN", "VERB"]


def test_pos_tag_custom_lexicon():
    assert pos_tag(["bus"], lexicon={}) == ["VERB"]  # suffix rule without the domain lexicon
    assert pos_tag(["bus"]) == ["NOUN"]
    assert pos_tag(["x"], lexicon={"x": "ADJ"}) == ["ADJ"]


def test_count_special_examples():
    assert count_special(["a", "b"]) == dict.fromkeys(SPECIAL_TOKENS, 0)
    assert count_special([END, END])[END] == 2


def test_tagset_fixed():
    assert len(TAGSET) == 12 and TAGSET[10] == "."
    assert tag_ids(["ADJ", "X"]) == [0, 11]


@given(captions(), st.integers(min_value=0, max_value=4))
def test_encode_decode_round_trip(tokens, extra):
    vocab = build_vocab([tokens])
    ids = encode(tokens, vocab, len(tokens) + extra)
    assert decode(ids, vocab) == tokens
    assert decode(ids, vocab, strip_padding=False)[len(tokens):] == [NULL] * extra


@given(captions())
def test_split_reconstructs_interior(tokens):
    desc, expl, flags = split_parts(tokens)
    assert desc + [SEP] + expl == tokens[1:-1]
    assert flags == ()


@given(st.lists(st.sampled_from(list(SPECIAL_TOKENS) + ["a", "the", "runs", "!!", "42"]), max_size=30))
def test_tag_and_count_properties(tokens):
    tags = pos_tag(tokens)
    assert len(tags) == len(tokens) and set(tags) <= set(TAGSET)
    assert all(tag == PUNCT for tok, tag in zip(tokens, tags) if tok in SPECIAL_TOKENS)
    scan = {s: 0 for s in SPECIAL_TOKENS}
    for t in tokens:
        if t in scan:
            scan[t] += 1
    assert count_special(tokens) == scan
    assert strip_special(tokens) == [t for t in tokens if t not in SPECIAL_TOKENS]


def test_caption_file_round_trip(tmp_path):
    caps = [tokenize(EXAMPLE), ["<START>", "a", "<sep>", "b", "<END>"]]
    path = tmp_path / "caps.txt"
    write_captions(path, caps)
    assert read_captions(path) == caps
    assert path.read_text(encoding="utf-8").splitlines()[1] == "<START> a <sep> b <END>"


def test_caption_overflow():
    with pytest.raises(CaptionError):
        Caption(("a", "b", "c"), 2).padded
