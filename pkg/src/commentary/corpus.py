"""Tokenization, vocabulary, caption encoding and part-of-speech tagging.

Captions follow the structured syntax

    <START> description words <sep> explanation words <END> <NULL> ...

with ``<NULL>`` padding up to a fixed maximum length.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

NULL, START, END, SEP = "<NULL>", "<START>", "<END>", "<sep>"
SPECIAL_TOKENS = (NULL, START, END, SEP)
NULL_ID, START_ID, END_ID, SEP_ID = range(4)

# Universal tagset. PUNCT is spelled "." as in the NLTK universal mapping.
PUNCT = "."
TAGSET = ("ADJ", "ADP", "ADV", "CONJ", "DET", "NOUN", "NUM", "PRT", "PRON", "VERB", PUNCT, "X")
TAG_INDEX = {t: i for i, t in enumerate(TAGSET)}


class CaptionError(ValueError):
    pass


def tokenize(text):
    """Whitespace tokenization; words are lowercased, special tokens kept verbatim."""
    return [tok if tok in SPECIAL_TOKENS else tok.lower() for tok in text.split()]


@dataclass
class Vocab:
    tokens: list = field(default_factory=lambda: list(SPECIAL_TOKENS))

    def __post_init__(self):
        if tuple(self.tokens[:4]) != SPECIAL_TOKENS:
            raise CaptionError("vocabulary must start with the four special tokens")
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise CaptionError("duplicate token in vocabulary")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def id(self, token):
        try:
            return self.index[token]
        except KeyError:
            raise CaptionError(f"unknown token {token!r}") from None


def build_vocab(corpus):
    """Vocabulary over token sequences: specials at ids 0-3, then words in first-seen order."""
    if not corpus:
        raise CaptionError("cannot build a vocabulary from an empty corpus")
    tokens = list(SPECIAL_TOKENS)
    seen = set(tokens)
    for caption in corpus:
        for tok in getattr(caption, "tokens", caption):
            if tok not in seen:
                seen.add(tok)
                tokens.append(tok)
    return Vocab(tokens)


@dataclass(frozen=True)
class Caption:
    """Unpadded caption tokens (including <START>/<sep>/<END>) and the padded length."""

    tokens: tuple
    max_len: int

    @classmethod
    def from_text(cls, text, max_len):
        return cls(tuple(tokenize(text)), max_len)

    @property
    def padded(self):
        if len(self.tokens) > self.max_len:
            raise CaptionError(f"caption has {len(self.tokens)} tokens, max_len is {self.max_len}")
        return list(self.tokens) + [NULL] * (self.max_len - len(self.tokens))

    @property
    def text(self):
        return " ".join(self.tokens)


def encode(tokens, vocab, max_len):
    if len(tokens) > max_len:
        raise CaptionError(f"caption has {len(tokens)} tokens, max_len is {max_len}")
    ids = [vocab.id(t) for t in tokens]
    return ids + [NULL_ID] * (max_len - len(ids))


def decode(ids, vocab, strip_padding=True):
    tokens = [vocab.tokens[i] for i in ids]
    if strip_padding:
        while tokens and tokens[-1] == NULL:
            tokens.pop()
    return tokens


class Parts(NamedTuple):
    description: list
    explanation: list
    flags: tuple = ()


def split_parts(tokens):
    """Split a caption into description and explanation.

    Malformed captions are not rejected: the offending structure is reported
    in ``flags`` ("missing_start", "missing_sep", "missing_end").
    """
    tokens = list(tokens)
    flags = []
    if START in tokens:
        begin = tokens.index(START) + 1
    else:
        begin = 0
        flags.append("missing_start")
    if END in tokens[begin:]:
        stop = tokens.index(END, begin)
    else:
        stop = len(tokens)
        flags.append("missing_end")
    body = tokens[begin:stop]
    if SEP in body:
        cut = body.index(SEP)
        return Parts(body[:cut], body[cut + 1:], tuple(flags))
    flags.append("missing_sep")
    return Parts(body, [], tuple(flags))


def strip_special(tokens):
    return [t for t in tokens if t not in SPECIAL_TOKENS]


def count_special(tokens):
    counts = dict.fromkeys(SPECIAL_TOKENS, 0)
    for t in tokens:
        if t in counts:
            counts[t] += 1
    return counts


# Closed-class words plus the open-class words of the driving domain that
# the suffix rules would mis-tag (e.g. "bus" ending in -s).
CLOSED_CLASS = {
    "DET": "the a an this that these those every each some any no another",
    "PRON": "it he she they we you i me him her them us its his their our your itself",
    "ADP": "on in at to from of by with into onto for behind ahead near towards toward across "
           "over under through because after before since until along past around",
    "CONJ": "and or but nor so yet",
    "PRT": "not up out down off away",
    "NUM": "one two three four five six seven eight nine ten zero",
    "VERB": "is are was were be been being am has have had do does did can will would should "
            "must may might could",
    "ADV": "also very too then there here now again just still slowly quickly",
    "ADJ": "left right opposite red green yellow amber constant safe clear",
    "NOUN": "car bus van cyclist pedestrian lane traffic light ego's road speed vehicle lights "
            "truck lanes",
}
DEFAULT_LEXICON = {w: tag for tag, words in CLOSED_CLASS.items() for w in words.split()}


def _tag_word(word, lexicon):
    if word in lexicon:
        return lexicon[word]
    if not any(ch.isalnum() for ch in word):
        return PUNCT if all(ch in ".,;:!?-'\"()" for ch in word) else "X"
    if word.replace(".", "", 1).replace(",", "").isdigit():
        return "NUM"
    if word.endswith("ly"):
        return "ADV"
    if word.endswith(("ing", "ed", "s")):
        return "VERB"
    if not word.replace("'", "").replace("-", "").isalpha():
        return "X"
    return "NOUN"


def pos_tag(tokens, tagset=TAGSET, lexicon=None):
    """Tag every token with a universal-tagset tag.

    Special tokens are first replaced by ";" so they come out uniformly as
    punctuation.  ``lexicon`` maps words to tags and overrides the suffix rules.
    """
    lexicon = DEFAULT_LEXICON if lexicon is None else lexicon
    tags = []
    for tok in tokens:
        word = ";" if tok in SPECIAL_TOKENS else tok
        tag = _tag_word(word, lexicon)
        if tag not in tagset:
            tag = "X"
        tags.append(tag)
    return tags


def tag_ids(tags):
    return [TAG_INDEX[t] for t in tags]


def read_captions(path):
    """Caption corpus file: one caption per line, tokens separated by spaces."""
    with open(path, encoding="utf-8") as fh:
        return [tokenize(line) for line in fh if line.strip()]


def write_captions(path, captions: Sequence[Sequence[str]]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tokens in captions:
            fh.write(" ".join(tokens) + "\n")
