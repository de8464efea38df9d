"""Corpus-level BLEU (single reference, unsmoothed)."""

import math
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple


class ClippedPrecision(NamedTuple):
    matches: int
    total: int

    @property
    def empty(self):
        return self.total == 0

    @property
    def value(self):
        return self.matches / self.total if self.total else 0.0


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def clipped_precision(candidates, references, n):
    """Corpus-aggregated clipped n-gram matches over candidate n-gram count."""
    if len(candidates) != len(references):
        raise ValueError("candidate and reference lists differ in length")
    matches = total = 0
    for cand, ref in zip(candidates, references):
        c, r = ngrams(cand, n), ngrams(ref, n)
        matches += sum(min(count, r[g]) for g, count in c.items())
        total += sum(c.values())
    return ClippedPrecision(matches, total)


def brevity_penalty(c_len, r_len):
    if c_len <= 0:
        return 0.0
    return 1.0 if c_len >= r_len else math.exp(1.0 - r_len / c_len)


@dataclass
class BleuResult:
    precisions: list  # ClippedPrecision per order 1..max_order
    brevity_penalty: float
    score: float  # percentage
    c_len: int
    r_len: int
    flags: tuple = ()


def corpus_bleu(candidates, references, max_order=4):
    if not candidates:
        raise ValueError("BLEU of an empty corpus is undefined")
    if len(candidates) != len(references):
        raise ValueError("candidate and reference lists differ in length")
    precisions = [clipped_precision(candidates, references, n) for n in range(1, max_order + 1)]
    c_len = sum(len(c) for c in candidates)
    r_len = sum(len(r) for r in references)
    flags = [f"empty_order_{n}" for n, p in enumerate(precisions, 1) if p.empty]
    if c_len == 0:
        flags.append("empty_candidates")
    bp = brevity_penalty(c_len, r_len)
    if c_len == 0 or any(p.matches == 0 for p in precisions):
        score = 0.0
    else:
        log_mean = sum(math.log(p.value) for p in precisions) / max_order
        score = 100.0 * bp * math.exp(log_mean)
    return BleuResult(precisions, bp, score, c_len, r_len, tuple(flags))
