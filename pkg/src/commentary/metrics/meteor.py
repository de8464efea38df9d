"""Sentence METEOR with exact unigram matching.

Alignment maximises the number of matched unigrams and, among maximal
alignments, minimises the number of chunks (runs of matches contiguous in both
sentences).  Short sentences are aligned exactly; longer ones greedily by
repeatedly taking the longest common run of unaligned tokens.
"""

from dataclasses import dataclass

ALPHA = 0.9
BETA = 3.0
GAMMA = 0.5
EXACT_LIMIT = 8


@dataclass
class MeteorResult:
    precision: float = 0.0
    recall: float = 0.0
    fmean: float = 0.0
    matches: int = 0
    chunks: int = 0
    penalty: float = 0.0
    score: float = 0.0


def count_chunks(alignment):
    """Chunks of an alignment given as (candidate_index, reference_index) pairs."""
    pairs = sorted(alignment)
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def align_greedy(cand, ref):
    """Longest-common-run-first alignment (leftmost run on ties)."""
    free_c = [True] * len(cand)
    free_r = [True] * len(ref)
    alignment = []
    while True:
        best = (0, 0, 0)  # length, i, j
        for i in range(len(cand)):
            if not free_c[i]:
                continue
            for j in range(len(ref)):
                k = 0
                while (i + k < len(cand) and j + k < len(ref) and free_c[i + k] and free_r[j + k]
                       and cand[i + k] == ref[j + k]):
                    k += 1
                if k > best[0]:
                    best = (k, i, j)
        k, i, j = best
        if k == 0:
            return alignment
        for d in range(k):
            free_c[i + d] = free_r[j + d] = False
            alignment.append((i + d, j + d))


def align_exact(cand, ref):
    """Maximum-match, minimum-chunk alignment by branch and bound over candidate positions."""
    positions = {}
    for j, w in enumerate(ref):
        positions.setdefault(w, []).append(j)
    order = [i for i, w in enumerate(cand) if w in positions]
    # every maximal alignment matches min(count_c, count_r) of each word
    target = sum(min(sum(1 for w2 in cand if w2 == w), len(js)) for w, js in positions.items())
    best = [None, len(cand) + 1]
    used = set()
    current = []

    def chunks_so_far():
        return count_chunks(current)

    def search(k, remaining_skips):
        if best[1] == 1 or chunks_so_far() >= best[1]:
            return
        if k == len(order):
            if len(current) == target:
                best[0], best[1] = list(current), chunks_so_far()
            return
        i = order[k]
        for j in positions[cand[i]]:
            if j not in used:
                used.add(j)
                current.append((i, j))
                search(k + 1, remaining_skips)
                current.pop()
                used.discard(j)
        if remaining_skips[cand[i]] > 0:
            remaining_skips[cand[i]] -= 1
            search(k + 1, remaining_skips)
            remaining_skips[cand[i]] += 1

    skips = {}
    for w in set(cand[i] for i in order):
        skips[w] = max(0, sum(1 for i in order if cand[i] == w) - len(positions[w]))
    search(0, skips)
    return best[0] or []


def align(cand, ref):
    if max(len(cand), len(ref)) <= EXACT_LIMIT:
        return align_exact(cand, ref)
    return align_greedy(cand, ref)


def meteor_from_alignment(cand, ref, alignment):
    m = len(alignment)
    if m == 0 or not cand or not ref:
        return MeteorResult()
    p = m / len(cand)
    r = m / len(ref)
    fmean = p * r / (ALPHA * p + (1 - ALPHA) * r)
    ch = count_chunks(alignment)
    penalty = GAMMA * (ch / m) ** BETA
    return MeteorResult(p, r, fmean, m, ch, penalty, fmean * (1 - penalty))


def meteor_sentence(candidate, reference):
    return meteor_from_alignment(candidate, reference, align(candidate, reference))


def corpus_meteor(candidates, references):
    """Macro-average of sentence METEOR scores, as a percentage."""
    if not candidates:
        raise ValueError("METEOR of an empty corpus is undefined")
    if len(candidates) != len(references):
        raise ValueError("candidate and reference lists differ in length")
    total = sum(meteor_sentence(c, r).score for c, r in zip(candidates, references))
    return 100.0 * total / len(candidates)
