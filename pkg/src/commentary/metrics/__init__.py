"""BLEU and METEOR scoring of caption corpora, per description/explanation part."""

import csv
import io
from dataclasses import dataclass

from ..corpus import split_parts, strip_special
from .bleu import BleuResult, brevity_penalty, clipped_precision, corpus_bleu, ngrams
from .meteor import (MeteorResult, align, align_exact, align_greedy, corpus_meteor, count_chunks,
                     meteor_from_alignment, meteor_sentence)

PARTS = ("description", "explanation")
METRICS = ("METEOR", "BLEU")
REPORT_HEADER = ("variant", "part", "metric", "value")


@dataclass
class PartScores:
    description_meteor: float
    description_bleu: float
    explanation_meteor: float
    explanation_bleu: float
    flags: tuple = ()

    def get(self, part, metric):
        return getattr(self, f"{part}_{metric.lower()}")

    def rows(self):
        return [(part, metric, self.get(part, metric)) for part in PARTS for metric in METRICS]


def _score(cands, refs):
    if not any(cands) and not any(refs):
        return 0.0, 0.0
    return corpus_meteor(cands, refs), corpus_bleu(cands, refs).score


def score_parts(generated, truths):
    """Score generated captions against truths, description and explanation separately.

    Captions are token sequences including special tokens.  Flags record
    captions whose structure is broken, and parts that are empty.
    """
    if len(generated) != len(truths):
        raise ValueError("generated and truth corpora differ in length")
    if not generated:
        raise ValueError("cannot score an empty corpus")
    flags = []
    split_gen, split_ref = [], []
    for i, (g, t) in enumerate(zip(generated, truths)):
        pg, pt = split_parts(g), split_parts(t)
        flags.extend(f"{i}:{f}" for f in pg.flags)
        split_gen.append(pg)
        split_ref.append(pt)
    values = {}
    for k, part in enumerate(PARTS):
        cands = [strip_special(p[k]) for p in split_gen]
        refs = [strip_special(p[k]) for p in split_ref]
        flags.extend(f"{i}:empty_{part}" for i, c in enumerate(cands) if not c)
        values[part] = _score(cands, refs)
    return PartScores(values["description"][0], values["description"][1],
                      values["explanation"][0], values["explanation"][1], tuple(flags))


def report_rows(variant, scores):
    return [(variant, part, metric, f"{value:.2f}") for part, metric, value in scores.rows()]


def write_report(path, results):
    """Write ``{variant: PartScores}`` as ``variant,part,metric,value`` CSV."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for variant, scores in results.items():
        writer.writerows(report_rows(variant, scores))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


__all__ = ["BleuResult", "MeteorResult", "PartScores", "PARTS", "METRICS", "align", "align_exact",
           "align_greedy", "brevity_penalty", "clipped_precision", "corpus_bleu", "corpus_meteor",
           "count_chunks", "meteor_from_alignment", "meteor_sentence", "ngrams", "report_rows",
           "score_parts", "write_report"]
