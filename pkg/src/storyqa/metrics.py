"""Answer normalization and corpus BLEU-1/BLEU-4 and Rouge-L scoring.

Pinned definitions, no smoothing: corpus-level modified n-gram precision
with max-over-references clipping, geometric mean over orders 1..max_n,
brevity penalty exp(1 - r/c) when c <= r (r from the closest-length
reference, ties to the shorter); Rouge-L is the per-example LCS F-measure
with beta^2 = 1.2, max over the reference pair, mean over examples.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass

ROUGE_BETA_SQ = 1.2


class MetricsError(ValueError):
    """Hypothesis/reference list mismatch."""


@dataclass(frozen=True)
class MetricReport:
    bleu1: float
    bleu4: float
    rouge_l: float
    count: int

    def to_json(self) -> str:
        return json.dumps(
            {"bleu1": self.bleu1, "bleu4": self.bleu4, "rouge_l": self.rouge_l,
             "count": self.count},
            sort_keys=True,
        )

    def to_table(self) -> str:
        header = f"{'BLEU-1':>8} {'BLEU-4':>8} {'Rouge-L':>8} {'N':>6}"
        row = f"{self.bleu1:8.4f} {self.bleu4:8.4f} {self.rouge_l:8.4f} {self.count:6d}"
        return header + "\n" + row


def normalize_answer(text: str) -> str:
    """Lowercase, collapse repeated whitespace, strip one trailing full stop."""
    out = " ".join(text.lower().split())
    if out.endswith("."):
        out = out[:-1].rstrip()
    return out


def _ngram_counts(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses, reference_pairs, max_n: int) -> float:
    """Corpus-level BLEU over whitespace tokens of already-normalized strings."""
    if len(hypotheses) != len(reference_pairs):
        raise MetricsError(
            f"bleu: {len(hypotheses)} hypotheses vs {len(reference_pairs)} reference sets"
        )
    clipped = [0] * max_n
    totals = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, refs in zip(hypotheses, reference_pairs):
        h = hyp.split()
        rs = [r.split() for r in refs]
        hyp_len += len(h)
        ref_len += min((abs(len(r) - len(h)), len(r)) for r in rs)[1]
        for n in range(1, max_n + 1):
            counts = _ngram_counts(h, n)
            best = Counter()
            for r in rs:
                rc = _ngram_counts(r, n)
                for g, c in rc.items():
                    if c > best[g]:
                        best[g] = c
            clipped[n - 1] += sum(min(c, best[g]) for g, c in counts.items())
            totals[n - 1] += max(0, len(h) - n + 1)
    if hyp_len == 0 or any(c == 0 for c in clipped) or any(t == 0 for t in totals):
        return 0.0
    log_prec = sum(math.log(c / t) for c, t in zip(clipped, totals)) / max_n
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_prec)


def _lcs_length(a, b):
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(hypotheses, reference_pairs) -> float:
    """Mean over examples of the max-over-references LCS F-measure."""
    if len(hypotheses) != len(reference_pairs):
        raise MetricsError(
            f"rouge_l: {len(hypotheses)} hypotheses vs {len(reference_pairs)} reference sets"
        )
    if not hypotheses:
        return 0.0
    total = 0.0
    for hyp, refs in zip(hypotheses, reference_pairs):
        h = hyp.split()
        best = 0.0
        for ref in refs:
            r = ref.split()
            lcs = _lcs_length(h, r)
            if lcs == 0:
                continue
            prec = lcs / len(h)
            rec = lcs / len(r)
            f = (1.0 + ROUGE_BETA_SQ) * prec * rec / (rec + ROUGE_BETA_SQ * prec)
            best = max(best, f)
        total += best
    return total / len(hypotheses)


def score_corpus(hypotheses, reference_pairs) -> MetricReport:
    """Normalize everything, then score BLEU-1, BLEU-4 and Rouge-L."""
    hyps = [normalize_answer(h) for h in hypotheses]
    refs = [tuple(normalize_answer(r) for r in pair) for pair in reference_pairs]
    return MetricReport(
        bleu1=bleu(hyps, refs, 1),
        bleu4=bleu(hyps, refs, 4),
        rouge_l=rouge_l(hyps, refs),
        count=len(hyps),
    )
