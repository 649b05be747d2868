"""Corpus-level BLEU-1..4 and ROUGE-1/2/L over tokenized titles."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass


@dataclass
class PRF:
    precision: float
    recall: float
    f1: float

    def as_dict(self):
        return {"p": self.precision, "r": self.recall, "f": self.f1}


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _check_corpus(candidates, references):
    if len(candidates) != len(references) or not candidates:
        raise ValueError("candidates and references must be equal-length, nonempty")


def bleu(candidates, references, n=4):
    """Corpus BLEU: clipped n-gram precisions pooled over the corpus,
    geometric mean of p_1..p_n, times brevity penalty exp(1 - r/c) when
    the candidate corpus is shorter. 0 if any pooled precision is 0."""
    _check_corpus(candidates, references)
    cand_len = ref_len = 0
    matches = [0] * n
    totals = [0] * n
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for k in range(1, n + 1):
            cgrams = _ngrams(cand, k)
            rgrams = _ngrams(ref, k)
            matches[k - 1] += sum(min(c, rgrams[g]) for g, c in cgrams.items())
            totals[k - 1] += sum(cgrams.values())
    precisions = []
    for k in range(n):
        if totals[k] == 0 or matches[k] == 0:
            return 0.0
        precisions.append(matches[k] / totals[k])
    geo = math.exp(sum(math.log(p) for p in precisions) / n)
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / max(1, cand_len))
    return geo * bp


def sentence_bleu_smoothed(candidate, reference, n=4):
    """Add-one smoothed sentence-level BLEU; debugging aid only."""
    cand_len, ref_len = len(candidate), len(reference)
    logs = []
    for k in range(1, n + 1):
        cgrams = _ngrams(candidate, k)
        rgrams = _ngrams(reference, k)
        match = sum(min(c, rgrams[g]) for g, c in cgrams.items())
        total = sum(cgrams.values())
        logs.append(math.log((match + 1) / (total + 1)))
    geo = math.exp(sum(logs) / n)
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / max(1, cand_len))
    return geo * bp


def _prf(match, cand_total, ref_total):
    p = match / cand_total if cand_total else 0.0
    r = match / ref_total if ref_total else 0.0
    f = 2 * p * r / (p + r) if (p + r) else 0.0
    return PRF(p, r, f)


def rouge_n(candidates, references, n):
    """Corpus-pooled clipped n-gram overlap precision/recall/F1."""
    _check_corpus(candidates, references)
    match = cand_total = ref_total = 0
    for cand, ref in zip(candidates, references):
        cgrams = _ngrams(cand, n)
        rgrams = _ngrams(ref, n)
        match += sum(min(c, rgrams[g]) for g, c in cgrams.items())
        cand_total += sum(cgrams.values())
        ref_total += sum(rgrams.values())
    return _prf(match, cand_total, ref_total)


def lcs_length(a, b):
    """Longest common subsequence length by dynamic programming."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidates, references):
    """Mean per-pair LCS F1 (beta = 1), with pooled-mean P and R alongside."""
    _check_corpus(candidates, references)
    ps, rs, fs = [], [], []
    for cand, ref in zip(candidates, references):
        ell = lcs_length(cand, ref)
        score = _prf(ell, len(cand), len(ref))
        ps.append(score.precision)
        rs.append(score.recall)
        fs.append(score.f1)
    n = len(fs)
    return PRF(sum(ps) / n, sum(rs) / n, sum(fs) / n)


def score_report(candidates, references):
    """Full evaluation report, JSON-serializable."""
    return {
        "bleu1": bleu(candidates, references, 1),
        "bleu2": bleu(candidates, references, 2),
        "bleu3": bleu(candidates, references, 3),
        "bleu4": bleu(candidates, references, 4),
        "rouge1": rouge_n(candidates, references, 1).as_dict(),
        "rouge2": rouge_n(candidates, references, 2).as_dict(),
        "rougeL": rouge_l(candidates, references).as_dict(),
        "pairs": len(candidates),
    }
