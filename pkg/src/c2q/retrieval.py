"""TF-IDF retrieval baseline, embedding-sum code similarity, clone-detection
dedup of the test set, and top-k similar-question lookup."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

BUCKET_LABELS = ("[0.0,0.2)", "[0.2,0.4)", "[0.4,0.6)", "[0.6,0.8)", "[0.8,1.0]")


@dataclass
class RetrievedTitle:
    matched: bool
    doc_id: int | None = None
    title: list | None = None
    score: float = 0.0


class TfidfIndex:
    """Bag-of-words index over code tokens with smoothed idf
    (ln((N+1)/(df+1)) + 1) and L2-normalized vectors."""

    def __init__(self, docs):
        """``docs`` is a list of (id, code_tokens, title_tokens)."""
        if not docs:
            raise ValueError("TfidfIndex: no documents")
        self.n_docs = len(docs)
        df = Counter()
        for _, code, _ in docs:
            df.update(set(code))
        self.idf = {t: math.log((self.n_docs + 1) / (c + 1)) + 1.0 for t, c in df.items()}
        self.titles = {}
        self.vectors = []
        for doc_id, code, title in docs:
            self.titles[doc_id] = title
            self.vectors.append((doc_id, self._vectorize(code)))

    def _vectorize(self, tokens):
        tf = Counter(t for t in tokens if t in self.idf)
        vec = {t: c * self.idf[t] for t, c in tf.items()}
        norm = math.sqrt(sum(w * w for w in vec.values()))
        if norm == 0.0:
            return {}
        return {t: w / norm for t, w in vec.items()}

    def query(self, tokens):
        qvec = self._vectorize(tokens)
        if not qvec:
            return RetrievedTitle(matched=False)
        best_id, best_score = None, -1.0
        for doc_id, vec in self.vectors:
            score = sum(w * vec.get(t, 0.0) for t, w in qvec.items())
            if score > best_score or (score == best_score and
                                      (best_id is None or doc_id < best_id)):
                best_id, best_score = doc_id, score
        return RetrievedTitle(matched=True, doc_id=best_id,
                              title=self.titles[best_id], score=best_score)


def ir_baseline(query_code_tokens, index):
    """Title of the nearest training snippet by TF-IDF cosine; ties go to the
    lowest document id; no-match when no query token is indexed."""
    return index.query(query_code_tokens)


@dataclass
class CodeEmbedding:
    vector: np.ndarray
    zero: bool  # all tokens OOV / zero-sum: similarity undefined


def embed_code(code_tokens, E, vocab, normalize=True):
    """Sum of embedding rows for in-vocab tokens, L2-normalized by default."""
    E = np.asarray(E)
    total = np.zeros(E.shape[1], dtype=np.float64)
    for tok in code_tokens:
        idx = vocab.token_to_id.get(tok)
        if idx is not None:
            total += E[idx]
    norm = float(np.linalg.norm(total))
    if norm == 0.0:
        return CodeEmbedding(total, zero=True)
    return CodeEmbedding(total / norm if normalize else total, zero=False)


def code_similarity(c1, c2):
    """1 - Euclidean distance of the two embeddings."""
    if c1.zero or c2.zero:
        raise ValueError("code_similarity: zero-flagged embedding (all tokens OOV)")
    return 1.0 - float(np.linalg.norm(c1.vector - c2.vector))


@dataclass
class DedupReport:
    buckets: dict
    removed: int
    kept: int
    delta: float
    unembeddable: int = 0

    def as_dict(self):
        return {"buckets": dict(self.buckets), "removed": self.removed,
                "kept": self.kept, "delta": self.delta,
                "unembeddable": self.unembeddable}


def _bucket(sim):
    # negatives (possible on the unit sphere) clamp into the first bucket
    s = max(0.0, sim)
    if s >= 0.8:
        return BUCKET_LABELS[4]
    return BUCKET_LABELS[int(s / 0.2)]


def dedup_testset(train_pairs, test_pairs, E, vocab, delta=0.8, normalize=True):
    """Remove test snippets whose max similarity to any training snippet is
    >= delta. Returns (clean_test, removed, report)."""
    buckets = {label: 0 for label in BUCKET_LABELS}
    train_embs = [embed_code(p.code_tokens, E, vocab, normalize) for p in train_pairs]
    train_mat = np.stack([e.vector for e in train_embs if not e.zero]) \
        if any(not e.zero for e in train_embs) else None
    clean, removed, unembeddable = [], [], 0
    for pair in test_pairs:
        if train_mat is None:
            clean.append(pair)
            continue
        emb = embed_code(pair.code_tokens, E, vocab, normalize)
        if emb.zero:
            unembeddable += 1
            clean.append(pair)
            continue
        dists = np.linalg.norm(train_mat - emb.vector, axis=1)
        max_sim = 1.0 - float(dists.min())
        buckets[_bucket(max_sim)] += 1
        (removed if max_sim >= delta else clean).append(pair)
    report = DedupReport(buckets=buckets, removed=len(removed), kept=len(clean),
                         delta=delta, unembeddable=unembeddable)
    return clean, removed, report


def topk_similar(query_code_tokens, corpus_pairs, E, vocab, k, normalize=True):
    """k (title, similarity, id) triples, descending similarity, ties by
    lowest id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    query = embed_code(query_code_tokens, E, vocab, normalize)
    if query.zero:
        raise ValueError("topk_similar: query has no in-vocabulary tokens")
    scored = []
    for pair in corpus_pairs:
        emb = embed_code(pair.code_tokens, E, vocab, normalize)
        if emb.zero:
            continue
        scored.append((pair.title_tokens, code_similarity(query, emb), pair.id))
    scored.sort(key=lambda item: (-item[1], item[2]))
    return scored[:k]
