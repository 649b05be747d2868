"""Beam-search and greedy inference from code tokens to question titles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import LOGPROB_FLOOR, decode_step, encode
from .vocab import END, START, UNK_TOKEN, decode_ids, encode_source


@dataclass
class Hypothesis:
    token_ids: list            # extended ids emitted so far (no START)
    logprob: float
    state: object              # decoder (hidden, cell)
    cov: object                # coverage vector (Tensor) or None
    finished: bool = False
    attn: list = field(default_factory=list)  # one np array per emitted token


@dataclass
class DecodedResult:
    tokens: list
    score: float               # length-normalized log-probability
    logprob: float
    token_ids: list
    attn: list


def _model_stepper(code_tokens, params, vocab, hyper):
    base_ids, ext_ids, ev = encode_source(code_tokens, vocab)
    enc = encode(base_ids, params, hyper)
    vocab_size = len(vocab)
    cov0 = None
    if hyper.attention:
        from .numerics import Tensor
        cov0 = Tensor(np.zeros(len(base_ids)))

    def stepper(prev_ext_id, state, cov):
        prev_base = prev_ext_id if prev_ext_id < vocab_size else 1  # UNK feedback
        step = decode_step(prev_base, state, enc, cov, ext_ids, ev, params, hyper)
        logp = np.log(np.maximum(step.p_star.data.astype(np.float64), LOGPROB_FLOOR))
        attn = step.a.data.copy() if step.a is not None else None
        return logp, step.state, step.cov_next, attn

    return stepper, enc.s0, cov0, ev


def _rank_key(hyp):
    # higher logprob first; ties by lower first-differing token id
    return (-hyp.logprob, hyp.token_ids)


def _beam(stepper, start_state, start_cov, k, max_len):
    live = [Hypothesis([], 0.0, start_state, start_cov)]
    completed = []
    for _ in range(max_len):
        if not live or len(completed) >= k:
            break
        candidates = []
        for hyp in live:
            prev = hyp.token_ids[-1] if hyp.token_ids else START
            logp, state, cov, attn = stepper(prev, hyp.state, hyp.cov)
            top = np.argsort(-logp, kind="stable")[:k]
            for tid in top:
                tid = int(tid)
                candidates.append(Hypothesis(
                    token_ids=hyp.token_ids + [tid],
                    logprob=hyp.logprob + float(logp[tid]),
                    state=state, cov=cov,
                    finished=(tid == END),
                    attn=hyp.attn + ([attn.copy()] if attn is not None else [None])))
        candidates.sort(key=_rank_key)
        live = []
        for hyp in candidates[:k]:
            (completed if hyp.finished else live).append(hyp)
    pool = completed + live  # unterminated hypotheses kept, truncated
    pool.sort(key=lambda h: (-(h.logprob / max(1, len(h.token_ids))), h.token_ids))
    return pool


def beam_search(code_tokens, params, vocab, hyper, k=10, max_len=None):
    """Ranked decoded sequences; ranking by length-normalized log-probability."""
    if not code_tokens:
        raise ValueError("beam_search: empty code token sequence")
    if k < 1:
        raise ValueError("beam size must be >= 1")
    max_len = max_len or hyper.max_decode_len
    stepper, s0, cov0, ev = _model_stepper(code_tokens, params, vocab, hyper)
    pool = _beam(stepper, s0, cov0, k, max_len)
    results = []
    for hyp in pool:
        tokens = decode_ids(hyp.token_ids, vocab, ev)
        results.append(DecodedResult(tokens=tokens,
                                     score=hyp.logprob / max(1, len(hyp.token_ids)),
                                     logprob=hyp.logprob,
                                     token_ids=list(hyp.token_ids),
                                     attn=list(hyp.attn)))
    return results


def greedy_decode_full(code_tokens, params, vocab, hyper, max_len=None):
    """(tokens, attention records): argmax of p_star at every step."""
    if not code_tokens:
        raise ValueError("greedy_decode: empty code token sequence")
    max_len = max_len or hyper.max_decode_len
    stepper, state, cov, ev = _model_stepper(code_tokens, params, vocab, hyper)
    ids, attns = [], []
    prev = START
    for _ in range(max_len):
        logp, state, cov, attn = stepper(prev, state, cov)
        tid = int(np.argmax(logp))
        ids.append(tid)
        attns.append(attn)
        if tid == END:
            break
        prev = tid
    tokens = decode_ids(ids, vocab, ev)
    return tokens, attns[:len(tokens)] if END in ids else attns


def greedy_decode(code_tokens, params, vocab, hyper, max_len=None):
    return greedy_decode_full(code_tokens, params, vocab, hyper, max_len)[0]


def resolve_unk(tokens, attn_records, source_tokens):
    """Replace each "<unk>" with the source token holding the most attention
    at that step; for no-copy ablations."""
    if len(attn_records) < len(tokens):
        raise ValueError("resolve_unk: need one attention record per token")
    out = []
    for tok, attn in zip(tokens, attn_records):
        if tok == UNK_TOKEN and attn is not None:
            out.append(source_tokens[int(np.argmax(attn))])
        else:
            out.append(tok)
    return out
