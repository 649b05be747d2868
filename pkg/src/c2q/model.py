"""Attention + copy + coverage encoder-decoder.

Encoder: two-layer bidirectional LSTM over token embeddings. Decoder: a
single-layer LSTM whose initial state comes from a learned tanh bridge over
the concatenated final forward/backward encoder states. Each decode step
produces an attention distribution over source positions (optionally
conditioned on a coverage vector), a context vector, a vocabulary softmax,
a copy gate, and the mixture distribution over the extended vocabulary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .numerics import Tensor
from .vocab import END, START, UNK

LOGPROB_FLOOR = 1e-12

ABLATION_FLAGS = frozenset({"attention", "copy", "coverage"})

ABLATION_PRESETS = {
    "basic": frozenset(),
    "atten": frozenset({"attention"}),
    "atten+copy": frozenset({"attention", "copy"}),
    "atten+coverage": frozenset({"attention", "coverage"}),
    "full": frozenset({"attention", "copy", "coverage"}),
}


@dataclass
class Hyperparams:
    embed_dim: int = 300
    hidden: int = 256
    vocab_min_freq: int = 1
    lambda_cov: float = 1.0
    ablation: frozenset = ABLATION_PRESETS["full"]
    max_decode_len: int = 16

    def __post_init__(self):
        self.ablation = frozenset(self.ablation)
        unknown = self.ablation - ABLATION_FLAGS
        if unknown:
            raise ValueError(f"unknown ablation flags: {sorted(unknown)}")
        if "copy" in self.ablation and "attention" not in self.ablation:
            raise ValueError("copy requires attention")
        if "coverage" in self.ablation and "attention" not in self.ablation:
            raise ValueError("coverage requires attention")
        if self.lambda_cov < 0:
            raise ValueError("lambda_cov must be >= 0")

    @property
    def attention(self):
        return "attention" in self.ablation

    @property
    def copy(self):
        return "copy" in self.ablation

    @property
    def coverage(self):
        return "coverage" in self.ablation


class Parameters:
    """Named learnable tensors; iteration order is fixed by insertion."""

    def __init__(self, tensors):
        self.tensors = dict(tensors)

    def __getitem__(self, name):
        return self.tensors[name]

    def names(self):
        return list(self.tensors)

    def items(self):
        return self.tensors.items()

    def values(self):
        return self.tensors.values()

    def zero_grads(self):
        nm.zero_grads(self.tensors.values())

    def all_finite(self):
        return all(np.isfinite(t.data).all() for t in self.tensors.values())


def init_parameters(hyper, vocab_size, rng):
    """Uniform(-0.1, 0.1) weights, zero biases."""
    d, h = hyper.embed_dim, hyper.hidden
    a = h  # attention inner dimension

    def w(*shape):
        return Tensor(rng.uniform(-0.1, 0.1, shape))

    def zeros(*shape):
        return Tensor(np.zeros(shape))

    p = {"E": w(vocab_size, d)}
    for layer, in_dim in ((1, d), (2, 2 * h)):
        for dirn in ("fw", "bw"):
            p[f"enc_l{layer}_{dirn}_W"] = w(4 * h, in_dim)
            p[f"enc_l{layer}_{dirn}_U"] = w(4 * h, h)
            p[f"enc_l{layer}_{dirn}_b"] = zeros(4 * h)
    p["dec_W"] = w(4 * h, d)
    p["dec_U"] = w(4 * h, h)
    p["dec_b"] = zeros(4 * h)
    p["v"] = w(a)
    p["W_eh"] = w(a, 2 * h)
    p["W_sh"] = w(a, h)
    p["W_cv"] = w(a)
    p["b_att"] = zeros(a)
    p["W_v"] = w(vocab_size, 3 * h)
    p["b_v"] = zeros(vocab_size)
    p["w_c"] = w(2 * h)
    p["w_s"] = w(h)
    p["w_x"] = w(d)
    p["b_cg"] = zeros()
    p["W_b"] = w(h, 2 * h)
    p["b_b"] = zeros(h)
    return Parameters(p)


@dataclass
class EncoderOutput:
    H: Tensor            # (M, 2h) last-layer fw/bw concatenations
    s0: tuple            # (hidden, cell) decoder initial state
    summary: Tensor      # (2h,) [fw_M; bw_1], the fixed context for the basic model

    @property
    def source_len(self):
        return self.H.data.shape[0]


@dataclass
class DecoderStep:
    state: tuple         # (hidden, cell) after this step
    a: Tensor | None     # attention over source positions
    cov: Tensor | None   # coverage vector entering this step
    cov_next: Tensor | None
    context: Tensor
    p_cg: Tensor | None  # copy gate scalar
    p_star: Tensor       # distribution over |V| + |oov|


@dataclass
class EncodedExample:
    """One training pair, already id-encoded against a vocabulary."""
    id: int
    base_ids: list
    ext_ids: list
    ev: object
    target_ids: list     # extended ids, END included
    title_tokens: list = field(default_factory=list)


def _run_direction(inputs, params, prefix, hidden):
    w, u, b = params[f"{prefix}_W"], params[f"{prefix}_U"], params[f"{prefix}_b"]
    h = Tensor(np.zeros(hidden))
    c = Tensor(np.zeros(hidden))
    states = []
    for x in inputs:
        h, c = nm.lstm_cell(x, h, c, w, u, b)
        states.append((h, c))
    return states


def encode(base_ids, params, hyper):
    """EncoderOutput for one source id sequence."""
    if not base_ids:
        raise ValueError("encode: empty input")
    vocab_size = params["E"].data.shape[0]
    for idx in base_ids:
        if not 0 <= idx < vocab_size:
            raise IndexError(f"source id {idx} out of vocab range [0, {vocab_size})")
    h = hyper.hidden
    emb = nm.gather_rows(params["E"], base_ids)
    xs = [nm.take_row(emb, t) for t in range(len(base_ids))]

    l1_fw = _run_direction(xs, params, "enc_l1_fw", h)
    l1_bw = _run_direction(list(reversed(xs)), params, "enc_l1_bw", h)
    l1_bw.reverse()
    l1_out = [nm.concat([f[0], b[0]]) for f, b in zip(l1_fw, l1_bw)]

    l2_fw = _run_direction(l1_out, params, "enc_l2_fw", h)
    l2_bw = _run_direction(list(reversed(l1_out)), params, "enc_l2_bw", h)
    l2_bw.reverse()

    H = nm.stack_rows([nm.concat([f[0], b[0]]) for f, b in zip(l2_fw, l2_bw)])
    summary_h = nm.concat([l2_fw[-1][0], l2_bw[0][0]])
    summary_c = nm.concat([l2_fw[-1][1], l2_bw[0][1]])
    s0_h = nm.tanh(nm.linear(summary_h, params["W_b"], params["b_b"]))
    s0_c = nm.tanh(nm.linear(summary_c, params["W_b"], params["b_b"]))
    return EncoderOutput(H=H, s0=(s0_h, s0_c), summary=summary_h)


def attention_step(s_t, H, cov, params, mask=None):
    """(a_t, c_t): softmax attention over source rows of H and the weighted
    context. ``cov`` of None means the coverage term is dropped."""
    pre = nm.add(nm.matmul(H, nm.transpose(params["W_eh"])),
                 nm.linear(s_t, params["W_sh"], params["b_att"]))
    if cov is not None:
        pre = nm.add(pre, nm.outer(cov, params["W_cv"]))
    scores = nm.matmul(nm.tanh(pre), params["v"])
    a = nm.softmax(scores, mask)
    c = nm.matmul(a, H)
    return a, c


def decode_step(y_prev_id, state, enc, cov, ext_ids, ev, params, hyper, mask=None):
    """One decoder timestep; ``y_prev_id`` must be a base-vocab id (feed
    extended previous outputs back as UNK)."""
    vocab_size = params["E"].data.shape[0]
    if not 0 <= y_prev_id < vocab_size:
        raise IndexError(f"previous-output id {y_prev_id} outside base vocab")
    x = nm.take_row(params["E"], y_prev_id)
    h, c_state = nm.lstm_cell(x, state[0], state[1], params["dec_W"],
                              params["dec_U"], params["dec_b"])

    if hyper.attention:
        a, ctx = attention_step(h, enc.H, cov if hyper.coverage else None, params, mask)
        cov_next = nm.add(cov, a) if cov is not None else None
    else:
        a, ctx, cov_next = None, enc.summary, cov

    vocab_dist = nm.softmax(nm.linear(nm.concat([h, ctx]), params["W_v"], params["b_v"]))

    ext_size = len(ev)
    if hyper.copy:
        p_cg = nm.sigmoid(nm.add_n([nm.dot(params["w_c"], ctx),
                                    nm.dot(params["w_s"], h),
                                    nm.dot(params["w_x"], x),
                                    params["b_cg"]]))
        copy_dist = nm.scatter_add(a, ext_ids, ext_size)
        gen_dist = nm.pad_zeros(vocab_dist, ext_size)
        p_star = nm.add(nm.mul(p_cg, copy_dist),
                        nm.mul(nm.add(1.0, nm.neg(p_cg)), gen_dist))
    else:
        p_cg = None
        p_star = nm.pad_zeros(vocab_dist, ext_size)

    return DecoderStep(state=(h, c_state), a=a, cov=cov, cov_next=cov_next,
                       context=ctx, p_cg=p_cg, p_star=p_star)


def _to_base(idx, vocab_size):
    return idx if idx < vocab_size else UNK


def sequence_loss(example, params, hyper):
    """Teacher-forced loss for one encoded pair.

    Returns (loss Tensor, per-token log-probabilities as floats). The loss
    is mean negative log-likelihood of the extended distribution plus
    lambda_cov times the mean per-step coverage penalty
    sum_i min(a_i, cov_i).
    """
    target = example.target_ids
    if not target:
        raise ValueError("sequence_loss: empty target")
    vocab_size = params["E"].data.shape[0]
    ext_size = vocab_size + len(example.ev.oov_tokens)
    for idx in target:
        if not 0 <= idx < ext_size:
            raise IndexError(f"target id {idx} outside extended range [0, {ext_size})")

    enc = encode(example.base_ids, params, hyper)
    state = enc.s0
    cov = Tensor(np.zeros(len(example.base_ids))) if hyper.attention else None
    feed = [START] + [_to_base(y, vocab_size) for y in target[:-1]]

    nll_terms, cov_terms, logps = [], [], []
    for y_prev, y in zip(feed, target):
        step = decode_step(y_prev, state, enc, cov, example.ext_ids,
                           example.ev, params, hyper)
        logp = nm.log(nm.clamp_min(nm.take_scalar(step.p_star, y), LOGPROB_FLOOR))
        nll_terms.append(nm.neg(logp))
        logps.append(float(logp.data))
        if hyper.coverage:
            cov_terms.append(nm.sum_all(nm.minimum(step.a, step.cov)))
        state = step.state
        cov = step.cov_next

    t_len = len(target)
    loss = nm.scale(nm.add_n(nll_terms), 1.0 / t_len)
    if cov_terms and hyper.lambda_cov > 0:
        loss = nm.add(loss, nm.scale(nm.add_n(cov_terms), hyper.lambda_cov / t_len))
    return loss, logps


def encode_example(pair, vocab):
    """EncodedExample from a QCPair."""
    from .vocab import encode_source, encode_target
    base_ids, ext_ids, ev = encode_source(pair.code_tokens, vocab)
    target_ids = encode_target(pair.title_tokens, vocab, ev)
    return EncodedExample(id=pair.id, base_ids=base_ids, ext_ids=ext_ids,
                          ev=ev, target_ids=target_ids,
                          title_tokens=list(pair.title_tokens))
