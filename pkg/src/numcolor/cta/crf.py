"""Linear-chain CRF over {B, I, O}: exact NLL, marginal-based gradients,
and Viterbi decoding with deterministic tie-breaking."""

from __future__ import annotations

import numpy as np

from .model import TAGS, TAG_TO_ID


def _logsumexp(v, axis=None):
    m = np.max(v, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(v - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis) if axis is not None else out.reshape(()).item()


def _check_bio(tags):
    prev = None
    for t in tags:
        if t not in TAG_TO_ID:
            raise ValueError(f"unknown tag {t!r}")
        if t == "I" and prev in (None, "O"):
            raise ValueError("invalid BIO: I without preceding B/I")
        prev = t
    return [TAG_TO_ID[t] for t in tags]


def crf_forward(em, trans, start, end):
    """Log partition function and the alpha lattice."""
    T = em.shape[0]
    alpha = np.empty((T, 3))
    alpha[0] = start + em[0]
    for t in range(1, T):
        v = alpha[t - 1][:, None] + trans
        m = v.max(axis=0)
        alpha[t] = m + np.log(np.exp(v - m).sum(axis=0)) + em[t]
    logZ = _logsumexp(alpha[T - 1] + end)
    return logZ, alpha


def crf_nll(model, em, gold_tags):
    """-log P(gold | emissions) under the model's CRF parameters."""
    y = _check_bio(gold_tags)
    em = np.asarray(em, dtype=np.float64)
    if em.shape != (len(y), 3):
        raise ValueError("emissions must be (T, 3) matching gold length")
    trans = model.params["crf_trans"]
    start = model.params["crf_start"]
    end = model.params["crf_end"]
    logZ, _ = crf_forward(em, trans, start, end)
    y = np.asarray(y)
    score = (start[y[0]] + em[np.arange(len(y)), y].sum()
             + trans[y[:-1], y[1:]].sum() + end[y[-1]])
    return logZ - score


def crf_nll_grads(model, em, gold_tags):
    """NLL plus gradients wrt emissions and CRF parameters.

    Gradients are (marginal expectations - gold counts); the hard
    constraint entries are zeroed by the caller's update rule.
    """
    y = _check_bio(gold_tags)
    em = np.asarray(em, dtype=np.float64)
    T = em.shape[0]
    trans = model.params["crf_trans"]
    start = model.params["crf_start"]
    end = model.params["crf_end"]
    logZ, alpha = crf_forward(em, trans, start, end)

    beta = np.empty((T, 3))
    beta[T - 1] = end
    for t in range(T - 2, -1, -1):
        v = trans + (em[t + 1] + beta[t + 1])[None, :]
        m = v.max(axis=1)
        beta[t] = m + np.log(np.exp(v - m[:, None]).sum(axis=1))

    marg = np.exp(alpha + beta - logZ)  # (T, 3) unary marginals

    d_em = marg.copy()
    d_start = np.exp(start + em[0] + beta[0] - logZ)
    d_end = np.exp(alpha[T - 1] + end - logZ)
    d_trans = np.zeros((3, 3))
    if T > 1:
        pair = np.exp(alpha[:-1, :, None] + trans[None, :, :]
                      + (em[1:] + beta[1:])[:, None, :] - logZ)
        d_trans += pair.sum(axis=0)

    y = np.asarray(y)
    score = (start[y[0]] + em[np.arange(T), y].sum()
             + trans[y[:-1], y[1:]].sum() + end[y[-1]])
    d_em[np.arange(T), y] -= 1.0
    d_start[y[0]] -= 1.0
    np.subtract.at(d_trans, (y[:-1], y[1:]), 1.0)
    d_end[y[-1]] -= 1.0

    nll = logZ - score
    return nll, d_em, d_trans, d_start, d_end


def viterbi_decode(model, em):
    """Argmax tag sequence; score ties resolve to the lower tag index."""
    em = np.asarray(em, dtype=np.float64)
    T = em.shape[0]
    if T < 1:
        raise ValueError("need at least one token")
    trans = model.params["crf_trans"]
    start = model.params["crf_start"]
    end = model.params["crf_end"]
    delta = np.empty((T, 3))
    back = np.zeros((T, 3), dtype=np.int64)
    delta[0] = start + em[0]
    for t in range(1, T):
        cand = delta[t - 1][:, None] + trans  # (from, to)
        back[t] = np.argmax(cand, axis=0)  # first max = lowest tag index
        delta[t] = cand[back[t], np.arange(3)] + em[t]
    final = delta[T - 1] + end
    path = [int(np.argmax(final))]
    for t in range(T - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return [TAGS[i] for i in path]
