"""Training loop pieces for the tagger: AdamW, batched NLL gradients,
span prediction, and binary checkpoints."""

from __future__ import annotations

import json
import struct

import numpy as np

from ..colorspace import parse_color, srgb_to_lab
from ..span_detector import ColorSpan, bio_groups
from .config import CtaConfig
from .crf import crf_nll_grads, viterbi_decode
from .model import CtaModel

CKPT_MAGIC = b"NCTA"
CKPT_VERSION = 1


class AdamW:
    """Adam with decoupled weight decay. Constrained CRF entries are pinned
    back after every update and never accumulate moments."""

    def __init__(self, model, lr=1e-4, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=0.01):
        self.model = model
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.wd = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in model.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in model.params.items()}

    def step(self, grads):
        self.t += 1
        for name, idx in self.model.CONSTRAINED:
            grads[name][idx] = 0.0
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for k, p in self.model.params.items():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            mhat = self.m[k] / bc1
            vhat = self.v[k] / bc2
            p -= self.lr * (mhat / (np.sqrt(vhat) + self.eps) + self.wd * p)
        self.model._pin_constraints()


def loss_and_grads(model, batch, train=False, rng=None):
    """Mean NLL over [(surfaces, gold_tags), ...] plus parameter grads."""
    grads = model.zero_grads()
    total = 0.0
    for surfaces, gold in batch:
        em, cache = model.forward(surfaces, train=train, rng=rng)
        nll, d_em, d_trans, d_start, d_end = crf_nll_grads(model, em, gold)
        total += nll
        scale = 1.0 / len(batch)
        model.backward(cache, d_em * scale, grads)
        grads["crf_trans"] += d_trans * scale
        grads["crf_start"] += d_start * scale
        grads["crf_end"] += d_end * scale
    return total / len(batch), grads


def train_step(model, batch, optimizer, rng=None):
    """One AdamW step on a batch; returns the pre-update mean NLL."""
    loss, grads = loss_and_grads(model, batch, train=True, rng=rng)
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss}")
    optimizer.step(grads)
    return loss


def predict_tags(model, tokens):
    em, _ = model.forward([t.surface for t in tokens])
    return viterbi_decode(model, em)


def predict_spans(model, tokens):
    """Decode tags and parse each B(I)* group into a ColorSpan.

    Returns (spans, dropped_count) where dropped counts groups whose
    concatenated surface is not a valid color literal.
    """
    if not tokens:
        return [], 0
    tags = predict_tags(model, tokens)
    spans = []
    dropped = 0
    for i, j in bio_groups(tags):
        text = "".join(t.surface for t in tokens[i:j])
        parsed = parse_color(text)
        if parsed is None:
            dropped += 1
            continue
        fmt, rgb = parsed
        spans.append(ColorSpan(tokens[i].start, tokens[j - 1].end,
                               rgb, fmt, srgb_to_lab(rgb)))
    return spans, dropped


def save_checkpoint(model, path):
    cfg_blob = json.dumps(model.cfg.to_dict(), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(cfg_blob)))
        fh.write(cfg_blob)
        for name in model.param_order:
            fh.write(model.params[name].astype("<f4").tobytes())


def load_checkpoint(path) -> CtaModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CKPT_MAGIC:
        raise ValueError("bad magic")
    version, cfg_len = struct.unpack_from("<II", blob, 4)
    if version != CKPT_VERSION:
        raise ValueError(f"unsupported version {version}")
    off = 12
    cfg = CtaConfig.from_dict(json.loads(blob[off:off + cfg_len].decode()))
    off += cfg_len
    model = CtaModel(cfg, seed=0)
    for name in model.param_order:
        shape = model.params[name].shape
        n = int(np.prod(shape))
        if off + 4 * n > len(blob):
            raise ValueError("truncated checkpoint")
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off)
        model.params[name] = arr.astype(np.float64).reshape(shape)
        off += 4 * n
    if off != len(blob):
        raise ValueError("trailing bytes in checkpoint")
    model._pin_constraints()
    return model
