"""Injection plans: collapse each detected color span's token positions
into one interpolated color embedding before contextualization.

Ops are applied right-to-left so earlier token indices stay valid while
later spans are spliced out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codebook import ColorBook, interpolate
from .colorspace import parse_color, srgb_to_lab
from .span_detector import ColorSpan, bio_groups


@dataclass(frozen=True)
class InjectionOp:
    token_start: int
    token_end: int  # half-open
    embedding: np.ndarray
    source: ColorSpan


@dataclass(frozen=True)
class InjectionPlan:
    ops: tuple  # sorted by token_start descending
    original_len: int
    final_len: int
    dropped: int = 0  # BIO groups that failed to parse


def plan_injection(tokens, tags, book: ColorBook) -> InjectionPlan:
    ops = []
    dropped = 0
    for i, j in bio_groups(tags):
        text = "".join(t.surface for t in tokens[i:j])
        parsed = parse_color(text)
        if parsed is None:
            dropped += 1
            continue
        fmt, rgb = parsed
        lab = srgb_to_lab(rgb)
        span = ColorSpan(tokens[i].start, tokens[j - 1].end, rgb, fmt, lab)
        ops.append(InjectionOp(i, j, interpolate(book, lab), span))
    ops.sort(key=lambda op: -op.token_start)
    final_len = len(tokens) - sum(op.token_end - op.token_start - 1 for op in ops)
    return InjectionPlan(tuple(ops), len(tokens), final_len, dropped)


def apply_plan(seq: np.ndarray, plan: InjectionPlan) -> np.ndarray:
    """Replace each op's token rows by its single color-embedding row."""
    seq = np.asarray(seq)
    if seq.shape[0] != plan.original_len:
        raise ValueError(
            f"sequence length {seq.shape[0]} != plan length {plan.original_len}")
    rows = list(seq)
    for op in plan.ops:  # descending start: later indices stay valid
        rows[op.token_start:op.token_end] = [
            np.asarray(op.embedding, dtype=seq.dtype)]
    out = np.stack(rows) if rows else seq[:0]
    assert out.shape[0] == plan.final_len
    return out


def plan_to_dict(plan: InjectionPlan) -> dict:
    return {
        "original_len": plan.original_len,
        "final_len": plan.final_len,
        "dropped": plan.dropped,
        "ops": [
            {
                "token_start": op.token_start,
                "token_end": op.token_end,
                "char_span": [op.source.start, op.source.end],
                "format": op.source.format,
                "rgb": [op.source.parsed.r, op.source.parsed.g, op.source.parsed.b],
                "lab": list(op.source.lab.as_tuple()),
                "embedding_l2": float(np.linalg.norm(op.embedding)),
            }
            for op in plan.ops
        ],
    }
