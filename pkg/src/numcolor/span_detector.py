"""Deterministic detection of numeric color spans over raw characters.

This finite-state scan is the labeling oracle for tagger training and a
production fallback: it depends only on the character string, never on
how the prompt was tokenized. Only the per-token BIO projection
(spans_to_bio) sees tokenization.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .colorspace import LabColor, Rgb8, parse_color, srgb_to_lab

B, I, O = "B", "I", "O"

_HEXDIGITS = set("0123456789abcdefABCDEF")

_CANDIDATE = re.compile(
    r"#[0-9a-fA-F]{6}"
    r"|rgb\(\s*[0-9]{1,3}\s*,\s*[0-9]{1,3}\s*,\s*[0-9]{1,3}\s*\)",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class ColorSpan:
    start: int
    end: int
    parsed: Rgb8
    format: str  # "hex" | "rgb"
    lab: LabColor


def find_color_spans(text):
    """Left-to-right maximal-munch scan for hex / rgb() literals.

    A candidate is dropped when a hex digit directly touches either end,
    so `#FF5733AB` never yields a partial match.
    """
    spans = []
    pos = 0
    while True:
        m = _CANDIDATE.search(text, pos)
        if m is None:
            break
        s, e = m.span()
        before = text[s - 1] if s > 0 else ""
        after = text[e] if e < len(text) else ""
        if before in _HEXDIGITS or after in _HEXDIGITS:
            pos = s + 1
            continue
        parsed = parse_color(text[s:e])
        if parsed is None:  # rgb() with a component > 255
            pos = s + 1
            continue
        fmt, rgb = parsed
        spans.append(ColorSpan(s, e, rgb, fmt, srgb_to_lab(rgb)))
        pos = e
    return spans


def spans_to_bio(tokens, spans):
    """Project char spans onto per-token BIO tags.

    Tokens overlapping both span and non-span characters are tagged
    in-span; the second return value counts those boundary cases.
    Returns (tags, boundary_warnings).
    """
    ordered = sorted(spans, key=lambda s: s.start)
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start < prev.end:
            raise ValueError("overlapping color spans")
    tags = [O] * len(tokens)
    warnings = 0
    for span in ordered:
        first = True
        for i, tok in enumerate(tokens):
            if tok.start < span.end and tok.end > span.start:
                tags[i] = B if first else I
                first = False
                if tok.start < span.start or tok.end > span.end:
                    warnings += 1
    return tags, warnings


def is_valid_bio(tags):
    prev = O
    for t in tags:
        if t not in (B, I, O):
            return False
        if t == I and prev == O:
            return False
        prev = t
    return True


def bio_groups(tags):
    """Yield (start, end) token-index groups for each B(I)* run."""
    groups = []
    i = 0
    while i < len(tags):
        if tags[i] == B:
            j = i + 1
            while j < len(tags) and tags[j] == I:
                j += 1
            groups.append((i, j))
            i = j
        else:
            i += 1
    return groups
