"""Tokenizer adapters that expose exact character offsets.

Three schemes emulate the fragmentation behavior of real encoder
vocabularies: whitespace words, single characters, and greedy BPE driven
by a standard merges file. Token surfaces are always raw slices of the
original prompt, so span detection downstream never depends on a
particular vocabulary. Offsets count Unicode scalar values.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Token:
    surface: str
    start: int
    end: int
    scheme_id: str


def _word_spans(text):
    spans = []
    i, n = 0, len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        spans.append((i, j))
        i = j
    return spans


def tokenize_whitespace(text):
    return [Token(text[i:j], i, j, "whitespace") for i, j in _word_spans(text)]


def tokenize_chars(text):
    return [Token(ch, i, i + 1, "char") for i, ch in enumerate(text)]


class BpeModel:
    def __init__(self, merges):
        self.merges = list(merges)
        self.ranks = {pair: r for r, pair in enumerate(self.merges)}
        if len(self.ranks) != len(self.merges):
            raise ValueError("duplicate merge pair")


def load_bpe_merges(path) -> BpeModel:
    merges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if lineno == 1 and line.startswith("#version"):
                continue
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ValueError(f"{path}:{lineno}: malformed merge line {line!r}")
            merges.append((parts[0], parts[1]))
    return BpeModel(merges)


def _bpe_word(model, word):
    """Greedy lowest-rank merging starting from single characters.

    Returns a list of (char_offset_within_word, length) pieces.
    """
    pieces = list(word)
    while len(pieces) > 1:
        best = None
        for i in range(len(pieces) - 1):
            r = model.ranks.get((pieces[i], pieces[i + 1]))
            if r is not None and (best is None or r < best[0]):
                best = (r, i)
        if best is None:
            break
        i = best[1]
        pieces[i:i + 2] = [pieces[i] + pieces[i + 1]]
    out = []
    off = 0
    for p in pieces:
        out.append((off, len(p)))
        off += len(p)
    return out


def tokenize_bpe(model: BpeModel, text):
    tokens = []
    for i, j in _word_spans(text):
        for off, length in _bpe_word(model, text[i:j]):
            s = i + off
            tokens.append(Token(text[s:s + length], s, s + length, "bpe"))
    return tokens


SCHEMES = {
    "whitespace": tokenize_whitespace,
    "char": tokenize_chars,
}


def tokenize(scheme, text, bpe_model=None):
    if scheme == "bpe":
        if bpe_model is None:
            raise ValueError("bpe scheme needs a merges model")
        return tokenize_bpe(bpe_model, text)
    try:
        return SCHEMES[scheme](text)
    except KeyError:
        raise ValueError(f"unknown tokenizer scheme {scheme!r}") from None
