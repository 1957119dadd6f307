"""Synthetic corpora: tagger training prompts with planted color literals
and fixed-template prompts for codebook-style evaluation.

Generation is a pure function of (inputs, seed). Each record draws its
randomness from a hash of (seed, record index), so records can be produced
in any order (or in parallel) with byte-identical results.
"""

from __future__ import annotations

import hashlib
import json
import random
from importlib import resources

from .span_detector import find_color_spans, spans_to_bio
from .tokenizers import tokenize

# Prompt templates for single-object color prompts. 1-12 take a generic
# color literal, 13-22 a hex code, 23-27 an rgb() tuple.
TEMPLATES = [
    "A {color} {object}",
    "The {object} is {color}",
    "A photo of a {color} {object}",
    "A {object} that is entirely {color}",
    "An image of a {color} {object}",
    "A {color} colored {object}",
    "A single {color} {object}",
    "A {object}, and it's {color}",
    "A {object} in a {color} color",
    "A {object} rendered in {color} color",
    "A {object} with a {color} color",
    "A realistic {object} in {color}",
    "An image of a {object} in hex color {hex}",
    "A {object} in color {hex}",
    "A {object} with hex color {hex}",
    "A close-up of a {object} in the color {hex}",
    "A {object} rendered in {hex} color",
    "A photo of a {object} in the color {hex}",
    "A {object} rendered entirely in {hex}",
    "A {object} designed in {hex} color",
    "A realistic {hex}-colored {object}",
    "A highly detailed {object} in hex {hex}",
    "A {object} in rgb({r}, {g}, {b})",
    "A {object} with the color rgb({r}, {g}, {b})",
    "A {object} rendered in RGB color rgb({r}, {g}, {b})",
    "A photo of a {object} in color rgb({r}, {g}, {b})",
    "A {object} with color rgb({r}, {g}, {b})",
]


def hex_literal(rgb):
    return "#{:02X}{:02X}{:02X}".format(*rgb)


def rgb_literal(rgb):
    return "rgb({}, {}, {})".format(*rgb)


def default_base_phrases():
    text = resources.files("numcolor.data").joinpath("base_phrases.txt").read_text("utf-8")
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


def gen_template_prompts(objects, colors, seed=0):
    """Fill the 27 templates for every (object, color) pair.

    `colors` are (r, g, b) tuples. Generic {color} slots alternate hex and
    rgb renderings by template position.
    """
    if not objects or not colors:
        raise ValueError("objects and colors must be non-empty")
    prompts = []
    for obj in objects:
        for rgb in colors:
            for t_idx, tpl in enumerate(TEMPLATES):
                lit_hex = hex_literal(rgb)
                lit_rgb = rgb_literal(rgb)
                generic = lit_hex if t_idx % 2 == 0 else lit_rgb
                prompts.append(
                    tpl.format(
                        object=obj, color=generic, hex=lit_hex,
                        r=rgb[0], g=rgb[1], b=rgb[2],
                    )
                )
    return prompts


def _record_rng(seed, idx):
    digest = hashlib.sha256(f"{seed}:{idx}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "little"))


def _is_val_color(rgb):
    # structural 10%-pool: validation colors never collide with training ones
    return (rgb[0] + rgb[1] + rgb[2]) % 10 == 0


def _draw_color(rng, want_val):
    while True:
        rgb = (rng.randrange(256), rng.randrange(256), rng.randrange(256))
        if _is_val_color(rgb) == want_val:
            return rgb


def _colors_before(idx):
    # cumulative planted-color count over records < idx, bucket = idx % 5
    full, rem = divmod(idx, 5)
    return full * 10 + rem * (rem - 1) // 2


def build_prompt(idx, seed, base_phrases):
    """One prompt: base phrase words with `idx % 5` literals spliced in."""
    rng = _record_rng(seed, idx)
    n_colors = idx % 5
    # every 10th group of 5 records (one per bucket) goes to validation,
    # keeping the 10% split stratified over color counts
    is_val = (idx // 5) % 10 == 9
    words = rng.choice(base_phrases).split()
    fmt_parity = _colors_before(idx) % 2
    planted = []
    for j in range(n_colors):
        rgb = _draw_color(rng, is_val)
        fmt = "hex" if (fmt_parity + j) % 2 == 0 else "rgb"
        lit = hex_literal(rgb) if fmt == "hex" else rgb_literal(rgb)
        pos = rng.randrange(len(words) + 1)
        words.insert(pos, lit)
        planted.append((lit, rgb, fmt))
    return " ".join(words), planted, is_val


def gen_tagger_corpus(n_prompts, base_phrases=None, schemes=("whitespace",),
                      seed=0, bpe_model=None):
    """Yield JSONL-ready records with oracle BIO tags.

    Exactly n_prompts/5 prompts per color-count bucket 0..4; hex and rgb
    literal totals differ by at most one; every prompt is emitted once per
    tokenizer scheme. Records carry split = "train" (90%) or "val" (10%)
    with disjoint color values between the splits.
    """
    if n_prompts % 5 != 0:
        raise ValueError("n_prompts must be divisible by 5")
    if not schemes:
        raise ValueError("need at least one tokenizer scheme")
    if base_phrases is None:
        base_phrases = default_base_phrases()
    records = []
    for idx in range(n_prompts):
        prompt, planted, is_val = build_prompt(idx, seed, base_phrases)
        spans = find_color_spans(prompt)
        if len(spans) != len(planted):
            raise AssertionError(f"oracle mismatch on record {idx}: {prompt!r}")
        for scheme in schemes:
            tokens = tokenize(scheme, prompt, bpe_model=bpe_model)
            tags, _ = spans_to_bio(tokens, spans)
            records.append({
                "prompt_id": idx,
                "scheme": scheme,
                "prompt": prompt,
                "tokens": [
                    {"surface": t.surface, "start": t.start, "end": t.end}
                    for t in tokens
                ],
                "tags": tags,
                "split": "val" if is_val else "train",
            })
    return records


def corpus_manifest(records):
    buckets = {}
    split_hash = {"train": hashlib.sha256(), "val": hashlib.sha256()}
    seen = set()
    for rec in records:
        if rec["prompt_id"] not in seen:
            seen.add(rec["prompt_id"])
            n = sum(1 for t in rec["tags"] if t == "B")
            buckets[n] = buckets.get(n, 0) + 1
        line = json.dumps(rec, sort_keys=True, ensure_ascii=False)
        split_hash[rec["split"]].update(line.encode())
    return {
        "n_prompts": len(seen),
        "bucket_counts": {str(k): v for k, v in sorted(buckets.items())},
        "split_sha256": {k: h.hexdigest() for k, h in split_hash.items()},
    }


def write_jsonl(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
