"""Operator CLI: reproducible commands over the library modules.

Report-producing commands write delimited/JSON output and, when asked,
matplotlib figures next to it. All stochastic commands require --seed.
"""

from __future__ import annotations

import json
import os
import sys
from importlib import resources

import click
import numpy as np

from . import codebook as cb
from . import corpus as corpus_mod
from . import geometry as geo
from . import injection as inj
from . import metrics as met
from .colorspace import LabColor, NamedColorTable, parse_color, srgb_to_lab
from .cta import (AdamW, CtaConfig, CtaModel, load_checkpoint,
                  save_checkpoint, toy_config, train_step)
from .cta.train import predict_spans
from .span_detector import find_color_spans, spans_to_bio
from .tokenizers import Token, load_bpe_merges, tokenize


def worker_count():
    cap = os.environ.get("NUMCOLOR_THREADS")
    n = os.cpu_count() or 1
    return min(n, int(cap)) if cap else n


def _fail(msg):
    click.echo(f"error: {msg}", err=True)
    sys.exit(1)


def _data_path(name):
    return str(resources.files("numcolor.data").joinpath(name))


def _load_tokens(scheme, merges, text):
    model = None
    if scheme == "bpe":
        model = load_bpe_merges(merges or _data_path("default_merges.txt"))
    return tokenize(scheme, text, bpe_model=model)


def _parse_color_arg(s):
    parsed = parse_color(s)
    if parsed is None:
        _fail(f"not a color literal: {s!r}")
    return srgb_to_lab(parsed[1])


def _figure(path, draw):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6, 4))
    draw(ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


@click.group()
def main():
    """NumColor text-side pipeline tools."""


@main.command("build-codebook")
@click.option("--spacing", type=float, default=5.0, show_default=True)
@click.option("--dim", type=int, default=cb.DEFAULT_DIM, show_default=True)
@click.option("--names", type=click.Path(exists=True), default=None,
              help="named-color TSV; defaults to the bundled CSS3/X11 table")
@click.option("--vectors", type=click.Path(exists=True), default=None,
              help="JSON {name: [d floats]}; omitted -> seeded random vectors")
@click.option("--seed", type=int, default=0, show_default=True,
              help="seed for generated vectors when --vectors is omitted")
@click.option("--k", "k_default", type=int, default=cb.DEFAULT_K, show_default=True)
@click.option("--tau", type=float, default=cb.DEFAULT_TAU, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def build_codebook(spacing, dim, names, vectors, seed, k_default, tau, out):
    """Build, seed, propagate, and save a ColorBook; prints K."""
    try:
        book = cb.new_colorbook(spacing, dim=dim, k_default=k_default, tau=tau)
        table = NamedColorTable.load(names or _data_path("named_colors.tsv"))
        if vectors:
            with open(vectors) as fh:
                vecs = {k: np.asarray(v, dtype=np.float64)
                        for k, v in json.load(fh).items()}
        else:
            rng = np.random.default_rng(seed)
            vecs = {name: rng.normal(0, 1, dim) for name, _ in table.entries}
        seeded = cb.seed_from_names(book, table, vecs)
        cb.propagate_init(book, seeded)
        cb.save(book, out)
    except (ValueError, KeyError, OSError) as e:
        _fail(e)
    click.echo(f"K={book.size} (spacing={spacing}, seeded={len(seeded)} anchors)")


@main.command()
@click.option("--book", "book_path", type=click.Path(exists=True), required=True)
@click.option("--color", required=True, help='literal like "#FF5733" or "rgb(1,2,3)"')
@click.option("--k", type=int, default=None)
@click.option("--tau", type=float, default=None)
@click.option("--json", "as_json", is_flag=True)
def lookup(book_path, color, k, tau, as_json):
    """Nearest anchors, weights, and an embedding digest for a color."""
    try:
        book = cb.load(book_path)
        lab = _parse_color_arg(color)
        res = cb.query(book, lab, k, tau)
    except ValueError as e:
        _fail(e)
    emb = res.weights @ book.embeddings[res.indices].astype(np.float64)
    payload = {
        "color": color,
        "lab": list(lab.as_tuple()),
        "indices": res.indices.tolist(),
        "distances": res.distances.tolist(),
        "weights": res.weights.tolist(),
        "embedding_l2": float(np.linalg.norm(emb)),
        "embedding_head": emb[:8].tolist(),
    }
    if as_json:
        click.echo(json.dumps(payload, indent=2))
    else:
        for i, d, w in zip(res.indices, res.distances, res.weights):
            click.echo(f"anchor {i}\tdist {d:.4f}\tweight {w:.6f}")
        click.echo(f"embedding_l2 {payload['embedding_l2']:.6f}")


@main.command()
@click.option("--scheme", type=click.Choice(["whitespace", "char", "bpe"]),
              default="whitespace", show_default=True)
@click.option("--merges", type=click.Path(exists=True), default=None)
@click.option("--text", required=True)
def detect(scheme, merges, text):
    """FSM span detection plus per-token BIO tags as JSON."""
    tokens = _load_tokens(scheme, merges, text)
    spans = find_color_spans(text)
    tags, warnings = spans_to_bio(tokens, spans)
    click.echo(json.dumps({
        "spans": [
            {"start": s.start, "end": s.end, "format": s.format,
             "rgb": [s.parsed.r, s.parsed.g, s.parsed.b],
             "lab": list(s.lab.as_tuple())}
            for s in spans
        ],
        "tokens": [t.surface for t in tokens],
        "tags": tags,
        "boundary_warnings": warnings,
    }, indent=2))


@main.command("gen-corpus")
@click.option("--n", "n_prompts", type=int, required=True)
@click.option("--schemes", default="whitespace,char,bpe", show_default=True)
@click.option("--merges", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(), required=True, help="output JSONL")
@click.option("--manifest", type=click.Path(), default=None)
def gen_corpus(n_prompts, schemes, merges, seed, out, manifest):
    """Generate a tagger corpus with oracle BIO tags."""
    scheme_list = [s.strip() for s in schemes.split(",") if s.strip()]
    bpe_model = None
    if "bpe" in scheme_list:
        bpe_model = load_bpe_merges(merges or _data_path("default_merges.txt"))
    try:
        records = corpus_mod.gen_tagger_corpus(
            n_prompts, schemes=scheme_list, seed=seed, bpe_model=bpe_model)
    except ValueError as e:
        _fail(e)
    corpus_mod.write_jsonl(records, out)
    mani = corpus_mod.corpus_manifest(records)
    if manifest:
        with open(manifest, "w") as fh:
            json.dump(mani, fh, indent=2, sort_keys=True)
    click.echo(f"wrote {len(records)} records ({mani['n_prompts']} prompts) to {out}")


def _corpus_batches(records, batch_size, rng):
    order = rng.permutation(len(records))
    for i in range(0, len(order), batch_size):
        chunk = order[i:i + batch_size]
        yield [([t["surface"] for t in records[j]["tokens"]], records[j]["tags"])
               for j in chunk]


@main.command("train-tagger")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--seed", type=int, required=True)
@click.option("--epochs", type=int, default=3, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True)
@click.option("--toy/--full", default=True, show_default=True)
def train_tagger(corpus_path, out, seed, epochs, batch_size, lr, toy):
    """Train the tagger on a JSONL corpus (training split only)."""
    records = [r for r in corpus_mod.read_jsonl(corpus_path)
               if r.get("split", "train") == "train"]
    if not records:
        _fail("corpus has no training records")
    cfg = toy_config(dropout=0.1) if toy else CtaConfig()
    model = CtaModel(cfg, seed=seed)
    opt = AdamW(model, lr=lr)
    rng = np.random.default_rng(seed)
    drop_rng = np.random.Generator(np.random.Philox(key=seed))
    step = 0
    for epoch in range(epochs):
        for batch in _corpus_batches(records, batch_size, rng):
            loss = train_step(model, batch, opt, rng=drop_rng)
            step += 1
            if step % 25 == 0:
                click.echo(f"epoch {epoch} step {step} loss {loss:.4f}")
    save_checkpoint(model, out)
    click.echo(f"saved model to {out} after {step} steps")


def span_prf(model, records):
    """Span-level precision/recall/F1 against the records' oracle tags."""
    tp = fp = fn = 0
    for rec in records:
        tokens = [Token(t["surface"], t["start"], t["end"], rec["scheme"])
                  for t in rec["tokens"]]
        pred, _ = predict_spans(model, tokens)
        gold = find_color_spans(rec["prompt"])
        pset = {(s.start, s.end, s.parsed.r, s.parsed.g, s.parsed.b) for s in pred}
        gset = {(s.start, s.end, s.parsed.r, s.parsed.g, s.parsed.b) for s in gold}
        tp += len(pset & gset)
        fp += len(pset - gset)
        fn += len(gset - pset)
    prec = tp / (tp + fp) if tp + fp else 1.0
    rec_ = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * prec * rec_ / (prec + rec_) if prec + rec_ else 0.0
    return {"tp": tp, "fp": fp, "fn": fn,
            "precision": prec, "recall": rec_, "f1": f1}


@main.command("eval-tagger")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--split", type=click.Choice(["train", "val", "all"]),
              default="val", show_default=True)
def eval_tagger(model_path, corpus_path, split):
    """Span-level precision/recall/F1 against the FSM oracle."""
    model = load_checkpoint(model_path)
    records = corpus_mod.read_jsonl(corpus_path)
    if split != "all":
        records = [r for r in records if r.get("split", "train") == split]
    if not records:
        _fail(f"no records in split {split!r}")
    click.echo(json.dumps(span_prf(model, records), indent=2))


@main.command("train-colorbook")
@click.option("--book", "book_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--steps", type=int, default=200, show_default=True)
@click.option("--lr", type=float, default=1e-2, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--lambda-d", type=float, default=0.3, show_default=True)
@click.option("--lambda-i", type=float, default=0.2, show_default=True)
@click.option("--task-samples", type=int, default=256, show_default=True)
@click.option("--log", "log_path", type=click.Path(), default=None,
              help="CSV: step,total,surr,dir,interp")
@click.option("--figures", type=click.Path(), default=None,
              help="directory for loss-curve PNGs")
def train_colorbook(book_path, out, steps, lr, seed, lambda_d, lambda_i,
                    task_samples, log_path, figures):
    """Train codebook embeddings against the surrogate + geometry losses."""
    book = cb.load(book_path)
    params = geo.GeometryParams.init(book.dim, seed=seed,
                                     lambda_d=lambda_d, lambda_i=lambda_i)
    task = geo.SurrogateTask.from_book(book, task_samples, seed=seed)
    try:
        log = geo.train_colorbook(book, params, task, steps, lr=lr, seed=seed)
    except FloatingPointError as e:
        _fail(e)
    cb.save(book, out)
    if log_path:
        geo.write_log_csv(log, log_path)
    if figures:
        os.makedirs(figures, exist_ok=True)
        arr = np.array([row[1:] for row in log])

        def draw(ax):
            for i, name in enumerate(["total", "surrogate", "directional",
                                      "interpolation"]):
                ax.plot(arr[:, i], label=name)
            ax.set_xlabel("step")
            ax.set_ylabel("loss")
            ax.set_yscale("log")
            ax.legend()
        _figure(os.path.join(figures, "loss_curves.png"), draw)
    click.echo(f"trained {steps} steps; final total {log[-1][1]:.6f}; saved {out}")


@main.command()
@click.option("--book-a", type=click.Path(exists=True), required=True)
@click.option("--book-b", type=click.Path(exists=True), required=True)
@click.option("--k", type=int, default=8, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="report JSON path")
@click.option("--figures", type=click.Path(), default=None,
              help="directory for drift histogram PNGs")
def analyze(book_a, book_b, k, out, figures):
    """CKA, Lab<->embedding kNN overlap, and drift between two books."""
    a = cb.load(book_a)
    b = cb.load(book_b)
    if a.size != b.size or a.dim != b.dim:
        _fail("books must share K and d")
    report = met.drift_report(a.embeddings, b.embeddings)
    payload = {
        "cka_embeddings": met.linear_cka(a.embeddings, b.embeddings),
        "knn_overlap_lab_vs_a": met.knn_overlap(a.anchors, a.embeddings, k),
        "knn_overlap_lab_vs_b": met.knn_overlap(b.anchors, b.embeddings, k),
        "knn_overlap_a_vs_b": met.knn_overlap(a.embeddings, b.embeddings, k),
        "drift": report["summary"],
    }
    text = json.dumps(payload, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    if figures:
        os.makedirs(figures, exist_ok=True)
        for key, vals in (("l2", report["l2"]),
                          ("cosine", report["cosine"]),
                          ("relative", report["relative"][np.isfinite(report["relative"])])):
            def draw(ax, vals=vals, key=key):
                ax.hist(vals, bins=40)
                ax.set_xlabel(f"{key} drift")
                ax.set_ylabel("anchors")
            _figure(os.path.join(figures, f"drift_{key}.png"), draw)
    click.echo(text)


@main.command("plan-injection")
@click.option("--book", "book_path", type=click.Path(exists=True), required=True)
@click.option("--scheme", type=click.Choice(["whitespace", "char", "bpe"]),
              default="whitespace", show_default=True)
@click.option("--merges", type=click.Path(exists=True), default=None)
@click.option("--text", required=True)
def plan_injection_cmd(book_path, scheme, merges, text):
    """Build and print an injection plan for a prompt."""
    book = cb.load(book_path)
    tokens = _load_tokens(scheme, merges, text)
    spans = find_color_spans(text)
    tags, _ = spans_to_bio(tokens, spans)
    plan = inj.plan_injection(tokens, tags, book)
    click.echo(json.dumps(inj.plan_to_dict(plan), indent=2))


if __name__ == "__main__":
    main()
