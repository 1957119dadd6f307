"""ColorBook: a Lab anchor grid with learnable embeddings and soft kNN lookup.

Anchors are laid on a regular Lab grid (origin at (0,0,0), step = spacing)
clipped to the sRGB gamut. Queries retrieve the k nearest anchors by
Euclidean Lab distance and blend their embeddings with a temperature
softmax over distances. K is small enough (~6.7k at spacing 5) that exact
brute-force search is both fast and fully deterministic.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .colorspace import LabColor, in_srgb_gamut

MAGIC = b"NCBK"
VERSION = 1

DEFAULT_K = 8
DEFAULT_TAU = 2.0
DEFAULT_DIM = 4096


@dataclass
class NeighborQueryResult:
    indices: np.ndarray  # (k,) int
    distances: np.ndarray  # (k,) float
    weights: np.ndarray  # (k,) float, sums to 1


@dataclass
class ColorBook:
    anchors: np.ndarray  # (K, 3) float64 Lab
    embeddings: np.ndarray  # (K, d) float32
    spacing: float
    k_default: int = DEFAULT_K
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        self.anchors = np.ascontiguousarray(self.anchors, dtype=np.float64)
        self.embeddings = np.ascontiguousarray(self.embeddings, dtype=np.float32)
        if self.anchors.ndim != 2 or self.anchors.shape[1] != 3:
            raise ValueError("anchors must be (K, 3)")
        if self.embeddings.shape[0] != self.anchors.shape[0]:
            raise ValueError("anchor/embedding row mismatch")
        if self.k_default < 1 or self.tau <= 0:
            raise ValueError("need k_default >= 1 and tau > 0")

    @property
    def size(self) -> int:
        return self.anchors.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]


def build_anchor_grid(spacing: float):
    """Lab grid points inside the sRGB gamut, L-major then a then b order."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    ls = np.arange(0.0, 100.0 + 1e-9, spacing)
    ext = np.arange(0.0, 130.0 + 1e-9, spacing)
    axis = np.concatenate([-ext[:0:-1], ext])
    out = []
    for L in ls:
        for a in axis:
            for b in axis:
                c = LabColor(float(L), float(a), float(b))
                if in_srgb_gamut(c):
                    out.append(c)
    return out


def new_colorbook(spacing, dim=DEFAULT_DIM, k_default=DEFAULT_K, tau=DEFAULT_TAU):
    grid = build_anchor_grid(spacing)
    anchors = np.array([c.as_tuple() for c in grid], dtype=np.float64)
    emb = np.zeros((len(grid), dim), dtype=np.float32)
    return ColorBook(anchors, emb, float(spacing), k_default, tau)


def _nearest(anchors, point, k):
    """Exact kNN with ties broken by smaller anchor index."""
    d = np.linalg.norm(anchors - point[None, :], axis=1)
    order = np.argsort(d, kind="stable")[:k]
    return order, d[order]


def query(book: ColorBook, c: LabColor, k=None, tau=None) -> NeighborQueryResult:
    k = book.k_default if k is None else k
    tau = book.tau if tau is None else tau
    if not (1 <= k <= book.size):
        raise ValueError(f"k={k} out of range for K={book.size}")
    if tau <= 0:
        raise ValueError("tau must be positive")
    point = np.array(c.as_tuple(), dtype=np.float64)
    if not np.all(np.isfinite(point)):
        raise ValueError("non-finite query color")
    idx, dist = _nearest(book.anchors, point, k)
    z = -dist / tau
    z -= z.max()  # stabilized softmax
    w = np.exp(z)
    w /= w.sum()
    return NeighborQueryResult(idx, dist, w)


def interpolate(book: ColorBook, c: LabColor) -> np.ndarray:
    """Soft kNN embedding for a Lab query, using the book's k and tau."""
    res = query(book, c)
    return res.weights @ book.embeddings[res.indices].astype(np.float64)


def seed_from_names(book: ColorBook, table, vectors) -> set:
    """Install name-embedding vectors on the anchors nearest each named
    centroid. When several names hit one anchor the closest centroid wins
    (lexicographic name on exact distance ties). Returns seeded anchor ids.
    """
    d = book.dim
    for name, _ in table.entries:
        if name not in vectors:
            raise KeyError(f"no vector for color name {name!r}")
        v = np.asarray(vectors[name], dtype=np.float64)
        if v.shape != (d,):
            raise ValueError(f"vector for {name!r} has width {v.shape}, expected ({d},)")
    winner = {}  # anchor id -> (distance, name, vector)
    for name, lab in table.entries:
        point = np.array(lab.as_tuple(), dtype=np.float64)
        idx, dist = _nearest(book.anchors, point, 1)
        aid, dd = int(idx[0]), float(dist[0])
        cur = winner.get(aid)
        if cur is None or (dd, name) < (cur[0], cur[1]):
            winner[aid] = (dd, name, vectors[name])
    for aid, (_, _, vec) in winner.items():
        book.embeddings[aid] = np.asarray(vec, dtype=np.float32)
    return set(winner)


def propagate_init(book: ColorBook, seeded: set, m: int = 8, eps: float = 1e-6):
    """Fill unseeded anchors by inverse-distance interpolation over their
    m nearest seeded anchors. Seeded rows are left untouched."""
    if not seeded:
        raise ValueError("empty seed set")
    seed_ids = np.array(sorted(seeded), dtype=np.int64)
    seed_pts = book.anchors[seed_ids]
    seed_emb = book.embeddings[seed_ids].astype(np.float64)
    m = min(m, len(seed_ids))
    for i in range(book.size):
        if i in seeded:
            continue
        d = np.linalg.norm(seed_pts - book.anchors[i][None, :], axis=1)
        order = np.argsort(d, kind="stable")[:m]
        w = 1.0 / (d[order] + eps)
        w /= w.sum()
        book.embeddings[i] = (w @ seed_emb[order]).astype(np.float32)


class ColorBookFormatError(ValueError):
    pass


def save(book: ColorBook, path):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, book.size, book.dim))
        fh.write(struct.pack("<ddI", book.spacing, book.tau, book.k_default))
        fh.write(book.anchors.astype("<f8").tobytes())
        fh.write(book.embeddings.astype("<f4").tobytes())


def load(path) -> ColorBook:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ColorBookFormatError("bad magic")
    off = 4
    if len(blob) < off + 12 + 20:
        raise ColorBookFormatError("truncated header")
    version, K, d = struct.unpack_from("<III", blob, off)
    off += 12
    if version != VERSION:
        raise ColorBookFormatError(f"unsupported version {version}")
    spacing, tau, k_default = struct.unpack_from("<ddI", blob, off)
    off += 20
    na = K * 3 * 8
    ne = K * d * 4
    if len(blob) != off + na + ne:
        raise ColorBookFormatError("truncated payload")
    anchors = np.frombuffer(blob, dtype="<f8", count=K * 3, offset=off).reshape(K, 3).copy()
    emb = np.frombuffer(blob, dtype="<f4", count=K * d, offset=off + na).reshape(K, d).copy()
    if not (np.all(np.isfinite(anchors)) and np.all(np.isfinite(emb))):
        raise ColorBookFormatError("non-finite payload")
    return ColorBook(anchors, emb, spacing, int(k_default), tau)
