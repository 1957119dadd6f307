"""Geometric objectives on the codebook embedding space and a desk-scale
training harness.

The reconstruction term is a surrogate: a hidden random linear map of Lab
coordinates plus a fixed noise table stands in for the (out-of-scope)
diffusion objective. Soft-kNN weights depend only on Lab distances, so the
interpolation map is linear in the embedding table and all gradients are
available in closed form.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .codebook import ColorBook

DEGENERATE_NORM = 1e-12


@dataclass
class GeometryParams:
    psi: np.ndarray  # (d, 3) linear map from Lab differences
    lambda_d: float = 0.3
    lambda_i: float = 0.2

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=np.float64)
        if self.lambda_d < 0 or self.lambda_i < 0:
            raise ValueError("loss weights must be non-negative")
        if not np.all(np.isfinite(self.psi)):
            raise ValueError("non-finite psi")

    @classmethod
    def init(cls, dim, seed=0, lambda_d=0.3, lambda_i=0.2):
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0.0, 1.0 / np.sqrt(3), (dim, 3)), lambda_d, lambda_i)


@dataclass
class SurrogateTask:
    """Hidden linear target g(c) = G c + b with a fixed per-sample noise
    table; reproducible reconstruction signal for embedding training."""
    points: np.ndarray  # (n, 3) Lab queries
    targets: np.ndarray  # (n, d)

    @classmethod
    def from_book(cls, book: ColorBook, n_samples, seed=0, noise=0.01):
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, book.size, size=n_samples)
        points = book.anchors[idx]
        G = rng.normal(0.0, 1.0 / np.sqrt(3), (book.dim, 3))
        b = rng.normal(0.0, 0.1, book.dim)
        targets = points @ G.T + b + rng.normal(0.0, noise, (n_samples, book.dim))
        return cls(points, targets)


def _soft_neighbors(anchors, points, k, tau):
    """Per-point neighbor indices and softmax weights (vectorized)."""
    d = np.linalg.norm(points[:, None, :] - anchors[None, :, :], axis=2)
    idx = np.argsort(d, axis=1, kind="stable")[:, :k]
    dd = np.take_along_axis(d, idx, axis=1)
    z = -dd / tau
    z -= z.max(axis=1, keepdims=True)
    w = np.exp(z)
    w /= w.sum(axis=1, keepdims=True)
    return idx, w


def _phi(E, idx, w):
    return np.einsum("nk,nkd->nd", w, E[idx])


# ----------------------------------------------------------------------
# raw losses over an explicit float64 embedding table (used by training
# and by finite-difference gradient checks)

def surrogate_loss_raw(anchors, E, task, k, tau, grads_E=None):
    idx, w = _soft_neighbors(anchors, task.points, k, tau)
    r = _phi(E, idx, w) - task.targets
    n, d = r.shape
    loss = float(np.einsum("nd,nd->", r, r) / (d * n))
    if grads_E is not None:
        contrib = 2.0 / (d * n) * w[:, :, None] * r[:, None, :]
        np.add.at(grads_E, idx.reshape(-1), contrib.reshape(-1, d))
    return loss


def directional_loss_raw(anchors, E, psi, pairs, k, tau,
                         grads_E=None, grads_psi=None):
    """Mean of 1 - cos(phi(ci) - phi(cj), psi (ci - cj)).

    Pairs where either vector is numerically zero contribute the maximum
    penalty of 1 with zero gradient.
    """
    ci = pairs[:, 0, :]
    cj = pairs[:, 1, :]
    n = len(pairs)
    idx_i, w_i = _soft_neighbors(anchors, ci, k, tau)
    idx_j, w_j = _soft_neighbors(anchors, cj, k, tau)
    u = _phi(E, idx_i, w_i) - _phi(E, idx_j, w_j)
    dc = ci - cj
    v = dc @ psi.T
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    ok = (nu >= DEGENERATE_NORM) & (nv >= DEGENERATE_NORM)
    cos = np.zeros(n)
    cos[ok] = np.einsum("nd,nd->n", u[ok], v[ok]) / (nu[ok] * nv[ok])
    loss = float(np.mean(np.where(ok, 1.0 - cos, 1.0)))
    if grads_E is not None or grads_psi is not None:
        du = np.zeros_like(u)
        dv = np.zeros_like(v)
        s = ok
        du[s] = -(v[s] / (nu[s] * nv[s])[:, None]
                  - (cos[s] / nu[s] ** 2)[:, None] * u[s]) / n
        dv[s] = -(u[s] / (nu[s] * nv[s])[:, None]
                  - (cos[s] / nv[s] ** 2)[:, None] * v[s]) / n
        if grads_E is not None:
            d = E.shape[1]
            np.add.at(grads_E, idx_i.reshape(-1),
                      (w_i[:, :, None] * du[:, None, :]).reshape(-1, d))
            np.add.at(grads_E, idx_j.reshape(-1),
                      (-w_j[:, :, None] * du[:, None, :]).reshape(-1, d))
        if grads_psi is not None:
            grads_psi += dv.T @ dc
    return loss


def interpolation_loss_raw(anchors, E, pairs, k, tau, grads_E=None):
    """Mean squared gap between phi(midpoint) and the embedding midpoint."""
    ci = pairs[:, 0, :]
    cj = pairs[:, 1, :]
    mid = 0.5 * (ci + cj)
    n = len(pairs)
    idx_m, w_m = _soft_neighbors(anchors, mid, k, tau)
    idx_i, w_i = _soft_neighbors(anchors, ci, k, tau)
    idx_j, w_j = _soft_neighbors(anchors, cj, k, tau)
    r = _phi(E, idx_m, w_m) - 0.5 * (_phi(E, idx_i, w_i) + _phi(E, idx_j, w_j))
    loss = float(np.einsum("nd,nd->", r, r) / n)
    if grads_E is not None:
        d = E.shape[1]
        base = 2.0 / n * r
        np.add.at(grads_E, idx_m.reshape(-1),
                  (w_m[:, :, None] * base[:, None, :]).reshape(-1, d))
        np.add.at(grads_E, idx_i.reshape(-1),
                  (-0.5 * w_i[:, :, None] * base[:, None, :]).reshape(-1, d))
        np.add.at(grads_E, idx_j.reshape(-1),
                  (-0.5 * w_j[:, :, None] * base[:, None, :]).reshape(-1, d))
    return loss


# ----------------------------------------------------------------------
# book-level wrappers

def _pairs_array(pairs):
    return np.array([[p[0].as_tuple(), p[1].as_tuple()] for p in pairs],
                    dtype=np.float64)


def directional_loss(book, params, pairs):
    arr = _pairs_array(pairs)
    return directional_loss_raw(book.anchors, book.embeddings.astype(np.float64),
                                params.psi, arr, book.k_default, book.tau)


def interpolation_loss(book, pairs):
    arr = _pairs_array(pairs)
    return interpolation_loss_raw(book.anchors, book.embeddings.astype(np.float64),
                                  arr, book.k_default, book.tau)


def total_loss_raw(anchors, E, psi, task, pairs, k, tau, lambda_d, lambda_i,
                   grads_E=None, grads_psi=None):
    gE_dir = np.zeros_like(E) if grads_E is not None else None
    gE_int = np.zeros_like(E) if grads_E is not None else None
    gpsi = np.zeros_like(psi) if grads_psi is not None else None
    surr = surrogate_loss_raw(anchors, E, task, k, tau, grads_E)
    ldir = directional_loss_raw(anchors, E, psi, pairs, k, tau, gE_dir, gpsi)
    lint = interpolation_loss_raw(anchors, E, pairs, k, tau, gE_int)
    if grads_E is not None:
        grads_E += lambda_d * gE_dir + lambda_i * gE_int
    if grads_psi is not None:
        grads_psi += lambda_d * gpsi
    total = surr + lambda_d * ldir + lambda_i * lint
    return total, {"surr": surr, "dir": ldir, "interp": lint}


def total_loss(book, params, task, pairs):
    arr = _pairs_array(pairs) if pairs and not isinstance(pairs, np.ndarray) else np.asarray(pairs)
    return total_loss_raw(book.anchors, book.embeddings.astype(np.float64),
                          params.psi, task, arr, book.k_default, book.tau,
                          params.lambda_d, params.lambda_i)


def sample_anchor_pairs(book, n_pairs, rng, dmin=5.0, dmax=40.0, max_tries=10000):
    """Uniform anchor pairs with Lab distance inside [dmin, dmax]."""
    out = np.empty((n_pairs, 2, 3))
    for i in range(n_pairs):
        for _ in range(max_tries):
            a, b = rng.integers(0, book.size, size=2)
            d = np.linalg.norm(book.anchors[a] - book.anchors[b])
            if dmin <= d <= dmax:
                out[i, 0] = book.anchors[a]
                out[i, 1] = book.anchors[b]
                break
        else:
            raise RuntimeError("no anchor pair found in distance band")
    return out


class _AdamW:
    def __init__(self, shape_like, lr, betas=(0.9, 0.999), eps=1e-8, wd=0.0):
        self.lr, self.eps, self.wd = lr, eps, wd
        self.b1, self.b2 = betas
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in shape_like.items()}
        self.v = {k: np.zeros_like(v) for k, v in shape_like.items()}

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            p -= self.lr * (self.m[k] / bc1 / (np.sqrt(self.v[k] / bc2) + self.eps)
                            + self.wd * p)


def train_colorbook(book, params, task, steps, lr=1e-2, seed=0,
                    pairs_per_step=32, weight_decay=0.0):
    """AdamW on the embedding table and psi; anchors, tau, k stay frozen.

    The surrogate term is evaluated full-batch each step so its logged
    trajectory is deterministic; geometry pairs are resampled per step.
    Returns the per-step log [(step, total, surr, dir, interp), ...].
    """
    rng = np.random.default_rng(seed)
    E = book.embeddings.astype(np.float64)
    trainables = {"E": E, "psi": params.psi}
    opt = _AdamW(trainables, lr=lr, wd=weight_decay)
    log = []
    for step in range(steps):
        pairs = sample_anchor_pairs(book, pairs_per_step, rng)
        gE = np.zeros_like(E)
        gpsi = np.zeros_like(params.psi)
        total, comps = total_loss_raw(
            book.anchors, E, params.psi, task, pairs,
            book.k_default, book.tau, params.lambda_d, params.lambda_i,
            grads_E=gE, grads_psi=gpsi)
        if not np.isfinite(total):
            raise FloatingPointError(f"non-finite loss at step {step}")
        opt.step(trainables, {"E": gE, "psi": gpsi})
        log.append((step, total, comps["surr"], comps["dir"], comps["interp"]))
    book.embeddings = E.astype(np.float32)
    return log


def write_log_csv(log, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "total", "surr", "dir", "interp"])
        for row in log:
            w.writerow(row)
