"""Geometry losses: closed-form values, finite-difference gradients, and
the desk-scale training harness."""

import csv

import numpy as np
import pytest

from numcolor import codebook as cb
from numcolor import geometry as geo

H = 1e-4
TOL = 1e-4


@pytest.fixture(scope="module")
def book():
    b = cb.new_colorbook(20.0, dim=16)
    rng = np.random.default_rng(0)
    b.embeddings = rng.normal(0, 0.1, (b.size, 16)).astype(np.float32)
    return b


def fd_check(f, P, G, rng, n_probe=25):
    worst = 0.0
    for _ in range(n_probe):
        idx = tuple(int(rng.integers(0, s)) for s in P.shape)
        orig = P[idx]
        P[idx] = orig + H
        fp = f()
        P[idx] = orig - H
        fm = f()
        P[idx] = orig
        fd = (fp - fm) / (2 * H)
        rel = abs(G[idx] - fd) / max(abs(G[idx]), abs(fd), 1e-6)
        worst = max(worst, rel)
    return worst


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_loss_gradients_match_fd(book, seed):
    rng = np.random.default_rng(seed)
    K, d = book.size, book.dim
    E = rng.normal(0, 0.1, (K, d))
    psi = rng.normal(0, 0.1, (d, 3))
    task = geo.SurrogateTask(book.anchors[rng.integers(0, K, 40)],
                             rng.normal(0, 0.1, (40, d)))
    pairs = geo.sample_anchor_pairs(book, 16, rng)

    gE = np.zeros_like(E)
    geo.surrogate_loss_raw(book.anchors, E, task, 8, 2.0, gE)
    assert fd_check(lambda: geo.surrogate_loss_raw(book.anchors, E, task, 8, 2.0),
                    E, gE, rng) < TOL

    gE = np.zeros_like(E)
    gpsi = np.zeros_like(psi)
    geo.directional_loss_raw(book.anchors, E, psi, pairs, 8, 2.0, gE, gpsi)
    f = lambda: geo.directional_loss_raw(book.anchors, E, psi, pairs, 8, 2.0)
    assert fd_check(f, E, gE, rng) < TOL
    assert fd_check(f, psi, gpsi, rng) < TOL

    gE = np.zeros_like(E)
    geo.interpolation_loss_raw(book.anchors, E, pairs, 8, 2.0, gE)
    assert fd_check(lambda: geo.interpolation_loss_raw(book.anchors, E, pairs, 8, 2.0),
                    E, gE, rng) < TOL


def test_total_loss_combines_terms(book):
    rng = np.random.default_rng(1)
    E = rng.normal(0, 0.1, (book.size, book.dim))
    psi = rng.normal(0, 0.1, (book.dim, 3))
    task = geo.SurrogateTask(book.anchors[:20], rng.normal(0, 0.1, (20, book.dim)))
    pairs = geo.sample_anchor_pairs(book, 8, rng)
    total, comps = geo.total_loss_raw(book.anchors, E, psi, task, pairs,
                                      8, 2.0, 0.3, 0.2)
    assert np.isclose(total,
                      comps["surr"] + 0.3 * comps["dir"] + 0.2 * comps["interp"])
    gE = np.zeros_like(E)
    gpsi = np.zeros_like(psi)
    geo.total_loss_raw(book.anchors, E, psi, task, pairs, 8, 2.0, 0.3, 0.2,
                       grads_E=gE, grads_psi=gpsi)
    rng2 = np.random.default_rng(2)
    f = lambda: geo.total_loss_raw(book.anchors, E, psi, task, pairs,
                                   8, 2.0, 0.3, 0.2)[0]
    assert fd_check(f, E, gE, rng2) < TOL
    assert fd_check(f, psi, gpsi, rng2) < TOL


def collinear_anchor_pairs(book):
    """Anchor pairs whose Lab midpoint is itself an anchor."""
    index = {tuple(a): i for i, a in enumerate(book.anchors)}
    pairs = []
    for a in book.anchors:
        for step in np.eye(3) * 2 * book.spacing:
            b = a + step
            mid = a + step / 2
            if tuple(b) in index and tuple(mid) in index:
                pairs.append([a, b])
    return np.array(pairs)


def test_interpolation_loss_zero_for_linear_map(book):
    # phi is linear in E; with k=1 on anchor queries and E an exact linear
    # image of the anchors, midpoints that fall on anchors reconstruct
    # exactly and L_interp vanishes
    rng = np.random.default_rng(3)
    M = rng.normal(0, 0.1, (book.dim, 3))
    E = book.anchors @ M.T
    pairs = collinear_anchor_pairs(book)
    assert len(pairs) > 10
    loss = geo.interpolation_loss_raw(book.anchors, E, pairs, k=1, tau=2.0)
    assert loss < 1e-20
    # constant embeddings are the other exact case, for any k
    loss_const = geo.interpolation_loss_raw(
        book.anchors, np.ones_like(E), pairs[:8], k=8, tau=2.0)
    assert loss_const < 1e-20


def test_directional_loss_bounds_and_degenerate(book):
    rng = np.random.default_rng(4)
    E = rng.normal(0, 1, (book.size, book.dim))
    psi = rng.normal(0, 1, (book.dim, 3))
    pairs = geo.sample_anchor_pairs(book, 32, rng)
    loss = geo.directional_loss_raw(book.anchors, E, psi, pairs, 8, 2.0)
    assert 0.0 <= loss <= 2.0
    # constant embeddings: phi differences vanish -> penalty 1, zero grad
    Ec = np.ones((book.size, book.dim))
    gE = np.zeros_like(Ec)
    gpsi = np.zeros_like(psi)
    loss = geo.directional_loss_raw(book.anchors, Ec, psi, pairs, 8, 2.0,
                                    gE, gpsi)
    assert loss == 1.0
    assert np.all(gE == 0.0) and np.all(gpsi == 0.0)


def test_perfectly_aligned_pair_scores_zero():
    anchors = np.array([[0.0, 0, 0], [10.0, 0, 0]])
    E = np.array([[0.0, 0.0], [1.0, 0.0]])
    psi = np.array([[0.1, 0.0, 0.0], [0.0, 0.0, 0.0]])  # maps ci-cj onto u
    pairs = np.array([[[10.0, 0, 0], [0.0, 0, 0]]])
    loss = geo.directional_loss_raw(anchors, E, psi, pairs, k=1, tau=2.0)
    assert loss < 1e-12


def test_sample_anchor_pairs_band(book):
    rng = np.random.default_rng(5)
    pairs = geo.sample_anchor_pairs(book, 50, rng, dmin=5.0, dmax=40.0)
    d = np.linalg.norm(pairs[:, 0] - pairs[:, 1], axis=1)
    assert np.all((d >= 5.0) & (d <= 40.0))


def test_geometry_params_validation():
    with pytest.raises(ValueError):
        geo.GeometryParams(np.ones((4, 3)), lambda_d=-0.1)
    with pytest.raises(ValueError):
        geo.GeometryParams(np.full((4, 3), np.nan))


def test_train_colorbook_decreases_loss(tmp_path, book):
    b = cb.ColorBook(book.anchors.copy(), book.embeddings.copy(),
                     book.spacing, book.k_default, book.tau)
    params = geo.GeometryParams.init(b.dim, seed=0)
    task = geo.SurrogateTask.from_book(b, 128, seed=0)
    log = geo.train_colorbook(b, params, task, steps=60, lr=1e-2, seed=0)
    assert len(log) == 60
    # surrogate is full-batch, so its trajectory must trend down
    assert log[-1][2] < log[0][2]
    assert b.embeddings.dtype == np.float32
    path = tmp_path / "log.csv"
    geo.write_log_csv(log, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["step", "total", "surr", "dir", "interp"]
    assert len(rows) == 61


def test_train_colorbook_deterministic(book):
    outs = []
    for _ in range(2):
        b = cb.ColorBook(book.anchors.copy(), book.embeddings.copy(),
                         book.spacing, book.k_default, book.tau)
        params = geo.GeometryParams.init(b.dim, seed=1)
        task = geo.SurrogateTask.from_book(b, 64, seed=1)
        geo.train_colorbook(b, params, task, steps=10, lr=1e-2, seed=1)
        outs.append(b.embeddings.copy())
    assert np.array_equal(outs[0], outs[1])


def test_soft_neighbors_match_query(book):
    from numcolor.colorspace import LabColor
    rng = np.random.default_rng(6)
    pts = rng.uniform([0, -60, -60], [100, 60, 60], (20, 3))
    idx, w = geo._soft_neighbors(book.anchors, pts, 8, 2.0)
    for row, (i_row, w_row) in zip(pts, zip(idx, w)):
        res = cb.query(book, LabColor(*row), k=8, tau=2.0)
        assert np.array_equal(res.indices, i_row)
        assert np.allclose(res.weights, w_row, atol=1e-14)
