"""Embedding-geometry analytics: linear CKA, cross-space kNN overlap, and
drift statistics between two embedding snapshots."""

from __future__ import annotations

import json

import numpy as np


def linear_cka(X, Y) -> float:
    """Linear CKA between row-aligned representations X (n,p) and Y (n,q)."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y must be 2-D with equal row counts")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    Xc = X - X.mean(axis=0)
    Yc = Y - Y.mean(axis=0)
    cross = np.linalg.norm(Xc.T @ Yc, "fro") ** 2
    nx = np.linalg.norm(Xc.T @ Xc, "fro")
    ny = np.linalg.norm(Yc.T @ Yc, "fro")
    if nx == 0.0 or ny == 0.0:
        raise ValueError("zero-variance input")
    return float(cross / (nx * ny))


def _knn_sets(points, k):
    n = points.shape[0]
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)  # self excluded
    sets = []
    for i in range(n):
        order = np.argsort(d[i], kind="stable")[:k]
        sets.append(set(order.tolist()))
    return sets


def knn_overlap(A, B, k: int) -> float:
    """Mean fraction of shared k nearest neighbors between two spaces."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape[0] != B.shape[0]:
        raise ValueError("row counts must match")
    n = A.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    sa = _knn_sets(A, k)
    sb = _knn_sets(B, k)
    return float(np.mean([len(x & y) / k for x, y in zip(sa, sb)]))


def drift_report(E0, E1) -> dict:
    """Per-anchor movement between two embedding snapshots.

    Rows with zero initial norm get relative drift +inf and are excluded
    from the relative-drift summaries (their count is reported).
    """
    E0 = np.asarray(E0, dtype=np.float64)
    E1 = np.asarray(E1, dtype=np.float64)
    if E0.shape != E1.shape:
        raise ValueError("shape mismatch")
    diff = E1 - E0
    l2 = np.linalg.norm(diff, axis=1)
    n0 = np.linalg.norm(E0, axis=1)
    n1 = np.linalg.norm(E1, axis=1)
    denom = n0 * n1
    cos = np.ones(len(E0))
    nz = denom > 0
    cos[nz] = np.einsum("ij,ij->i", E0[nz], E1[nz]) / denom[nz]
    cos = np.clip(cos, -1.0, 1.0)
    rel = np.full(len(E0), np.inf)
    rel[n0 > 0] = l2[n0 > 0] / n0[n0 > 0]
    finite = np.isfinite(rel)
    return {
        "l2": l2,
        "cosine": cos,
        "relative": rel,
        "summary": {
            "mean_l2": float(l2.mean()),
            "median_l2": float(np.median(l2)),
            "mean_cosine": float(cos.mean()),
            "median_cosine": float(np.median(cos)),
            "mean_relative": float(rel[finite].mean()) if finite.any() else None,
            "median_relative": float(np.median(rel[finite])) if finite.any() else None,
            "zero_norm_rows": int((~finite).sum()),
        },
    }


def report_json(report: dict) -> str:
    """Summary-only JSON with fixed key order."""
    return json.dumps(report["summary"], indent=2)
