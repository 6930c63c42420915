"""Normalised spectral clustering and a seeded k-means."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import eigsh
from scipy.spatial.distance import cdist

from .errors import ContractError, ParameterError

DENSE_LIMIT = 2000


class DegenerateClusteringWarning(UserWarning):
    """The affinity carries no usable structure or a cluster came out empty."""


@dataclass(frozen=True)
class ClusterResult:
    labels: np.ndarray
    k: int
    embedding: np.ndarray
    kmeans_inertia: float
    degenerate: bool = False


def spectral_embed(Y, k):
    """Row-normalised top-``k`` eigenvectors of ``D^-1/2 Y D^-1/2``.

    Zero-degree nodes are given degree 1, so their rows stay zero.
    """
    Y = np.asarray(Y, dtype=np.float64)
    n = Y.shape[0]
    if Y.shape != (n, n):
        raise ContractError(f"affinity must be square, got {Y.shape}")
    if not 2 <= k < n:
        raise ParameterError(f"need 2 <= k < N={n}, got k={k}")
    if np.max(np.abs(Y - Y.T)) > 1e-9:
        raise ContractError("affinity is not symmetric")
    if Y.min() < 0:
        raise ContractError("affinity has negative entries")
    deg = Y.sum(axis=1)
    deg[deg == 0] = 1.0
    inv = 1.0 / np.sqrt(deg)
    M = inv[:, None] * Y * inv[None, :]
    M = 0.5 * (M + M.T)
    if n <= DENSE_LIMIT:
        _, vecs = sla.eigh(M, subset_by_index=[n - k, n - 1])
    else:
        v0 = np.random.default_rng(0).uniform(0.5, 1.5, n)
        _, vecs = eigsh(M, k=k, which="LA", tol=1e-10, maxiter=5000, v0=v0)
        vecs = vecs[:, np.argsort(_)]
    vecs = vecs[:, ::-1]
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    return np.divide(vecs, norms, out=np.zeros_like(vecs), where=norms > 1e-12)


def _kmeans_pp(points, k, rng):
    n = points.shape[0]
    centers = [rng.integers(n)]
    d2 = cdist(points, points[centers[0]][None], "sqeuclidean").ravel()
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = rng.choice(n, p=d2 / total)
        else:
            nxt = rng.choice(np.setdiff1d(np.arange(n), centers))
        centers.append(nxt)
        d2 = np.minimum(d2, cdist(points, points[nxt][None], "sqeuclidean").ravel())
    return points[centers].copy()


def _lloyd(points, centers, max_iter, tol):
    prev = np.inf
    for _ in range(max_iter):
        d2 = cdist(points, centers, "sqeuclidean")
        labels = d2.argmin(axis=1)
        inertia = d2[np.arange(len(points)), labels].sum()
        assert inertia <= prev * (1 + 1e-12) + 1e-12, "k-means inertia increased"
        prev = inertia
        new = centers.copy()
        for j in range(len(centers)):
            members = labels == j
            if members.any():
                new[j] = points[members].mean(axis=0)
        shift = np.max(np.linalg.norm(new - centers, axis=1))
        centers = new
        if shift < tol:
            break
    d2 = cdist(points, centers, "sqeuclidean")
    labels = d2.argmin(axis=1)
    return labels, float(d2[np.arange(len(points)), labels].sum())


def kmeans(points, k, seed=0, restarts=10, max_iter=300, tol=1e-8) -> ClusterResult:
    """k-means++ seeding plus Lloyd iterations; keeps the lowest-inertia restart."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ParameterError(f"need 1 <= k <= N={n}, got k={k}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        labels, inertia = _lloyd(points, _kmeans_pp(points, k, rng), max_iter, tol)
        if best is None or inertia < best[1]:
            best = (labels, inertia)
    labels, inertia = best
    empty = np.bincount(labels, minlength=k).min() == 0
    if empty:
        warnings.warn("k-means left a cluster empty", DegenerateClusteringWarning, stacklevel=2)
    return ClusterResult(labels=labels, k=k, embedding=points, kmeans_inertia=inertia,
                         degenerate=bool(empty))


def cluster(Y, k, seed=0, restarts=10) -> ClusterResult:
    """Spectral embedding of ``Y`` followed by k-means on its rows."""
    Y = np.asarray(Y, dtype=np.float64)
    off_diag = Y.sum() - np.trace(Y)
    degenerate = not off_diag > 0
    if degenerate:
        warnings.warn("affinity has no off-diagonal mass; no cluster structure",
                      DegenerateClusteringWarning, stacklevel=2)
    emb = spectral_embed(Y, k)
    res = kmeans(emb, k, seed=seed, restarts=restarts)
    return ClusterResult(labels=res.labels, k=k, embedding=emb,
                         kmeans_inertia=res.kmeans_inertia,
                         degenerate=degenerate or res.degenerate)


def cluster_kmeans_raw(X, k, seed=0, restarts=10) -> ClusterResult:
    """Baseline: k-means directly on the columns of ``X`` (``d x N``)."""
    X = getattr(X, "X", X)
    return kmeans(np.asarray(X).T, k, seed=seed, restarts=restarts)
