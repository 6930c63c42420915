"""KNN graphs over view features and the GCN propagation operator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist

from .errors import ContractError, ParameterError

_CHUNK = 512


@dataclass(frozen=True)
class GraphView:
    """``A`` is the symmetric 0/1 adjacency, ``A_hat`` the renormalised operator."""

    A: sp.csr_matrix
    A_hat: sp.csr_matrix
    k: int


def knn_adjacency(X, k: int) -> sp.csr_matrix:
    """Union-symmetrised k-nearest-neighbour graph over the columns of ``X``.

    Ties in distance go to the lower column index. ``X`` may be a
    ``ViewFeatures`` or a plain ``d x N`` array.
    """
    X = getattr(X, "X", X)
    pts = np.asarray(X, dtype=np.float64).T
    n = pts.shape[0]
    if not 1 <= k < n:
        raise ParameterError(f"k must satisfy 1 <= k < N={n}, got {k}")
    nbrs = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        dist = cdist(pts[start:stop], pts, metric="sqeuclidean")
        dist[np.arange(stop - start), np.arange(start, stop)] = np.inf
        # stable sort keeps lower indices first among equal distances
        nbrs[start:stop] = np.argsort(dist, axis=1, kind="stable")[:, :k]
    rows = np.repeat(np.arange(n), k)
    directed = sp.csr_matrix((np.ones(n * k), (rows, nbrs.ravel())), shape=(n, n))
    A = directed.maximum(directed.T).tocsr()
    A.setdiag(0)
    A.eliminate_zeros()
    A.sort_indices()
    return A


def renormalize(A) -> sp.csr_matrix:
    """``D^-1/2 (A + I) D^-1/2`` with ``D`` the row sums of ``A + I``."""
    A = sp.csr_matrix(A, dtype=np.float64)
    if A.shape[0] != A.shape[1]:
        raise ContractError(f"adjacency must be square, got {A.shape}")
    if abs(A - A.T).max() > 0:
        raise ContractError("adjacency must be symmetric")
    A_tilde = A + sp.identity(A.shape[0], format="csr")
    inv_sqrt = 1.0 / np.sqrt(np.asarray(A_tilde.sum(axis=1)).ravel())
    D = sp.diags(inv_sqrt)
    out = (D @ A_tilde @ D).tocsr()
    out.sort_indices()
    return out


def build_graph(X, k: int) -> GraphView:
    A = knn_adjacency(X, k)
    return GraphView(A=A, A_hat=renormalize(A), k=k)


def dump_edges(A, path) -> None:
    """Write each undirected edge once as an ``"i j"`` line with ``i < j``."""
    coo = sp.triu(sp.csr_matrix(A), k=1).tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="ascii") as fh:
        for i, j in zip(coo.row[order], coo.col[order]):
            fh.write(f"{i} {j}\n")
