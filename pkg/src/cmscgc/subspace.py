"""Graph-convolutional self-expression, affinities and attention fusion.

Self-expression solves the ridge problem

    min_C  1/2 ||Z C - X'||_F^2 + lam/2 ||C||_F^2

whose minimiser is ``C = (Z^T Z + lam I_N)^-1 Z^T X'``. By the push-through
identity this equals ``Z^T (Z Z^T + lam I_e)^-1 X'``, an ``e x e`` solve
instead of an ``N x N`` one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.special import softmax

from ._adam import Adam
from .errors import ContractError, DivergenceError, NumericError, ParameterError


@dataclass(frozen=True)
class SelfExpression:
    C: np.ndarray
    lam: float
    view_id: str = ""


@dataclass(frozen=True)
class AffinityBundle:
    Ys: list
    S: np.ndarray
    a: np.ndarray
    Y_F: np.ndarray
    loss_history: tuple = ()


def embedding_dictionary(emb):
    """``(Z, X')`` pair for trained embeddings: ``Z = X' A_hat`` by construction."""
    return emb.Z, emb.target


def raw_dictionary(X, A_hat):
    """``(X A_hat, X)``: propagate raw view features once and reconstruct them."""
    X = getattr(X, "X", X)
    return np.asarray((A_hat @ X.T).T), X


def unit_scale(Z, X):
    """Rescale a dictionary/target pair so the dictionary's mean column energy is 1.

    Fixes what ``lam`` means independently of the feature scale; the solution
    for ``(s Z, s X, s**2 lam)`` equals the one for ``(Z, X, lam)``.
    """
    energy = np.mean(np.sum(Z * Z, axis=0))
    if not energy > 0:
        raise NumericError("dictionary is identically zero")
    s = np.sqrt(energy)
    return Z / s, X / s


def solve_self_expression(Z, X, lam, method="auto", zero_diagonal=False, view_id=""):
    """Closed-form self-expression coefficients ``C`` (``N x N``).

    ``method`` is ``"pushthrough"`` (solve in feature space), ``"normal"``
    (solve the ``N x N`` normal equations) or ``"auto"`` (whichever system is
    smaller). ``zero_diagonal`` zeroes ``diag(C)`` after the solve.
    """
    Z = np.asarray(getattr(Z, "Z", Z), dtype=np.float64)
    X = np.asarray(getattr(X, "X", X), dtype=np.float64)
    if not lam > 0:
        raise ParameterError(f"lambda must be > 0, got {lam}")
    if Z.ndim != 2 or Z.shape != X.shape:
        raise ContractError(f"dictionary {Z.shape} and target {X.shape} must have equal shapes")
    rows, n = Z.shape
    if method == "auto":
        method = "pushthrough" if rows <= n else "normal"
    try:
        if method == "pushthrough":
            gram = Z @ Z.T
            gram[np.diag_indices(rows)] += lam
            C = Z.T @ sla.solve(gram, X, assume_a="pos")
        elif method == "normal":
            gram = Z.T @ Z
            gram[np.diag_indices(n)] += lam
            C = sla.solve(gram, Z.T @ X, assume_a="pos")
        else:
            raise ParameterError(f"unknown solve method {method!r}")
    except sla.LinAlgError as exc:
        raise NumericError(f"self-expression solve failed: {exc}") from exc
    if not np.all(np.isfinite(C)):
        raise NumericError("self-expression produced non-finite coefficients")
    if zero_diagonal:
        np.fill_diagonal(C, 0.0)
    return SelfExpression(C=C, lam=float(lam), view_id=view_id)


def self_expression_objective(Z, X, C, lam):
    R = Z @ C - X
    return 0.5 * (np.sum(R * R) + lam * np.sum(C * C))


def normal_equation_residual(Z, X, C, lam):
    """Frobenius norm of ``(Z^T Z + lam I) C - Z^T X`` and of ``Z^T X``."""
    ZtX = Z.T @ X
    return np.linalg.norm(Z.T @ (Z @ C) + lam * C - ZtX), np.linalg.norm(ZtX)


def build_affinity(C):
    C = getattr(C, "C", C)
    absC = np.abs(C)
    return 0.5 * (absC + absC.T)


def _stack(Ys, S=None):
    Ys = [np.asarray(Y) for Y in Ys]
    if len(Ys) < 2:
        raise ContractError("attention fusion needs at least two views")
    n = Ys[0].shape[0]
    if any(Y.shape != (n, n) for Y in Ys):
        raise ContractError("all affinities must be N x N with the same N")
    if S is not None and S.shape != (len(Ys) * n, len(Ys)):
        raise ContractError(f"S is {S.shape}, expected {(len(Ys) * n, len(Ys))}")
    return np.hstack(Ys)


def _attention(Ycat, S):
    t = np.tanh(Ycat @ S)
    s = softmax(t, axis=1)
    norm = np.linalg.norm(s, axis=1, keepdims=True)
    return t, s, norm, s / norm


def attention_weights(Ys, S):
    """Per-node view weights ``l2(softmax(tanh([Y_1 .. Y_P] S)))``, ``N x P``."""
    Ycat = _stack(Ys, S)
    return _attention(Ycat, S)[3]


def fuse_affinities(Ys, a):
    """Row ``i`` of ``Y_p`` scaled by ``a[i, p]``, summed over views, then symmetrised."""
    a = np.asarray(a)
    if a.shape != (Ys[0].shape[0], len(Ys)):
        raise ContractError(f"weights {a.shape} do not match {len(Ys)} affinities")
    Y = sum(a[:, p, None] * Yp for p, Yp in enumerate(Ys))
    return 0.5 * (Y + Y.T)


def fusion_loss(Z_cat, X_cat, Y_F, lam):
    R = Z_cat @ Y_F - X_cat
    return 0.5 * np.sum(R * R) + lam * np.sum(Y_F * Y_F)


def _fusion_loss_grad(Ycat, Ys, S, Z_cat, X_cat, lam):
    t, s, norm, a = _attention(Ycat, S)
    Y_F = fuse_affinities(Ys, a)
    R = Z_cat @ Y_F - X_cat
    loss = 0.5 * np.sum(R * R) + lam * np.sum(Y_F * Y_F)
    G = Z_cat.T @ R + 2.0 * lam * Y_F
    G = 0.5 * (G + G.T)
    da = np.stack([np.sum(G * Yp, axis=1) for Yp in Ys], axis=1)
    ds = (da - a * np.sum(a * da, axis=1, keepdims=True)) / norm
    dt = s * (ds - np.sum(s * ds, axis=1, keepdims=True))
    dM = dt * (1.0 - t * t)
    return loss, Ycat.T @ dM


def init_attention(n, p, seed):
    rng = np.random.default_rng(seed)
    bound = np.sqrt(6.0 / (p * n + p))
    return rng.uniform(-bound, bound, size=(p * n, p))


def optimize_attention(Zs, Xs, Ys, steps=100, lr=1e-2, seed=0, lam=1.0, S0=None):
    """Fit the attention parameters ``S`` by Adam on the fused reconstruction loss.

    The loss is ``1/2 ||Z_cat Y_F - X_cat||^2 + lam ||Y_F||^2`` with the
    dictionaries and targets stacked along the feature axis and ``Y_F`` the
    attention-weighted fusion of the fixed ``Ys``. Returns the best-loss
    iterate as an ``AffinityBundle``. ``S0`` overrides the seeded init.
    """
    if steps < 0:
        raise ParameterError("steps must be >= 0")
    Ycat = _stack(Ys)
    n, p = Ys[0].shape[0], len(Ys)
    Z_cat = np.vstack([np.asarray(getattr(Z, "Z", Z)) for Z in Zs])
    X_cat = np.vstack([np.asarray(getattr(X, "X", X)) for X in Xs])
    if Z_cat.shape != X_cat.shape or Z_cat.shape[1] != n:
        raise ContractError(f"stacked dictionary {Z_cat.shape} / target {X_cat.shape} mismatch")
    S = init_attention(n, p, seed) if S0 is None else np.array(S0, dtype=np.float64)
    _stack(Ys, S)

    opt = Adam([S], lr=lr)
    history = []
    best_loss, best_S = np.inf, S.copy()
    for step in range(steps + 1):
        loss, dS = _fusion_loss_grad(Ycat, Ys, S, Z_cat, X_cat, lam)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite fusion loss at step {step}", step)
        history.append(float(loss))
        if loss < best_loss:
            best_loss, best_S = loss, S.copy()
        if step < steps:
            opt.step([S], [dS])
    a = attention_weights(Ys, best_S)
    return AffinityBundle(Ys=list(Ys), S=best_S, a=a, Y_F=fuse_affinities(Ys, a),
                          loss_history=tuple(history))


def mean_fusion(Ys):
    """Uniform weights ``1/sqrt(P)`` per row, i.e. attention with ``S = 0``."""
    n, p = Ys[0].shape[0], len(Ys)
    S = np.zeros((p * n, p))
    a = attention_weights(Ys, S) if p > 1 else np.ones((n, 1))
    return AffinityBundle(Ys=list(Ys), S=S, a=a, Y_F=fuse_affinities(Ys, a))
