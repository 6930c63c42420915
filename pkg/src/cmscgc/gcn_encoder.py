"""Two-layer GCN encoders trained with a cross-view contrastive loss.

Per view the encoder computes ``H = relu(A_hat X^T W0)``, ``T = act(H W1)``
and ``Z^T = A_hat T`` where ``act`` is the identity (default) or relu. ``T`` is
kept alongside ``Z`` because ``Z = T^T A_hat`` is exactly a graph-propagated
dictionary of ``T``, which the self-expression step reconstructs.

All gradients are derived by hand; there is no autodiff dependency.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from ._adam import Adam
from .errors import ContractError, DivergenceError, NumericError, ParameterError


ACTIVATIONS = ("relu", "linear")


@dataclass(frozen=True)
class ContrastiveConfig:
    tau: float = 0.5
    epochs: int = 200
    learning_rate: float = 1e-3
    hidden: int = 64
    embed: int = 32
    seed: int = 0
    exclude_self: bool = False  # drop k == i from the intra-view negatives
    output_activation: str = "linear"

    def __post_init__(self):
        if not self.tau > 0:
            raise ParameterError(f"tau must be > 0, got {self.tau}")
        if self.epochs < 0:
            raise ParameterError(f"epochs must be >= 0, got {self.epochs}")
        if self.output_activation not in ACTIVATIONS:
            raise ParameterError(f"output_activation must be one of {ACTIVATIONS}")


@dataclass
class EncoderState:
    """Weights ``[(W0, W1), ...]`` per view plus optimizer state and history."""

    weights: list
    seed: int
    epoch: int = 0
    optimizer: Adam | None = None
    loss_history: list = field(default_factory=list)


@dataclass(frozen=True)
class Embeddings:
    """``Z`` and ``target`` are both ``e x N``; ``Z = target @ A_hat``."""

    view_id: str
    Z: np.ndarray
    target: np.ndarray


def glorot(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_encoder(dims, cfg: ContrastiveConfig) -> EncoderState:
    """Independent weights for each view input dimension in ``dims``."""
    rng = np.random.default_rng(cfg.seed)
    weights = [(glorot(rng, d, cfg.hidden), glorot(rng, cfg.hidden, cfg.embed)) for d in dims]
    return EncoderState(weights=weights, seed=cfg.seed)


def _check_shapes(X, A_hat, W0, W1):
    d, n = X.shape
    if A_hat.shape != (n, n):
        raise ContractError(f"A_hat is {A_hat.shape}, expected {(n, n)}")
    if W0.shape[0] != d or W1.shape[0] != W0.shape[1]:
        raise ContractError(f"weights {W0.shape}, {W1.shape} do not fit input dim {d}")


def _forward(P, A_hat, W0, W1, activation="linear"):
    U = P @ W0
    H = np.maximum(U, 0.0)
    T = H @ W1
    if activation == "relu":
        T = np.maximum(T, 0.0)
    Zt = A_hat @ T
    return U, H, T, Zt


def _backward(P, A_hat, W1, U, H, T, dZt, activation="linear"):
    dT = A_hat.T @ dZt
    if activation == "relu":
        dT = dT * (T > 0)
    dW1 = H.T @ dT
    dU = (dT @ W1.T) * (U > 0)
    dW0 = P.T @ dU
    return dW0, dW1


def gcn_forward(X, A_hat, weights, view_id=None, activation="linear") -> Embeddings:
    """Embed one view. ``weights`` is the ``(W0, W1)`` pair for that view."""
    view_id = view_id or getattr(X, "view_id", "")
    X = getattr(X, "X", X)
    W0, W1 = weights
    _check_shapes(X, A_hat, W0, W1)
    _, _, T, Zt = _forward(A_hat @ X.T, A_hat, W0, W1, activation)
    return Embeddings(view_id=view_id, Z=Zt.T, target=T.T)


def _unit_rows(Zt):
    norms = np.linalg.norm(Zt, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise NumericError("zero-norm embedding: cosine similarity undefined")
    return Zt / norms, norms


def _contrastive(Z1t, Z2t, tau, exclude_self=False, with_grad=True):
    """Loss and gradients w.r.t. the ``N x e`` row-embeddings of both views."""
    n = Z1t.shape[0]
    U, nu = _unit_rows(Z1t)
    V, nv = _unit_rows(Z2t)
    S12 = U @ V.T
    S11 = U @ U.T
    S22 = V @ V.T
    if exclude_self:
        np.fill_diagonal(S11, -np.inf)
        np.fill_diagonal(S22, -np.inf)
    L1 = np.hstack([S12, S11]) / tau
    L2 = np.hstack([S12.T, S22]) / tau
    pos = np.diag(S12) / tau
    loss = (np.sum(logsumexp(L1, axis=1) - pos) + np.sum(logsumexp(L2, axis=1) - pos)) / (2 * n)
    if not with_grad:
        return loss, None, None

    P = softmax(L1, axis=1)
    Q = softmax(L2, axis=1)
    c = 1.0 / (2 * n * tau)
    eye = np.eye(n)
    G12 = c * (P[:, :n] - eye) + c * (Q[:, :n] - eye).T
    G11 = c * P[:, n:]
    G22 = c * Q[:, n:]
    dU = G12 @ V + (G11 + G11.T) @ U
    dV = G12.T @ U + (G22 + G22.T) @ V
    dZ1 = (dU - U * np.sum(U * dU, axis=1, keepdims=True)) / nu
    dZ2 = (dV - V * np.sum(V * dV, axis=1, keepdims=True)) / nv
    return loss, dZ1, dZ2


def contrastive_loss(Z1, Z2, tau, exclude_self=False) -> float:
    """Symmetrised cross-view InfoNCE over cosine similarities.

    For anchor ``z_i`` the denominator sums over every ``z'_k`` and every
    ``z_k`` including ``k == i`` unless ``exclude_self`` is set. ``Z1``/``Z2``
    are ``Embeddings`` or ``e x N`` arrays.
    """
    Z1 = getattr(Z1, "Z", Z1)
    Z2 = getattr(Z2, "Z", Z2)
    if Z1.shape != Z2.shape:
        raise ContractError(f"embedding shapes differ: {Z1.shape} vs {Z2.shape}")
    if not tau > 0:
        raise ParameterError("tau must be > 0")
    loss, _, _ = _contrastive(Z1.T, Z2.T, tau, exclude_self, with_grad=False)
    return float(loss)


def loss_gradients(Xs, A_hats, weights, tau, exclude_self=False, activation="linear"):
    """Loss and ``[(dW0, dW1), (dW0, dW1)]`` for a two-view encoder."""
    Xs = [getattr(X, "X", X) for X in Xs]
    if len(Xs) != 2:
        raise ContractError("the contrastive loss needs exactly two views")
    for X, A_hat, (W0, W1) in zip(Xs, A_hats, weights):
        _check_shapes(X, A_hat, W0, W1)
    props = [A_hat @ X.T for X, A_hat in zip(Xs, A_hats)]
    return _loss_and_grads(props, A_hats, weights, tau, exclude_self, activation)


def _loss_and_grads(props, A_hats, weights, tau, exclude_self, activation):
    caches = [_forward(P, A, W0, W1, activation) for P, A, (W0, W1) in zip(props, A_hats, weights)]
    loss, dZ1, dZ2 = _contrastive(caches[0][3], caches[1][3], tau, exclude_self)
    grads = []
    for P, A, (_, W1), (U, H, T, _), dZt in zip(props, A_hats, weights, caches, (dZ1, dZ2)):
        grads.append(_backward(P, A, W1, U, H, T, dZt, activation))
    return float(loss), grads


def train(views, graphs, cfg: ContrastiveConfig, state: EncoderState | None = None):
    """Run ``cfg.epochs`` full-batch Adam steps on the contrastive loss.

    ``state.loss_history[t]`` is the loss after ``t`` updates, so it holds
    ``epochs + 1`` values. Returns ``(state, [Embeddings, Embeddings])``.
    """
    if len(views) != 2 or len(graphs) != 2:
        raise ContractError("contrastive training needs exactly two views")
    A_hats = [g.A_hat for g in graphs]
    if state is None:
        state = init_encoder([v.d for v in views], cfg)
    for v, A, (W0, W1) in zip(views, A_hats, state.weights):
        _check_shapes(v.X, A, W0, W1)
    params = [w for pair in state.weights for w in pair]
    if state.optimizer is None:
        state.optimizer = Adam(params, lr=cfg.learning_rate)
    props = [A @ v.X.T for v, A in zip(views, A_hats)]

    for _ in range(cfg.epochs):
        loss, grads = _loss_and_grads(props, A_hats, state.weights, cfg.tau, cfg.exclude_self,
                                      cfg.output_activation)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite contrastive loss at epoch {state.epoch}", state.epoch)
        state.loss_history.append(loss)
        state.optimizer.step(params, [g for pair in grads for g in pair])
        state.epoch += 1
        if not all(np.all(np.isfinite(p)) for p in params):
            raise DivergenceError(f"non-finite weights after epoch {state.epoch}", state.epoch)

    embeddings = [gcn_forward(v, A, w, view_id=v.view_id, activation=cfg.output_activation)
                  for v, A, w in zip(views, A_hats, state.weights)]
    final = contrastive_loss(embeddings[0], embeddings[1], cfg.tau, cfg.exclude_self)
    if not np.isfinite(final):
        raise DivergenceError(f"non-finite contrastive loss at epoch {state.epoch}", state.epoch)
    state.loss_history.append(final)
    return state, embeddings
