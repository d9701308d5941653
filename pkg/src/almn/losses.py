"""Batch losses: plain pairwise N-pair, the center-anchored objective,
its virtual-point (margin) variant, and the fixed multiple-angle ablation.

Every softmax denominator is evaluated with a max-logit shift, and the L2
regularization term always uses the ORIGINAL embeddings, never the virtual
points. N in the 1/N prefactor is the full batch size m * n. Negatives for
an anchor are all batch samples whose label differs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .batch import EmbeddingBatch
from .centers import CenterBank
from .errors import (
    DegenerateVector,
    NonFiniteResult,
    OddGroupSize,
    SingleClassBatch,
)
from .geometry import EPS, VpgContext

_MARGIN_MODES = ("baseline", "almn", "npair", "fixed_margin")


@dataclass(frozen=True)
class LossConfig:
    """Knobs shared by the loss family.

    beta scales the virtual-point offset (0 recovers the center-anchored
    baseline), lam is the L2 regularization constant, m_angle the angle
    multiplier of the fixed-margin ablation.
    """

    beta: float = 0.0
    lam: float = 0.0005
    margin_mode: str = "baseline"
    m_angle: int = 1

    def __post_init__(self):
        if self.margin_mode not in _MARGIN_MODES:
            raise ValueError(f"margin_mode must be one of {_MARGIN_MODES}")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.margin_mode == "baseline" and self.beta != 0:
            raise ValueError("baseline mode requires beta = 0")
        if self.m_angle < 1:
            raise ValueError("m_angle must be a positive integer")


class _ForwardState:
    """Intermediates of one center-anchored softmax evaluation.

    Shared between loss evaluation and the analytic backward pass so both
    sides see bitwise-identical quantities.
    """

    __slots__ = (
        "X", "y", "C", "norm_x", "norm_c", "v", "q", "w", "theta_i",
        "theta_nn", "nn_index", "beta", "lam", "M", "U", "norm_u", "Xg",
        "pos_logit", "S", "neg_mask", "lse", "p_pos", "loss",
    )

    def contexts(self) -> list[VpgContext]:
        return [
            VpgContext(
                self.X[i], self.C[i],
                float(self.theta_i[i]), float(self.theta_nn[i]),
                float(self.beta), float(self.M[i]),
            )
            for i in range(self.X.shape[0])
        ]


def _check_batch(batch: EmbeddingBatch) -> None:
    if batch.m < 2:
        raise SingleClassBatch("need at least two classes to form negatives")


def _nearest_negative_per_class(X, y, norm_x, classes, C_by_class, norm_c_by_class):
    """theta_nn and the attaining index for every class center, over the batch."""
    cos = (C_by_class @ X.T) / (norm_c_by_class[:, None] * norm_x[None, :])
    ang = np.arccos(np.clip(cos, -1.0, 1.0))
    ang[classes[:, None] == y[None, :]] = np.inf  # same-class samples are not negatives
    nn_idx = np.argmin(ang, axis=1)  # first occurrence wins ties
    return ang[np.arange(len(classes)), nn_idx], nn_idx


def _almn_forward(batch, bank, beta, lam, theta_nn_override=None, compute_nn=True):
    """Evaluate the center-anchored softmax with virtual points of strength beta."""
    _check_batch(batch)
    st = _ForwardState()
    X = batch.embeddings
    y = batch.labels
    N = batch.size
    norm_x = np.linalg.norm(X, axis=1)
    if np.any(norm_x <= EPS):
        raise DegenerateVector("batch contains a (near-)zero embedding")
    C = bank.matrix_for(y)
    norm_c = np.linalg.norm(C, axis=1)
    if np.any(norm_c <= EPS):
        raise DegenerateVector("a class center has (near-)zero norm")

    w = np.clip(np.sum(X * C, axis=1) / (norm_x * norm_c), -1.0, 1.0)
    theta_i = np.arccos(w)

    if theta_nn_override is not None:
        theta_nn = np.broadcast_to(
            np.asarray(theta_nn_override, dtype=np.float64), (N,)
        ).copy()
        nn_index = np.full(N, -1, dtype=np.int64)
    elif compute_nn:
        classes = batch.classes
        C_by_class = np.stack([bank.get(z) for z in classes])
        norm_c_by_class = np.linalg.norm(C_by_class, axis=1)
        tnn_cls, nn_cls = _nearest_negative_per_class(
            X, y, norm_x, classes, C_by_class, norm_c_by_class
        )
        pos = np.searchsorted(classes, y)
        theta_nn = tnn_cls[pos]
        nn_index = nn_cls[pos]
    else:
        theta_nn = theta_i.copy()  # theta* = 0: no offset, pure center objective
        nn_index = np.full(N, -1, dtype=np.int64)

    v = X - C
    q = np.linalg.norm(v, axis=1)
    active = (q > EPS) if beta > 0 else np.zeros(N, dtype=bool)
    q_safe = np.where(q > EPS, q, 1.0)
    chord = norm_x * np.sqrt(np.clip(2.0 - 2.0 * np.cos(theta_nn - theta_i), 0.0, None))
    M = np.where(active, beta * chord / q_safe, 0.0)
    U = (M + 1.0)[:, None] * X - M[:, None] * C
    norm_u = np.linalg.norm(U, axis=1)
    Xg = U * (norm_x / norm_u)[:, None]
    if not np.all(np.isfinite(Xg)):
        raise NonFiniteResult("virtual point overflowed")

    pos_logit = np.sum(Xg * C, axis=1)
    S = C @ X.T  # S[i, j] = x_j . c_{y_i}
    neg_mask = y[None, :] != y[:, None]

    S_neg = np.where(neg_mask, S, -np.inf)
    row_max = np.maximum(pos_logit, S_neg.max(axis=1))
    sumexp = np.exp(pos_logit - row_max) + np.sum(
        np.exp(S_neg - row_max[:, None]), axis=1
    )
    lse = row_max + np.log(sumexp)

    st.X, st.y, st.C = X, y, C
    st.norm_x, st.norm_c = norm_x, norm_c
    st.v, st.q, st.w = v, q, w
    st.theta_i, st.theta_nn, st.nn_index = theta_i, theta_nn, nn_index
    st.beta, st.lam = float(beta), float(lam)
    st.M, st.U, st.norm_u, st.Xg = M, U, norm_u, Xg
    st.pos_logit, st.S, st.neg_mask, st.lse = pos_logit, S, neg_mask, lse
    st.p_pos = np.exp(pos_logit - lse)
    st.loss = float(
        np.mean(lse - pos_logit) + lam / (2.0 * N) * np.sum(norm_x**2)
    )
    return st


def center_npair_loss(batch: EmbeddingBatch, bank: CenterBank, lam: float) -> float:
    """Softmax cross-entropy of each sample against its own class center,
    with all differently-labeled batch samples as negatives."""
    return _almn_forward(batch, bank, beta=0.0, lam=lam, compute_nn=False).loss


def almn_loss(batch, bank, config: LossConfig, theta_nn_override=None):
    """Center-anchored loss evaluated at the virtual points.

    Each anchor is replaced by its virtual boundary point before the
    positive logit is formed; negatives and the regularization term use
    the original embeddings. Returns (loss, per-anchor VpgContext list).

    theta_nn_override fixes the per-anchor nearest-negative angles instead
    of searching the batch; gradient verification uses this to pin the
    angles the backward pass treats as constants.
    """
    if config.margin_mode not in ("almn", "baseline"):
        raise ValueError("almn_loss expects margin_mode 'almn' or 'baseline'")
    st = _almn_forward(
        batch, bank, beta=config.beta, lam=config.lam,
        theta_nn_override=theta_nn_override,
    )
    return st.loss, st.contexts()


def psi_margin(theta: np.ndarray, m_angle: int) -> np.ndarray:
    """Piecewise multiple-angle margin: (-1)^k cos(m theta) - 2k on
    [k pi/m, (k+1) pi/m]. Continuous at the branch boundaries."""
    theta = np.asarray(theta, dtype=np.float64)
    k = np.clip(np.floor(theta * m_angle / math.pi), 0, m_angle - 1)
    return (-1.0) ** k * np.cos(m_angle * theta) - 2.0 * k


def fixed_margin_loss(batch, bank, lam: float, m_angle: int) -> float:
    """Ablation with a fixed angle-multiplying margin on the positive logit.

    The positive logit is ||x_i|| ||c|| psi(theta_i); negatives are the
    plain x_j . c logits. m_angle = 1 reduces to the center objective.
    """
    if m_angle < 1:
        raise ValueError("m_angle must be >= 1")
    st = _almn_forward(batch, bank, beta=0.0, lam=lam, compute_nn=False)
    pos_logit = st.norm_x * st.norm_c * psi_margin(st.theta_i, m_angle)
    S_neg = np.where(st.neg_mask, st.S, -np.inf)
    row_max = np.maximum(pos_logit, S_neg.max(axis=1))
    sumexp = np.exp(pos_logit - row_max) + np.sum(
        np.exp(S_neg - row_max[:, None]), axis=1
    )
    lse = row_max + np.log(sumexp)
    N = batch.size
    return float(np.mean(lse - pos_logit) + lam / (2.0 * N) * np.sum(st.norm_x**2))


def npair_loss(batch: EmbeddingBatch, lam: float) -> float:
    """Pairwise N-pair objective without centers.

    Within each class, samples pair up consecutively in batch order
    (first with second, third with fourth, ...); the second of each pair
    is the anchor, the first its positive. n must be even.
    """
    _check_batch(batch)
    if batch.n % 2 != 0:
        raise OddGroupSize(
            f"pairing needs an even per-class count, got n = {batch.n}"
        )
    X = batch.embeddings
    y = batch.labels
    N = batch.size
    norm_x = np.linalg.norm(X, axis=1)
    total = 0.0
    for z in batch.classes:
        members = np.flatnonzero(y == z)
        negs = X[y != z]
        for a, b in zip(members[0::2], members[1::2]):
            anchor, positive = X[b], X[a]
            pos_logit = float(positive @ anchor)
            neg_logits = negs @ anchor
            row_max = max(pos_logit, float(neg_logits.max()))
            lse = row_max + math.log(
                math.exp(pos_logit - row_max) + np.sum(np.exp(neg_logits - row_max))
            )
            total += lse - pos_logit
    return float(total / N + lam / (2.0 * N) * np.sum(norm_x**2))
