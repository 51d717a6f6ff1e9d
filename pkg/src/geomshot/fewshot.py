"""Prototype classification head and episode losses.

Prototypes are per-class means of support embeddings; queries are scored
by softmax over negative squared Euclidean distances. The contrastive
loss operates on L2-normalized embeddings (prototype distances stay
unnormalized) and uses the mean-over-positives-outside-the-log form:
anchors without a same-label positive are skipped.

The *_grad companions return analytic gradients with respect to the
(unnormalized) embeddings so training can backpropagate through the
encoder; they are verified against central finite differences in the
test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoPositivesError, ShapeError

DEFAULT_SUPCON_WEIGHT = 0.5
DEFAULT_TEMPERATURE = 0.07


@dataclass
class LossBreakdown:
    nll: float
    supcon: float
    supcon_weight: float = DEFAULT_SUPCON_WEIGHT
    temperature: float = DEFAULT_TEMPERATURE

    @property
    def total(self) -> float:
        return self.nll + self.supcon_weight * self.supcon


def compute_prototypes(support_emb: np.ndarray, labels: np.ndarray, n_way: int) -> np.ndarray:
    """Per-class means of support embeddings, rows ordered by class label."""
    support_emb = np.asarray(support_emb, dtype=np.float64)
    labels = np.asarray(labels)
    if support_emb.ndim != 2 or support_emb.shape[0] != labels.shape[0]:
        raise ShapeError("support embeddings and labels disagree")
    protos = np.empty((n_way, support_emb.shape[1]))
    for c in range(n_way):
        mask = labels == c
        if not mask.any():
            raise ShapeError(f"no support embeddings for class {c}")
        protos[c] = support_emb[mask].mean(axis=0)
    return protos


def squared_distances(query_emb: np.ndarray, protos: np.ndarray) -> np.ndarray:
    diff = query_emb[:, None, :] - protos[None, :, :]
    return (diff**2).sum(axis=2)


def proto_log_probs(query_emb: np.ndarray, protos: np.ndarray) -> np.ndarray:
    """Row-normalized log-probabilities from negative squared distances."""
    logits = -squared_distances(np.asarray(query_emb, dtype=np.float64), protos)
    shift = logits.max(axis=1, keepdims=True)
    lse = shift + np.log(np.exp(logits - shift).sum(axis=1, keepdims=True))
    return logits - lse


def protonet_nll(log_probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of the true labels."""
    labels = np.asarray(labels)
    rows = np.arange(log_probs.shape[0])
    return float(-log_probs[rows, labels].mean())


def classify(query_emb: np.ndarray, protos: np.ndarray) -> np.ndarray:
    """Nearest prototype by squared distance; ties go to the lowest class."""
    return squared_distances(np.asarray(query_emb, dtype=np.float64), protos).argmin(axis=1)


def protonet_loss_and_grads(
    support_emb: np.ndarray,
    support_labels: np.ndarray,
    query_emb: np.ndarray,
    query_labels: np.ndarray,
    n_way: int,
) -> tuple[float, np.ndarray, np.ndarray]:
    """NLL plus gradients w.r.t. support and query embeddings.

    The support gradient flows through the prototype means (each support
    row receives its class-prototype gradient divided by the class count).
    """
    support_emb = np.asarray(support_emb, dtype=np.float64)
    query_emb = np.asarray(query_emb, dtype=np.float64)
    support_labels = np.asarray(support_labels)
    query_labels = np.asarray(query_labels)
    protos = compute_prototypes(support_emb, support_labels, n_way)
    log_p = proto_log_probs(query_emb, protos)
    loss = protonet_nll(log_p, query_labels)

    m = query_emb.shape[0]
    g = np.exp(log_p)
    g[np.arange(m), query_labels] -= 1.0
    g /= m  # d loss / d logits, logits = -squared distance

    d_dist = -g
    row_sum = d_dist.sum(axis=1, keepdims=True)
    d_query = 2.0 * (query_emb * row_sum - d_dist @ protos)
    col_sum = d_dist.sum(axis=0)[:, None]
    d_protos = 2.0 * (protos * col_sum - d_dist.T @ query_emb)

    d_support = np.zeros_like(support_emb)
    for c in range(n_way):
        mask = support_labels == c
        d_support[mask] = d_protos[c] / mask.sum()
    return loss, d_support, d_query


def _normalize_rows(emb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    norms = np.maximum(norms, 1e-12)
    return emb / norms, norms


def _supcon_terms(emb: np.ndarray, labels: np.ndarray, temperature: float):
    emb = np.asarray(emb, dtype=np.float64)
    labels = np.asarray(labels)
    b = emb.shape[0]
    if b < 2:
        raise ShapeError("contrastive loss needs at least 2 embeddings")
    z, norms = _normalize_rows(emb)
    sim = z @ z.T / temperature
    off_diag = ~np.eye(b, dtype=bool)
    pos = (labels[:, None] == labels[None, :]) & off_diag
    anchors = pos.any(axis=1)
    if not anchors.any():
        raise NoPositivesError("no anchor has a same-label positive")
    # log denominator over a != i, numerically stabilized
    neg_inf = -np.inf
    masked = np.where(off_diag, sim, neg_inf)
    shift = masked.max(axis=1, keepdims=True)
    lse = shift + np.log(np.exp(masked - shift).sum(axis=1, keepdims=True))
    return z, norms, sim, off_diag, pos, anchors, lse


def supcon_loss(emb: np.ndarray, labels: np.ndarray, temperature: float = DEFAULT_TEMPERATURE) -> float:
    z, _, sim, _, pos, anchors, lse = _supcon_terms(emb, labels, temperature)
    log_ratio = sim - lse
    per_anchor = -(log_ratio * pos).sum(axis=1)[anchors] / pos.sum(axis=1)[anchors]
    return float(per_anchor.mean())


def supcon_loss_and_grad(
    emb: np.ndarray, labels: np.ndarray, temperature: float = DEFAULT_TEMPERATURE
) -> tuple[float, np.ndarray]:
    """Loss plus gradient w.r.t. the unnormalized embeddings.

    The loss is non-differentiable at a zero embedding; norms are floored
    at 1e-12 (the mainstream-framework convention), so callers must keep
    embeddings away from exact zero. Any realistic encoder width does.
    """
    z, norms, sim, off_diag, pos, anchors, lse = _supcon_terms(emb, labels, temperature)
    log_ratio = sim - lse
    n_pos = pos.sum(axis=1)
    n_anchors = int(anchors.sum())
    loss = float((-(log_ratio * pos).sum(axis=1)[anchors] / n_pos[anchors]).mean())

    # d loss / d sim[i, a] = (softmax_i(a) - 1[a in P(i)] / |P(i)|) / |I|
    softmax = np.where(off_diag, np.exp(sim - lse), 0.0)
    w = np.zeros_like(sim)
    w[anchors] = softmax[anchors] - pos[anchors] / n_pos[anchors, None]
    w /= n_anchors
    # sim is z @ z.T / tau: accumulate both row and column occurrences.
    d_z = (w + w.T) @ z / temperature
    # through the row normalization z = e / |e|
    d_emb = (d_z - z * (d_z * z).sum(axis=1, keepdims=True)) / norms
    return loss, d_emb
