"""Retrieval and clustering evaluation: Recall@K over cosine neighbors,
normalized mutual information, and pairwise F1.

Protocol notes, since absolute clustering numbers depend on the variant:
k-means runs with k = number of distinct test labels (unless overridden),
seeded k-means++ initialization, 20 restarts keeping the best inertia;
NMI normalizes mutual information by the arithmetic mean of the two
partition entropies; F1 is the harmonic mean of pairwise precision and
recall, a pair counting as positive when it shares a cluster / a label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVector, KTooLarge, TooFewItems
from .geometry import EPS


@dataclass
class RetrievalReport:
    """Evaluation results for one test split."""

    recall_at: dict[int, float]
    nmi: float
    f1: float
    num_queries: int
    k_clusters: int

    def to_json(self) -> str:
        payload = {
            **{f"recall@{k}": self.recall_at[k] for k in sorted(self.recall_at)},
            "nmi": self.nmi,
            "f1": self.f1,
            "num_queries": self.num_queries,
            "k_clusters": self.k_clusters,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def cosine_similarities(embeddings: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity matrix; raises on zero-norm rows."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    norms = np.linalg.norm(embeddings, axis=1)
    if np.any(norms <= EPS):
        raise DegenerateVector("zero-norm embedding in retrieval")
    unit = embeddings / norms[:, None]
    return unit @ unit.T


def rank_neighbors(embeddings: np.ndarray) -> np.ndarray:
    """Per-query candidate ranking by descending cosine similarity.

    Self-matches are excluded; ties break toward the lower item index
    (stable sort on the negated similarities).
    """
    sims = cosine_similarities(embeddings)
    np.fill_diagonal(sims, -np.inf)
    return np.argsort(-sims, axis=1, kind="stable")


def recall_at_k(embeddings, labels, ks) -> dict[int, float]:
    """Fraction of queries whose top-K cosine neighbors contain their label."""
    labels = np.asarray(labels)
    n = labels.shape[0]
    if n < 2:
        raise TooFewItems("retrieval needs at least two items")
    ks = [int(k) for k in ks]
    for k in ks:
        if not 1 <= k < n:
            raise KTooLarge(f"K = {k} must be in [1, {n - 1}]")
    order = rank_neighbors(embeddings)
    hits = labels[order] == labels[:, None]
    return {k: float(np.mean(hits[:, :k].any(axis=1))) for k in ks}


def neighbor_table(embeddings, labels, k: int):
    """(query, neighbor, similarity, same_label) rows for the top-k neighbors."""
    sims = cosine_similarities(embeddings)
    np.fill_diagonal(sims, -np.inf)
    order = np.argsort(-sims, axis=1, kind="stable")[:, :k]
    labels = np.asarray(labels)
    rows = []
    for qi in range(order.shape[0]):
        for nb in order[qi]:
            rows.append((qi, int(nb), float(sims[qi, nb]), bool(labels[qi] == labels[nb])))
    return rows


def _sq_dists(X, x_sq, centers):
    """Squared distances to each center via the expanded inner-product form."""
    c_sq = np.sum(centers**2, axis=1)
    return x_sq[:, None] - 2.0 * (X @ centers.T) + c_sq[None, :]


def _kmeans_pp_init(X, x_sq, k, rng):
    """Seeded k-means++ center selection."""
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    dist_sq = np.clip(_sq_dists(X, x_sq, centers[:1])[:, 0], 0.0, None)
    for i in range(1, k):
        total = dist_sq.sum()
        if total > 0:
            idx = rng.choice(n, p=dist_sq / total)
        else:
            idx = rng.integers(n)  # all points coincide with chosen centers
        centers[i] = X[idx]
        dist_sq = np.minimum(
            dist_sq, np.clip(_sq_dists(X, x_sq, centers[i:i + 1])[:, 0], 0.0, None)
        )
    return centers


def kmeans(X, k, rng, max_iter=100):
    """Lloyd iterations from a k-means++ start; empty clusters are reseeded
    from the point farthest from its assigned center. Returns
    (assignments, inertia)."""
    X = np.asarray(X, dtype=np.float64)
    x_sq = np.sum(X**2, axis=1)
    centers = _kmeans_pp_init(X, x_sq, k, rng)
    assign = None
    for _ in range(max_iter):
        d = _sq_dists(X, x_sq, centers)
        new_assign = np.argmin(d, axis=1)
        point_d = d[np.arange(X.shape[0]), new_assign]
        for c in range(k):
            members = new_assign == c
            if members.any():
                centers[c] = X[members].mean(axis=0)
            else:
                far = int(np.argmax(point_d))
                centers[c] = X[far]
                new_assign[far] = c
                point_d[far] = 0.0
        if assign is not None and np.array_equal(assign, new_assign):
            break
        assign = new_assign
    d = _sq_dists(X, x_sq, centers)
    inertia = float(np.clip(d[np.arange(X.shape[0]), assign], 0.0, None).sum())
    return assign, inertia


def _contingency(a, b):
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _entropy(counts, n):
    counts = counts[counts > 0]
    return float(np.sum(counts / n * (np.log(n) - np.log(counts))))


def normalized_mutual_information(a, b) -> float:
    """Mutual information normalized by the arithmetic mean of entropies.

    A pair of identical-up-to-relabeling partitions scores exactly 1;
    if either partition is a single block the score is exactly 0 (unless
    both are, which counts as a perfect match).
    """
    table = _contingency(a, b)
    n = table.sum()
    if table.shape == (1, 1):
        return 1.0
    row = table.sum(axis=1)
    col = table.sum(axis=0)
    if (row > 0).sum() == 1 or (col > 0).sum() == 1:
        return 0.0
    if np.all((table > 0).sum(axis=1) <= 1) and np.all((table > 0).sum(axis=0) <= 1):
        return 1.0  # one-to-one block matching
    mi = 0.0
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            nij = table[i, j]
            if nij > 0:
                mi += nij / n * (
                    np.log(nij) + np.log(n) - np.log(row[i]) - np.log(col[j])
                )
    denom = 0.5 * (_entropy(row, n) + _entropy(col, n))
    return float(mi / denom)


def pairwise_f1(clusters, labels) -> float:
    """Harmonic mean of pairwise precision/recall over all item pairs."""
    table = _contingency(clusters, labels)

    def pairs(x):
        return int(np.sum(x.astype(np.int64) * (x.astype(np.int64) - 1) // 2))

    tp = pairs(table.ravel())
    same_cluster = pairs(table.sum(axis=1))
    same_label = pairs(table.sum(axis=0))
    if tp == 0:
        return 0.0
    precision = tp / same_cluster
    recall = tp / same_label
    return float(2.0 * precision * recall / (precision + recall))


def cluster_and_score(embeddings, labels, k_clusters=None, seed=0, restarts=20):
    """k-means the embeddings and score the partition against the labels.

    Returns (nmi, f1). k defaults to the number of distinct labels.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    k = int(k_clusters) if k_clusters is not None else len(np.unique(labels))
    if k < 2:
        raise ValueError("k_clusters must be at least 2")
    if embeddings.shape[0] < k:
        raise TooFewItems(f"{embeddings.shape[0]} items cannot form {k} clusters")
    seeds = np.random.SeedSequence(seed).spawn(restarts)
    best_assign, best_inertia = None, np.inf
    for ss in seeds:
        assign, inertia = kmeans(embeddings, k, np.random.default_rng(ss))
        if inertia < best_inertia:
            best_assign, best_inertia = assign, inertia
    return (
        normalized_mutual_information(best_assign, labels),
        pairwise_f1(best_assign, labels),
    )


def evaluate(embeddings, labels, ks, k_clusters=None, seed=0) -> RetrievalReport:
    """Full retrieval + clustering report for one embedded split."""
    recall = recall_at_k(embeddings, labels, ks)
    k = int(k_clusters) if k_clusters is not None else len(np.unique(labels))
    nmi, f1 = cluster_and_score(embeddings, labels, k_clusters=k, seed=seed)
    return RetrievalReport(
        recall_at=recall,
        nmi=nmi,
        f1=f1,
        num_queries=int(np.asarray(labels).shape[0]),
        k_clusters=k,
    )
