"""Mini-batch container: m distinct classes with n samples each."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BatchLayoutError


@dataclass
class EmbeddingBatch:
    """Labeled embedding vectors forming one training batch.

    The layout invariant is m distinct classes contributing exactly n
    samples each (any sample order). Total size N = m * n is the
    normalizer used by every loss.
    """

    embeddings: np.ndarray  # (N, d) float64
    labels: np.ndarray      # (N,) int64
    m: int = field(init=False)
    n: int = field(init=False)

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.embeddings.ndim != 2:
            raise BatchLayoutError("embeddings must be a (N, d) matrix")
        if self.labels.shape != (self.embeddings.shape[0],):
            raise BatchLayoutError("labels must be one per embedding row")
        if self.embeddings.shape[0] == 0:
            raise BatchLayoutError("batch is empty")
        if not np.all(np.isfinite(self.embeddings)):
            raise BatchLayoutError("embeddings must be finite")
        classes, counts = np.unique(self.labels, return_counts=True)
        if counts.min() != counts.max():
            raise BatchLayoutError(
                f"every class must contribute the same number of samples, "
                f"got counts {dict(zip(classes.tolist(), counts.tolist()))}"
            )
        self.m = int(classes.size)
        self.n = int(counts[0])

    @property
    def size(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def with_embeddings(self, embeddings: np.ndarray) -> "EmbeddingBatch":
        """Same labels, replaced embeddings (used by finite-difference probes)."""
        return EmbeddingBatch(embeddings, self.labels.copy())
